#include "taxoria/generation.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "taxoria/error.hpp"
#include "taxoria/http.hpp"

namespace taxoria {

using nlohmann::json;

namespace {

constexpr std::string_view kDefaultTemplate =
    "You are extending a taxonomy of classes.\n"
    "Path from the root to the current class: {{path}}\n"
    "Name the 3 most relevant direct subclasses of \"{{node}}\".\n"
    "Each subclass must be a class (a category of things), not an instance, a named entity "
    "or an example.\n"
    "Respond only with JSON in exactly this shape and nothing else:\n"
    "{\"children\": [\"...\", \"...\", \"...\"]}\n";

constexpr std::string_view kCorrective =
    "\nYour previous answer could not be parsed. Reply with only the JSON object "
    "{\"children\": [\"...\", \"...\", \"...\"]}.\n";

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorCode::FileNotFound, "cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void replace_all(std::string& s, std::string_view from, std::string_view to) {
  for (std::size_t pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size()))
    s.replace(pos, from.size(), to);
}

// A rung "succeeds" once a `children` array is located, even if empty.
std::optional<std::vector<std::string>> children_from_json(std::string_view text) {
  json j = json::parse(text, nullptr, /*allow_exceptions=*/false);
  if (!j.is_object()) return std::nullopt;
  auto it = j.find("children");
  if (it == j.end() || !it->is_array()) return std::nullopt;
  std::vector<std::string> out;
  for (const auto& e : *it)
    if (e.is_string()) out.push_back(e.get<std::string>());
  return out;
}

// Balanced object starting at `start`, honouring string literals.
std::optional<std::string_view> balanced_object_at(std::string_view text, std::size_t start) {
  int depth = 0;
  bool in_string = false;
  for (std::size_t i = start; i < text.size(); ++i) {
    char c = text[i];
    if (in_string) {
      if (c == '\\') ++i;
      else if (c == '"') in_string = false;
      continue;
    }
    if (c == '"') in_string = true;
    else if (c == '{') ++depth;
    else if (c == '}' && --depth == 0) return text.substr(start, i - start + 1);
  }
  return std::nullopt;
}

std::optional<std::vector<std::string>> embedded_object(std::string_view text) {
  for (auto start = text.find('{'); start != std::string_view::npos; start = text.find('{', start + 1))
    if (auto obj = balanced_object_at(text, start))
      if (auto r = children_from_json(*obj)) return r;
  return std::nullopt;
}

// Body of the first ``` fenced block; an unterminated fence runs to the end.
std::optional<std::string> fenced_block(std::string_view text) {
  auto open = text.find("```");
  if (open == std::string_view::npos) return std::nullopt;
  auto body = text.find('\n', open);
  if (body == std::string_view::npos) return std::nullopt;
  ++body;
  auto close = text.find("```", body);
  return std::string(text.substr(body, close == std::string_view::npos ? std::string_view::npos : close - body));
}

std::optional<std::vector<std::string>> quoted_after_children(std::string_view text) {
  std::string lower(text);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  auto pos = lower.find("children");
  if (pos == std::string::npos) return std::nullopt;
  std::size_t i = pos + 8;
  if (i < text.size() && text[i] == '"') ++i;
  std::vector<std::string> names;
  while (i < text.size()) {
    char c = text[i];
    if (c == ']' || c == '}') break;
    if (c != '"') {
      ++i;
      continue;
    }
    std::string cur;
    bool closed = false;
    for (++i; i < text.size(); ++i) {
      if (text[i] == '\\' && i + 1 < text.size()) {
        cur += text[++i];
      } else if (text[i] == '"') {
        closed = true;
        ++i;
        break;
      } else if (text[i] == '\n') {
        break;
      } else {
        cur += text[i];
      }
    }
    if (!closed) break;
    names.push_back(std::move(cur));
  }
  if (names.empty()) return std::nullopt;
  return names;
}

std::vector<std::string> clean_names(const std::vector<std::string>& raw) {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const auto& r : raw) {
    auto name = trim(r);
    if (name.empty()) continue;
    if (seen.insert(fold_name(name)).second) out.push_back(std::move(name));
  }
  return out;
}

}  // namespace

std::string HttpLlmClient::complete(const std::string& model_id, const std::string& prompt) {
  json body = {{"model", model_id},
               {"prompt", prompt},
               {"stream", false},
               {"format", "json"},
               {"options", {{"temperature", cfg_.temperature}}}};
  std::string last_error;
  for (int attempt = 0; attempt <= cfg_.max_retries; ++attempt) {
    try {
      auto res = http::post(cfg_.base_url + "/api/generate", body.dump(), "application/json",
                            cfg_.timeout);
      if (res.status != 200) {
        last_error = "HTTP " + std::to_string(res.status) + ": " + res.body;
        continue;
      }
      json j = json::parse(res.body, nullptr, false);
      if (!j.is_object() || !j.contains("response") || !j["response"].is_string()) {
        last_error = "response field missing";
        continue;
      }
      return j["response"].get<std::string>();
    } catch (const Error& e) {
      last_error = e.what();
    }
  }
  throw Error(ErrorCode::LlmUnreachable, last_error);
}

std::vector<std::string> HttpLlmClient::list_models() {
  http::Response res;
  try {
    res = http::get(cfg_.base_url + "/api/tags", {}, cfg_.timeout);
  } catch (const Error& e) {
    throw Error(ErrorCode::LlmUnreachable, e.what());
  }
  if (res.status != 200) throw Error(ErrorCode::LlmUnreachable, "HTTP " + std::to_string(res.status));
  json j = json::parse(res.body, nullptr, false);
  std::vector<std::string> out;
  if (j.is_object() && j.contains("models") && j["models"].is_array())
    for (const auto& m : j["models"])
      if (m.is_object() && m.contains("name") && m["name"].is_string())
        out.push_back(m["name"].get<std::string>());
  return out;
}

std::string replay_key(std::string_view prompt) {
  return http::sha256_hex(std::string(prompt)) + ".txt";
}

ReplayLlmClient::ReplayLlmClient(std::filesystem::path dir) : dir_(std::move(dir)) {
  if (!std::filesystem::is_directory(dir_))
    throw Error(ErrorCode::FileNotFound, "replay directory not found: " + dir_.string());
}

std::string ReplayLlmClient::complete(const std::string&, const std::string& prompt) {
  auto p = dir_ / replay_key(prompt);
  if (!std::filesystem::exists(p))
    throw Error(ErrorCode::LlmUnreachable, "no recorded response " + p.filename().string());
  return read_file(p);
}

std::vector<std::string> ReplayLlmClient::list_models() {
  auto p = dir_ / "models.json";
  if (!std::filesystem::exists(p)) return {};
  json j = json::parse(read_file(p), nullptr, false);
  std::vector<std::string> out;
  if (j.is_array())
    for (const auto& m : j)
      if (m.is_string()) out.push_back(m.get<std::string>());
  return out;
}

RecordingLlmClient::RecordingLlmClient(std::shared_ptr<LlmClient> inner, std::filesystem::path dir)
    : inner_(std::move(inner)), dir_(std::move(dir)) {
  std::filesystem::create_directories(dir_);
}

std::string RecordingLlmClient::complete(const std::string& model_id, const std::string& prompt) {
  auto response = inner_->complete(model_id, prompt);
  std::lock_guard lock(mu_);
  std::ofstream out(dir_ / replay_key(prompt), std::ios::binary | std::ios::trunc);
  out << response;
  return response;
}

std::vector<std::string> RecordingLlmClient::list_models() {
  auto models = inner_->list_models();
  std::lock_guard lock(mu_);
  std::ofstream out(dir_ / "models.json", std::ios::trunc);
  out << json(models).dump();
  return models;
}

std::string_view default_prompt_template() { return kDefaultTemplate; }

std::string load_prompt_template(const std::filesystem::path& path) {
  auto text = read_file(path);
  if (text.find("{{node}}") == std::string::npos)
    throw Error(ErrorCode::FormatError, "prompt template lacks {{node}}: " + path.string());
  return text;
}

std::string build_prompt(std::string_view node_name, std::span<const std::string> ancestor_path,
                         std::string_view tmpl) {
  std::string path;
  for (const auto& segment : ancestor_path) {
    if (!path.empty()) path += " > ";
    path += segment;
  }
  if (ancestor_path.empty() || ancestor_path.back() != node_name) {
    if (!path.empty()) path += " > ";
    path += node_name;
  }
  std::string out(tmpl);
  replace_all(out, "{{path}}", path);
  replace_all(out, "{{node}}", node_name);
  return out;
}

std::string_view to_string(ParseRung r) {
  switch (r) {
    case ParseRung::Strict: return "strict";
    case ParseRung::Fenced: return "fenced";
    case ParseRung::Embedded: return "embedded";
    case ParseRung::Lenient: return "lenient";
  }
  return "?";
}

ParsedChildren parse_children(std::string_view raw) {
  if (auto r = children_from_json(raw)) return {clean_names(*r), ParseRung::Strict};
  if (auto block = fenced_block(raw))
    if (auto r = children_from_json(*block)) return {clean_names(*r), ParseRung::Fenced};
  if (auto r = embedded_object(raw)) return {clean_names(*r), ParseRung::Embedded};
  if (auto r = quoted_after_children(raw)) {
    auto names = clean_names(*r);
    if (!names.empty()) return {std::move(names), ParseRung::Lenient};
  }
  throw Error(ErrorCode::UnparseableResponse, "no children array found in response");
}

std::vector<std::string> parse_children_json(std::string_view raw) { return parse_children(raw).names; }

CandidateBatch generate_children(LlmClient& client, const GenerationOptions& opts,
                                 std::string_view node_name,
                                 std::span<const std::string> ancestor_path) {
  CandidateBatch batch;
  batch.parent_path.assign(ancestor_path.begin(), ancestor_path.end());
  if (batch.parent_path.empty() || batch.parent_path.back() != node_name)
    batch.parent_path.emplace_back(node_name);
  batch.parent_depth = batch.parent_path.size() - 1;
  batch.model_id = opts.model_id;

  const auto prompt = build_prompt(node_name, ancestor_path, opts.prompt_template);
  std::string corrective;
  for (int attempt = 0;; ++attempt) {
    batch.attempts = static_cast<std::size_t>(attempt) + 1;
    batch.raw_response = client.complete(opts.model_id, prompt + corrective);
    try {
      batch.candidates = parse_children_json(batch.raw_response);
      break;
    } catch (const Error& e) {
      if (attempt >= opts.max_retries) throw;
      corrective = std::string(kCorrective);
    }
  }
  if (batch.candidates.size() > kMaxCandidates) batch.candidates.resize(kMaxCandidates);
  if (batch.candidates.empty())
    throw Error(ErrorCode::EmptyBatch, "no usable candidates for '" + std::string(node_name) + "'");
  return batch;
}

std::vector<std::string> list_models(LlmClient& client) { return client.list_models(); }

}  // namespace taxoria

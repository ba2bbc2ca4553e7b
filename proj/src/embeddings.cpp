#include "taxoria/embeddings.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "taxoria/error.hpp"
#include "taxoria/http.hpp"
#include "taxoria/taxonomy.hpp"

namespace taxoria {

namespace {

bool parse_double(std::string_view s, double& out) {
  auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size() && std::isfinite(out);
}

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) out.push_back(line.substr(i, j - i));
    i = j;
  }
  return out;
}

[[noreturn]] void format_error(const std::filesystem::path& p, std::size_t line, const std::string& what) {
  throw Error(ErrorCode::FormatError, p.string() + ":" + std::to_string(line) + ": " + what);
}

}  // namespace

StaticWordVectors::StaticWordVectors(std::size_t dimension, std::unordered_map<std::string, Vector> vocab)
    : dimension_(dimension), vocab_(std::move(vocab)) {
  if (dimension_ == 0) throw Error(ErrorCode::FormatError, "dimension must be positive");
  for (const auto& [token, vec] : vocab_)
    if (vec.size() != dimension_)
      throw Error(ErrorCode::DimensionMismatch, "vector for '" + token + "' has wrong dimension");
}

const Vector* StaticWordVectors::lookup(std::string_view token) const {
  auto it = vocab_.find(std::string(token));
  return it == vocab_.end() ? nullptr : &it->second;
}

std::vector<std::string> tokenize_term(std::string_view term) {
  std::vector<std::string> tokens;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) tokens.push_back(std::move(cur));
    cur.clear();
  };
  for (std::size_t i = 0; i < term.size(); ++i) {
    const auto c = static_cast<unsigned char>(term[i]);
    if (std::isspace(c) || c == '-' || c == '_') {
      flush();
      continue;
    }
    if (std::isupper(c) && i > 0) {
      const auto prev = static_cast<unsigned char>(term[i - 1]);
      const bool next_lower = i + 1 < term.size() && std::islower(static_cast<unsigned char>(term[i + 1]));
      // "OnlineStore" and the tail of "HTMLParser" both split before the capital.
      if (std::islower(prev) || std::isdigit(prev) || (std::isupper(prev) && next_lower)) flush();
    }
    cur += static_cast<char>(std::tolower(c));
  }
  flush();
  return tokens;
}

TermVector StaticWordVectors::embed(std::string_view term) const {
  TermVector out{std::string(term), Vector(dimension_, 0.0), 0.0};
  // A single token stored verbatim (case preserved) wins over segmentation.
  if (const Vector* exact = lookup(trim(term))) {
    out.vector = *exact;
    out.coverage = 1.0;
    return out;
  }
  const auto tokens = tokenize_term(term);
  std::size_t found = 0;
  for (const auto& t : tokens) {
    if (const Vector* v = lookup(t)) {
      ++found;
      for (std::size_t k = 0; k < dimension_; ++k) out.vector[k] += (*v)[k];
    }
  }
  if (found == 0) throw Error(ErrorCode::OutOfVocabulary, "'" + std::string(term) + "' is out of vocabulary");
  if (found == 1 && tokens.size() == 1) {
    out.vector = *lookup(tokens.front());
  } else {
    for (auto& x : out.vector) x /= static_cast<double>(found);
  }
  out.coverage = static_cast<double>(found) / static_cast<double>(tokens.size());
  return out;
}

StaticWordVectors load_static_vectors(const std::filesystem::path& path, std::optional<std::size_t> limit) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::FileNotFound, "cannot open " + path.string());
  std::unordered_map<std::string, Vector> vocab;
  std::size_t dimension = 0;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (limit && vocab.size() >= *limit) break;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto fields = split_ws(line);
    if (fields.empty()) continue;
    if (lineno == 1 && fields.size() == 2) {
      std::size_t count = 0, dim = 0;
      auto a = std::from_chars(fields[0].data(), fields[0].data() + fields[0].size(), count);
      auto b = std::from_chars(fields[1].data(), fields[1].data() + fields[1].size(), dim);
      if (a.ec == std::errc() && b.ec == std::errc() && a.ptr == fields[0].data() + fields[0].size() &&
          b.ptr == fields[1].data() + fields[1].size()) {
        if (dim == 0) format_error(path, lineno, "header dimension is zero");
        dimension = dim;
        continue;
      }
    }
    if (fields.size() < 2) format_error(path, lineno, "entry has no vector components");
    const std::size_t arity = fields.size() - 1;
    if (dimension == 0) dimension = arity;
    if (arity != dimension)
      format_error(path, lineno, "expected " + std::to_string(dimension) + " components, got " + std::to_string(arity));
    Vector v(dimension);
    for (std::size_t k = 0; k < dimension; ++k)
      if (!parse_double(fields[k + 1], v[k]))
        format_error(path, lineno, "non-numeric component '" + std::string(fields[k + 1]) + "'");
    vocab.try_emplace(std::string(fields[0]), std::move(v));
  }
  if (dimension == 0) throw Error(ErrorCode::FormatError, path.string() + ": no vectors");
  return StaticWordVectors(dimension, std::move(vocab));
}

ContextualEmbeddingClient::ContextualEmbeddingClient(std::string base_url, std::string model_id,
                                                     std::chrono::milliseconds timeout)
    : base_url_(std::move(base_url)), model_id_(std::move(model_id)), timeout_(timeout) {}

TermVector ContextualEmbeddingClient::embed(std::string_view term) const {
  nlohmann::json body = {{"model", model_id_}, {"prompt", std::string(term)}};
  auto res = http::post(base_url_ + "/api/embeddings", body.dump(), "application/json", timeout_);
  if (res.status != 200)
    throw Error(ErrorCode::EndpointUnreachable, "embedding endpoint returned HTTP " + std::to_string(res.status));
  auto j = nlohmann::json::parse(res.body, nullptr, false);
  if (!j.is_object() || !j.contains("embedding") || !j["embedding"].is_array() || j["embedding"].empty())
    throw Error(ErrorCode::EndpointUnreachable, "embedding endpoint returned no vector");
  TermVector out{std::string(term), {}, 1.0};
  for (const auto& x : j["embedding"]) {
    if (!x.is_number()) throw Error(ErrorCode::EndpointUnreachable, "non-numeric embedding component");
    double d = x.get<double>();
    if (!std::isfinite(d)) throw Error(ErrorCode::EndpointUnreachable, "non-finite embedding component");
    out.vector.push_back(d);
  }
  dimension_ = out.vector.size();
  return out;
}

TermVector embed_term(const EmbeddingProvider& p, std::string_view term) {
  if (trim(term).empty()) throw Error(ErrorCode::OutOfVocabulary, "empty term");
  return p.embed(term);
}

double cosine(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size())
    throw Error(ErrorCode::DimensionMismatch,
                "dimension " + std::to_string(u.size()) + " vs " + std::to_string(v.size()));
  double dot = 0.0, nu = 0.0, nv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * v[i];
    nu += u[i] * u[i];
    nv += v[i] * v[i];
  }
  if (nu == 0.0 || nv == 0.0) throw Error(ErrorCode::ZeroVector, "cosine of a zero vector");
  double c = dot / (std::sqrt(nu) * std::sqrt(nv));
  return std::clamp(c, -1.0, 1.0);
}

}  // namespace taxoria

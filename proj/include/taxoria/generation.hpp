#pragma once

#include <chrono>
#include <filesystem>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "taxoria/taxonomy.hpp"

namespace taxoria {

inline constexpr std::size_t kMaxCandidates = 3;

/// Completion backend. Implementations must be safe to call concurrently.
class LlmClient {
 public:
  virtual ~LlmClient() = default;
  virtual std::string complete(const std::string& model_id, const std::string& prompt) = 0;
  virtual std::vector<std::string> list_models() = 0;
};

struct LlmClientConfig {
  std::string base_url = "http://localhost:11434";
  std::chrono::milliseconds timeout{120000};
  // Transport retries; parse retries are governed by GenerationOptions.
  int max_retries = 2;
  double temperature = 0.0;
};

/// Speaks the local inference server API: POST /api/generate, GET /api/tags.
class HttpLlmClient final : public LlmClient {
 public:
  explicit HttpLlmClient(LlmClientConfig cfg) : cfg_(std::move(cfg)) {}
  std::string complete(const std::string& model_id, const std::string& prompt) override;
  std::vector<std::string> list_models() override;

 private:
  LlmClientConfig cfg_;
};

/// File name (without directory) under which the response to `prompt` is recorded.
std::string replay_key(std::string_view prompt);

/// Serves recorded responses from `<dir>/<replay_key>.txt`. A missing
/// recording surfaces as LlmUnreachable. `models.json` (a JSON array of
/// strings), when present, backs list_models().
class ReplayLlmClient final : public LlmClient {
 public:
  explicit ReplayLlmClient(std::filesystem::path dir);
  std::string complete(const std::string& model_id, const std::string& prompt) override;
  std::vector<std::string> list_models() override;

 private:
  std::filesystem::path dir_;
};

/// Forwards to `inner` and writes each response into a replay directory.
class RecordingLlmClient final : public LlmClient {
 public:
  RecordingLlmClient(std::shared_ptr<LlmClient> inner, std::filesystem::path dir);
  std::string complete(const std::string& model_id, const std::string& prompt) override;
  std::vector<std::string> list_models() override;

 private:
  std::shared_ptr<LlmClient> inner_;
  std::filesystem::path dir_;
  std::mutex mu_;
};

inline constexpr std::string_view kPromptTemplateVersion = "children-v1";
std::string_view default_prompt_template();
std::string load_prompt_template(const std::filesystem::path& path);

/// `ancestor_path` may or may not end with the node itself; the rendered
/// path always does.
std::string build_prompt(std::string_view node_name, std::span<const std::string> ancestor_path,
                         std::string_view tmpl = default_prompt_template());

/// Repair ladder rungs, tried in order.
enum class ParseRung {
  Strict,    // the whole text is the JSON object
  Fenced,    // JSON inside the first ``` block
  Embedded,  // first balanced {...} carrying a children array
  Lenient,   // quoted strings following a "children" token
};
std::string_view to_string(ParseRung r);

struct ParsedChildren {
  std::vector<std::string> names;
  ParseRung rung;
};

/// Names are trimmed and deduplicated case-insensitively. Throws
/// UnparseableResponse when every rung fails.
ParsedChildren parse_children(std::string_view raw);
std::vector<std::string> parse_children_json(std::string_view raw);

struct CandidateBatch {
  NamePath parent_path;
  std::size_t parent_depth = 0;
  std::string raw_response;
  std::vector<std::string> candidates;
  std::string model_id;
  std::size_t attempts = 1;
};

struct GenerationOptions {
  std::string model_id;
  int max_retries = 2;
  std::string prompt_template{default_prompt_template()};
};

/// Throws LlmUnreachable, UnparseableResponse (after retries) or EmptyBatch.
CandidateBatch generate_children(LlmClient& client, const GenerationOptions& opts,
                                 std::string_view node_name,
                                 std::span<const std::string> ancestor_path);

std::vector<std::string> list_models(LlmClient& client);

}  // namespace taxoria

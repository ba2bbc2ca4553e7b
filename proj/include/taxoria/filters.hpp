#pragma once

#include <chrono>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "taxoria/embeddings.hpp"
#include "taxoria/generation.hpp"
#include "taxoria/taxonomy.hpp"

namespace taxoria {

enum class Outcome { Accepted, Rejected };

enum class Reason {
  Passed,
  DepthExceeded,
  BelowThreshold,
  Oov,
  JudgeBelowBaseline,
  KgInstance,
  DuplicateSibling,
  Unparseable,
};

std::string_view to_string(Outcome o);
std::string_view to_string(Reason r);
std::optional<Reason> parse_reason(std::string_view s);

struct FilterDecision {
  std::string candidate;
  NamePath parent_path;
  Outcome outcome = Outcome::Rejected;
  Reason reason = Reason::Unparseable;
  std::optional<double> similarity;
  std::optional<double> judge_score;
  std::optional<std::string> kg_entity;
  std::optional<std::string> warning;

  bool accepted() const { return outcome == Outcome::Accepted; }
};

nlohmann::ordered_json decision_to_json(const FilterDecision& d);
FilterDecision decision_from_json(const nlohmann::json& j);

enum class SimilarityMode { StaticOnly, ContextualOnly, StaticWithFallback };

std::string_view to_string(SimilarityMode m);
std::optional<SimilarityMode> parse_similarity_mode(std::string_view s);

inline constexpr std::string_view kDefaultKgEndpoint = "https://query.wikidata.org/sparql";

struct FilterConfig {
  double rho = 0.9;
  std::size_t max_extra_depth = 1;
  bool judge_enabled = false;
  bool kg_check_enabled = false;
  std::string kg_endpoint{kDefaultKgEndpoint};
  SimilarityMode similarity_mode = SimilarityMode::StaticWithFallback;

  /// Throws InvalidConfig.
  void validate() const;
};

/// Parent/child similarity source. nullopt means the pair cannot be measured (OOV).
class Similarity {
 public:
  virtual ~Similarity() = default;
  virtual std::optional<double> score(std::string_view candidate, std::string_view parent) const = 0;
};

/// Cosine over embedding providers, combined per SimilarityMode.
/// Either provider may be null when the mode does not need it.
class EmbeddingSimilarity final : public Similarity {
 public:
  EmbeddingSimilarity(std::shared_ptr<const EmbeddingProvider> static_provider,
                      std::shared_ptr<const EmbeddingProvider> contextual_provider, SimilarityMode mode);
  std::optional<double> score(std::string_view candidate, std::string_view parent) const override;

 private:
  std::optional<double> score_with(const EmbeddingProvider* p, std::string_view a, std::string_view b) const;

  std::shared_ptr<const EmbeddingProvider> static_;
  std::shared_ptr<const EmbeddingProvider> contextual_;
  SimilarityMode mode_;
};

bool depth_gate(std::size_t candidate_depth, std::size_t original_max_depth, const FilterConfig& cfg);

/// Boundary-inclusive: accepted iff similarity >= rho.
bool passes_threshold(double similarity, double rho);

FilterDecision similarity_filter(std::string_view candidate, std::string_view parent,
                                 const Similarity& similarity, const FilterConfig& cfg);
FilterDecision similarity_filter(std::string_view candidate, std::string_view parent,
                                 const EmbeddingProvider& provider, const FilterConfig& cfg);

/// Mean similarity over parent-child edges of the seed where both ends
/// embed. Throws NoMeasurableEdges.
double original_mean_similarity(const Taxonomy& t, const Similarity& similarity);

inline constexpr std::string_view kJudgePromptVersion = "judge-v1";
std::string build_judge_prompt(std::string_view candidate, std::string_view parent);
/// First number in the text on a 0-100 scale, divided by 100.
std::optional<double> parse_judge_score(std::string_view text);
/// Throws UnparseableResponse or LlmUnreachable.
double judge_relevance(LlmClient& client, const std::string& model_id, std::string_view candidate,
                       std::string_view parent);

enum class KgVerdict { IsInstance, IsClassLike, NotFound };
std::string_view to_string(KgVerdict v);

struct KgResult {
  KgVerdict verdict = KgVerdict::NotFound;
  std::optional<std::string> entity;
};

class KgClient {
 public:
  virtual ~KgClient() = default;
  /// Throws KgUnreachable.
  virtual KgResult check(std::string_view label) = 0;
};

/// Instance-of lookup against a SPARQL endpoint serving Wikidata-style data.
class SparqlKgClient final : public KgClient {
 public:
  explicit SparqlKgClient(std::string endpoint,
                          std::chrono::milliseconds timeout = std::chrono::seconds(30));
  KgResult check(std::string_view label) override;

 private:
  nlohmann::json query(const std::string& sparql);
  std::optional<std::string> resolve(std::string_view label, bool case_insensitive);

  std::string endpoint_;
  std::chrono::milliseconds timeout_;
};

std::string sparql_label_query(std::string_view label, bool case_insensitive);
std::string sparql_instance_ask(std::string_view entity_iri);

KgResult kg_instance_check(KgClient& client, std::string_view label);

struct FilterProviders {
  const Similarity* similarity = nullptr;
  LlmClient* judge = nullptr;
  std::string judge_model;
  KgClient* kg = nullptr;
  // original_mean_similarity of the seed; required when the judge runs.
  std::optional<double> judge_baseline;
};

struct CandidateContext {
  std::string_view candidate;
  const TaxonomyNode& parent;
  const NamePath& parent_path;
  std::size_t seed_max_depth;
};

/// sibling duplicate -> depth -> similarity -> judge -> kg; the first
/// rejection short-circuits. Throws InvalidConfig for missing providers.
FilterDecision run_filter_chain(const CandidateContext& ctx, const FilterConfig& cfg,
                                const FilterProviders& providers);

}  // namespace taxoria

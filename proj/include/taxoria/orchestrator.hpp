#pragma once

#include <atomic>
#include <cstddef>
#include <deque>
#include <filesystem>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "taxoria/filters.hpp"
#include "taxoria/generation.hpp"
#include "taxoria/taxonomy.hpp"

namespace taxoria {

enum class Strategy { Bfs, Dfs };
std::string_view to_string(Strategy s);
std::optional<Strategy> parse_strategy(std::string_view s);

struct RunConfig {
  Strategy strategy = Strategy::Bfs;
  std::string model_id;
  FilterConfig filter;
  std::size_t parallelism = 4;
  std::string seed_taxonomy_id;
  std::optional<std::size_t> frontier_limit;
  std::size_t checkpoint_every = 25;
  int max_retries = 2;
  std::optional<std::string> judge_model;
  std::string prompt_template{default_prompt_template()};

  /// Throws InvalidConfig.
  void validate() const;
};

nlohmann::json config_to_json(const RunConfig& cfg);
RunConfig config_from_json(const nlohmann::json& j);

enum class Phase { Pending, Running, Completed, Cancelled, Failed };
std::string_view to_string(Phase p);
std::optional<Phase> parse_phase(std::string_view s);

struct RunCounters {
  std::size_t nodes_prompted = 0;
  std::size_t nodes_failed = 0;
  std::size_t candidates_generated = 0;
  std::size_t candidates_accepted = 0;
  std::map<std::string, std::size_t> rejected_by_reason;

  std::size_t rejected_total() const;
};

struct RunState {
  std::string run_id;
  Phase phase = Phase::Pending;
  RunCounters counters;
  std::size_t expansions = 0;
  std::size_t decisions_logged = 0;
  std::string started_at;
  std::string finished_at;
  std::string error;
};

nlohmann::json state_to_json(const RunState& s);

struct RunReport {
  std::size_t original_class_count = 0;
  std::size_t original_max_depth = 0;
  std::size_t new_class_count = 0;
  std::size_t new_max_depth = 0;
  std::map<std::string, std::size_t> new_classes_by_model;

  bool operator==(const RunReport&) const = default;
};

nlohmann::ordered_json report_to_json(const RunReport& r);

/// new_class_count counts accepted decisions; each one adds exactly one node.
RunReport build_report(const TaxonomyStats& seed, const TaxonomyStats& enriched,
                       std::span<const FilterDecision> decisions, const std::string& model_id);

struct EnrichmentDeps {
  std::shared_ptr<LlmClient> llm;
  std::shared_ptr<const Similarity> similarity;
  // Defaults to `llm` when the judge is enabled.
  std::shared_ptr<LlmClient> judge;
  // Defaults to a SparqlKgClient on the configured endpoint.
  std::shared_ptr<KgClient> kg;
};

/// One enrichment run. run() (or repeated step()) executes on a single
/// writer thread; the accessor methods may be called from any thread.
class Enrichment {
 public:
  Enrichment(const Taxonomy& seed, RunConfig cfg, EnrichmentDeps deps, std::string run_id = "run");
  ~Enrichment();

  Enrichment(const Enrichment&) = delete;
  Enrichment& operator=(const Enrichment&) = delete;

  /// Resumes from `<dir>` written by checkpoint(). Throws NotFound or CorruptCheckpoint.
  static std::unique_ptr<Enrichment> restore(const std::filesystem::path& dir, EnrichmentDeps deps);

  /// Snapshots are written to `dir` every checkpoint_every expansions and at the end.
  void set_checkpoint_dir(std::filesystem::path dir);
  void set_decision_sink(std::function<void(const FilterDecision&)> sink);

  /// Runs until the frontier is exhausted, the frontier limit is reached or
  /// cancel() is observed. Rethrows the failure after recording it.
  Phase run();
  /// Expands one node. Returns false when nothing is left to expand.
  bool step();
  void cancel() { cancel_requested_ = true; }
  void checkpoint() const;

  RunState state() const;
  Taxonomy taxonomy() const;
  RunReport report() const;
  std::vector<FilterDecision> decisions(std::size_t after = 0,
                                        std::size_t limit = static_cast<std::size_t>(-1)) const;
  const RunConfig& config() const { return cfg_; }
  TaxonomyStats seed_stats() const { return seed_stats_; }
  std::size_t frontier_size() const;

 private:
  struct Expansion {
    std::optional<CandidateBatch> batch;
    std::vector<FilterDecision> decisions;
    std::string failure;
  };

  Enrichment(Taxonomy tree, RunConfig cfg, EnrichmentDeps deps, std::string run_id, TaxonomyStats seed_stats);
  void init_providers();
  bool promotable(std::size_t depth) const;
  bool limit_reached() const;
  void prefetch();
  Expansion evaluate(const NamePath& path, const TaxonomyNode& parent_view) const;
  void set_phase(Phase p);

  RunConfig cfg_;
  EnrichmentDeps deps_;
  FilterProviders providers_;
  TaxonomyStats seed_stats_;
  std::optional<double> judge_baseline_;
  std::filesystem::path checkpoint_dir_;
  std::function<void(const FilterDecision&)> sink_;
  std::atomic<bool> cancel_requested_{false};

  mutable std::mutex mu_;
  Taxonomy tree_;
  RunState state_;
  std::deque<NamePath> frontier_;
  std::vector<FilterDecision> decisions_;

  // Touched only by the writer thread.
  std::unordered_map<std::string, std::future<Expansion>> inflight_;
};

}  // namespace taxoria

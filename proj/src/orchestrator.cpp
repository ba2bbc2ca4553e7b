#include "taxoria/orchestrator.hpp"

#include <charconv>
#include <chrono>
#include <ctime>
#include <fstream>
#include <sstream>

#include <spdlog/spdlog.h>

#include "taxoria/error.hpp"
#include "taxoria/http.hpp"
#include "taxoria/merge.hpp"

namespace taxoria {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr const char* kCheckpointFiles[] = {"taxonomy.json", "frontier.json", "state.json", "decisions.jsonl"};

std::string now_iso8601() {
  auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string format_double(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string path_key(const NamePath& p) {
  std::string k;
  for (const auto& s : p) {
    k += s;
    k += '\x1f';
  }
  return k;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error(ErrorCode::NotFound, "cannot open " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_atomic(const fs::path& p, const std::string& content) {
  auto tmp = p;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw Error(ErrorCode::Io, "short write to " + tmp.string());
  }
  fs::rename(tmp, p);
}

TaxonomyNode parent_view(const TaxonomyNode& n) {
  TaxonomyNode v(n.name, n.source);
  v.children.reserve(n.children.size());
  for (const auto& c : n.children) v.children.emplace_back(c.name, c.source);
  return v;
}

bool is_soft_generation_error(ErrorCode c) {
  return c == ErrorCode::LlmUnreachable || c == ErrorCode::UnparseableResponse || c == ErrorCode::EmptyBatch;
}

}  // namespace

std::string_view to_string(Strategy s) { return s == Strategy::Bfs ? "bfs" : "dfs"; }

std::optional<Strategy> parse_strategy(std::string_view s) {
  if (s == "bfs") return Strategy::Bfs;
  if (s == "dfs") return Strategy::Dfs;
  return std::nullopt;
}

void RunConfig::validate() const {
  filter.validate();
  if (parallelism < 1) throw Error(ErrorCode::InvalidConfig, "parallelism must be >= 1");
  if (checkpoint_every < 1) throw Error(ErrorCode::InvalidConfig, "checkpoint interval must be >= 1");
  if (max_retries < 0) throw Error(ErrorCode::InvalidConfig, "max_retries must be >= 0");
  if (model_id.empty()) throw Error(ErrorCode::InvalidConfig, "model id is empty");
}

json config_to_json(const RunConfig& cfg) {
  json j;
  j["strategy"] = std::string(to_string(cfg.strategy));
  j["model_id"] = cfg.model_id;
  j["rho"] = cfg.filter.rho;
  j["max_extra_depth"] = cfg.filter.max_extra_depth;
  j["judge_enabled"] = cfg.filter.judge_enabled;
  j["kg_check_enabled"] = cfg.filter.kg_check_enabled;
  j["kg_endpoint"] = cfg.filter.kg_endpoint;
  j["similarity_mode"] = std::string(to_string(cfg.filter.similarity_mode));
  j["parallelism"] = cfg.parallelism;
  j["seed_taxonomy_id"] = cfg.seed_taxonomy_id;
  j["frontier_limit"] = cfg.frontier_limit ? json(*cfg.frontier_limit) : json(nullptr);
  j["checkpoint_every"] = cfg.checkpoint_every;
  j["max_retries"] = cfg.max_retries;
  j["judge_model"] = cfg.judge_model ? json(*cfg.judge_model) : json(nullptr);
  j["prompt_template"] = cfg.prompt_template;
  return j;
}

RunConfig config_from_json(const json& j) {
  RunConfig cfg;
  try {
    if (j.contains("strategy")) {
      auto s = parse_strategy(j["strategy"].get<std::string>());
      if (!s) throw Error(ErrorCode::InvalidConfig, "strategy must be bfs or dfs");
      cfg.strategy = *s;
    }
    if (j.contains("model_id")) cfg.model_id = j["model_id"].get<std::string>();
    if (j.contains("rho")) cfg.filter.rho = j["rho"].get<double>();
    if (j.contains("max_extra_depth")) {
      auto d = j["max_extra_depth"].get<long long>();
      if (d < 0) throw Error(ErrorCode::InvalidConfig, "max_extra_depth must be >= 0");
      cfg.filter.max_extra_depth = static_cast<std::size_t>(d);
    }
    if (j.contains("judge_enabled")) cfg.filter.judge_enabled = j["judge_enabled"].get<bool>();
    if (j.contains("kg_check_enabled")) cfg.filter.kg_check_enabled = j["kg_check_enabled"].get<bool>();
    if (j.contains("kg_endpoint") && j["kg_endpoint"].is_string()) cfg.filter.kg_endpoint = j["kg_endpoint"].get<std::string>();
    if (j.contains("similarity_mode")) {
      auto m = parse_similarity_mode(j["similarity_mode"].get<std::string>());
      if (!m) throw Error(ErrorCode::InvalidConfig, "unknown similarity mode");
      cfg.filter.similarity_mode = *m;
    }
    if (j.contains("parallelism")) {
      auto p = j["parallelism"].get<long long>();
      if (p < 1) throw Error(ErrorCode::InvalidConfig, "parallelism must be >= 1");
      cfg.parallelism = static_cast<std::size_t>(p);
    }
    if (j.contains("seed_taxonomy_id") && j["seed_taxonomy_id"].is_string())
      cfg.seed_taxonomy_id = j["seed_taxonomy_id"].get<std::string>();
    if (j.contains("frontier_limit") && !j["frontier_limit"].is_null()) {
      auto l = j["frontier_limit"].get<long long>();
      if (l < 0) throw Error(ErrorCode::InvalidConfig, "frontier_limit must be >= 0");
      cfg.frontier_limit = static_cast<std::size_t>(l);
    }
    if (j.contains("checkpoint_every")) cfg.checkpoint_every = j["checkpoint_every"].get<std::size_t>();
    if (j.contains("max_retries")) cfg.max_retries = j["max_retries"].get<int>();
    if (j.contains("judge_model") && j["judge_model"].is_string()) cfg.judge_model = j["judge_model"].get<std::string>();
    if (j.contains("prompt_template")) cfg.prompt_template = j["prompt_template"].get<std::string>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("bad run config: ") + e.what());
  }
  return cfg;
}

std::string_view to_string(Phase p) {
  switch (p) {
    case Phase::Pending: return "pending";
    case Phase::Running: return "running";
    case Phase::Completed: return "completed";
    case Phase::Cancelled: return "cancelled";
    case Phase::Failed: return "failed";
  }
  return "failed";
}

std::optional<Phase> parse_phase(std::string_view s) {
  for (auto p : {Phase::Pending, Phase::Running, Phase::Completed, Phase::Cancelled, Phase::Failed})
    if (to_string(p) == s) return p;
  return std::nullopt;
}

std::size_t RunCounters::rejected_total() const {
  std::size_t n = 0;
  for (const auto& [_, c] : rejected_by_reason) n += c;
  return n;
}

json state_to_json(const RunState& s) {
  json j;
  j["run_id"] = s.run_id;
  j["phase"] = std::string(to_string(s.phase));
  j["nodes_prompted"] = s.counters.nodes_prompted;
  j["nodes_failed"] = s.counters.nodes_failed;
  j["candidates_generated"] = s.counters.candidates_generated;
  j["candidates_accepted"] = s.counters.candidates_accepted;
  j["candidates_rejected_by_reason"] = s.counters.rejected_by_reason;
  j["expansions"] = s.expansions;
  j["decisions_logged"] = s.decisions_logged;
  j["started_at"] = s.started_at.empty() ? json(nullptr) : json(s.started_at);
  j["finished_at"] = s.finished_at.empty() ? json(nullptr) : json(s.finished_at);
  if (!s.error.empty()) j["error"] = s.error;
  return j;
}

nlohmann::ordered_json report_to_json(const RunReport& r) {
  nlohmann::ordered_json j;
  j["original_class_count"] = r.original_class_count;
  j["original_max_depth"] = r.original_max_depth;
  j["new_class_count"] = r.new_class_count;
  j["new_max_depth"] = r.new_max_depth;
  nlohmann::ordered_json models = nlohmann::ordered_json::object();
  for (const auto& [m, n] : r.new_classes_by_model) models[m] = n;
  j["new_classes_by_model"] = std::move(models);
  return j;
}

RunReport build_report(const TaxonomyStats& seed, const TaxonomyStats& enriched,
                       std::span<const FilterDecision> decisions, const std::string& model_id) {
  RunReport r;
  r.original_class_count = seed.class_count;
  r.original_max_depth = seed.max_depth;
  for (const auto& d : decisions)
    if (d.accepted()) ++r.new_class_count;
  r.new_max_depth = enriched.max_depth;
  r.new_classes_by_model[model_id] = r.new_class_count;
  return r;
}

Enrichment::Enrichment(const Taxonomy& seed, RunConfig cfg, EnrichmentDeps deps, std::string run_id)
    : Enrichment(seed, std::move(cfg), std::move(deps), std::move(run_id), seed.stats()) {
  cfg_.validate();
  if (cfg_.filter.judge_enabled)
    judge_baseline_ = original_mean_similarity(seed, *deps_.similarity);
  providers_.judge_baseline = judge_baseline_;
  frontier_.push_back(NamePath{tree_.root().name});
}

Enrichment::Enrichment(Taxonomy tree, RunConfig cfg, EnrichmentDeps deps, std::string run_id,
                       TaxonomyStats seed_stats)
    : cfg_(std::move(cfg)), deps_(std::move(deps)), seed_stats_(seed_stats), tree_(std::move(tree)) {
  state_.run_id = std::move(run_id);
  init_providers();
}

Enrichment::~Enrichment() { inflight_.clear(); }

void Enrichment::init_providers() {
  if (!deps_.llm) throw Error(ErrorCode::InvalidConfig, "no LLM client configured");
  if (!deps_.similarity) throw Error(ErrorCode::InvalidConfig, "no similarity provider configured");
  providers_.similarity = deps_.similarity.get();
  if (cfg_.filter.judge_enabled) {
    if (!deps_.judge) deps_.judge = deps_.llm;
    providers_.judge = deps_.judge.get();
    providers_.judge_model = cfg_.judge_model.value_or(cfg_.model_id);
  }
  if (cfg_.filter.kg_check_enabled) {
    if (!deps_.kg) deps_.kg = std::make_shared<SparqlKgClient>(cfg_.filter.kg_endpoint);
    providers_.kg = deps_.kg.get();
  }
}

void Enrichment::set_checkpoint_dir(fs::path dir) { checkpoint_dir_ = std::move(dir); }

void Enrichment::set_decision_sink(std::function<void(const FilterDecision&)> sink) { sink_ = std::move(sink); }

bool Enrichment::promotable(std::size_t depth) const {
  return depth < seed_stats_.max_depth + cfg_.filter.max_extra_depth;
}

bool Enrichment::limit_reached() const {
  return cfg_.frontier_limit && state_.counters.nodes_prompted >= *cfg_.frontier_limit;
}

std::size_t Enrichment::frontier_size() const {
  std::lock_guard lock(mu_);
  return frontier_.size();
}

Enrichment::Expansion Enrichment::evaluate(const NamePath& path, const TaxonomyNode& parent) const {
  Expansion ex;
  GenerationOptions opts{cfg_.model_id, cfg_.max_retries, cfg_.prompt_template};
  try {
    ex.batch = generate_children(*deps_.llm, opts, parent.name, path);
  } catch (const Error& e) {
    if (!is_soft_generation_error(e.code())) throw;
    ex.failure = std::string(error_code_name(e.code())) + ": " + e.what();
    return ex;
  }
  for (const auto& candidate : ex.batch->candidates) {
    CandidateContext ctx{candidate, parent, path, seed_stats_.max_depth};
    ex.decisions.push_back(run_filter_chain(ctx, cfg_.filter, providers_));
  }
  return ex;
}

void Enrichment::prefetch() {
  // Mirrors the pop order of step(): queue front for BFS, stack top for DFS.
  std::size_t budget = cfg_.parallelism;
  if (cfg_.frontier_limit) {
    auto remaining = *cfg_.frontier_limit - std::min(*cfg_.frontier_limit, state_.counters.nodes_prompted);
    budget = std::min(budget, remaining);
  }
  std::lock_guard lock(mu_);
  for (std::size_t i = 0; i < frontier_.size() && i < budget; ++i) {
    const NamePath& path = cfg_.strategy == Strategy::Bfs ? frontier_[i] : frontier_[frontier_.size() - 1 - i];
    auto key = path_key(path);
    if (inflight_.count(key)) continue;
    TaxonomyNode view = parent_view(node_at_path(tree_, path));
    inflight_.emplace(key, std::async(std::launch::async, [this, path, view = std::move(view)] {
                        return evaluate(path, view);
                      }));
  }
}

bool Enrichment::step() {
  if (limit_reached()) return false;
  {
    std::lock_guard lock(mu_);
    if (frontier_.empty()) return false;
  }
  prefetch();

  NamePath path;
  {
    std::lock_guard lock(mu_);
    if (cfg_.strategy == Strategy::Bfs) {
      path = std::move(frontier_.front());
      frontier_.pop_front();
    } else {
      path = std::move(frontier_.back());
      frontier_.pop_back();
    }
  }

  Expansion ex;
  auto it = inflight_.find(path_key(path));
  if (it != inflight_.end()) {
    auto fut = std::move(it->second);
    inflight_.erase(it);
    ex = fut.get();
  } else {
    TaxonomyNode view;
    {
      std::lock_guard lock(mu_);
      view = parent_view(node_at_path(tree_, path));
    }
    ex = evaluate(path, view);
  }

  std::vector<FilterDecision> emitted;
  {
    std::lock_guard lock(mu_);
    auto& counters = state_.counters;
    ++counters.nodes_prompted;
    if (!ex.batch) {
      ++counters.nodes_failed;
      spdlog::warn("skipping node '{}': {}", path.back(), ex.failure);
    }
    for (auto& d : ex.decisions) {
      ++counters.candidates_generated;
      if (d.accepted()) {
        TaxonomyNode node(d.candidate, SourceKey::LlmGenerated);
        node.metadata["model"] = cfg_.model_id;
        if (d.similarity) node.metadata["similarity"] = format_double(*d.similarity);
        auto outcome = merge_candidate(tree_, path, node);
        if (outcome.added_count != 1)
          throw Error(ErrorCode::InvariantViolation, "accepted candidate '" + d.candidate + "' did not add a node");
        ++counters.candidates_accepted;
      } else {
        ++counters.rejected_by_reason[std::string(to_string(d.reason))];
      }
      if (d.warning) spdlog::warn("{}: {}", d.candidate, *d.warning);
      decisions_.push_back(d);
      emitted.push_back(std::move(d));
    }
    state_.decisions_logged = decisions_.size();

    const TaxonomyNode& node = node_at_path(tree_, path);
    const std::size_t child_depth = path.size();
    if (promotable(child_depth)) {
      std::vector<NamePath> next;
      for (const auto& c : node.children) {
        NamePath p = path;
        p.push_back(c.name);
        next.push_back(std::move(p));
      }
      if (cfg_.strategy == Strategy::Bfs) {
        for (auto& p : next) frontier_.push_back(std::move(p));
      } else {
        for (auto r = next.rbegin(); r != next.rend(); ++r) frontier_.push_back(std::move(*r));
      }
    }
    ++state_.expansions;
  }
  if (sink_)
    for (const auto& d : emitted) sink_(d);

  if (!checkpoint_dir_.empty() && state_.expansions % cfg_.checkpoint_every == 0) checkpoint();
  return true;
}

void Enrichment::set_phase(Phase p) {
  std::lock_guard lock(mu_);
  state_.phase = p;
  if (p == Phase::Running && state_.started_at.empty()) state_.started_at = now_iso8601();
  if (p == Phase::Completed || p == Phase::Cancelled || p == Phase::Failed) state_.finished_at = now_iso8601();
}

Phase Enrichment::run() {
  set_phase(Phase::Running);
  try {
    while (!cancel_requested_ && step()) {
    }
  } catch (const std::exception& e) {
    inflight_.clear();
    {
      std::lock_guard lock(mu_);
      state_.error = e.what();
    }
    set_phase(Phase::Failed);
    throw;
  }
  inflight_.clear();
  set_phase(cancel_requested_ ? Phase::Cancelled : Phase::Completed);
  if (!checkpoint_dir_.empty()) checkpoint();
  return state().phase;
}

void Enrichment::checkpoint() const {
  std::string taxonomy, frontier, state, decisions;
  {
    std::lock_guard lock(mu_);
    taxonomy = serialize_taxonomy(tree_);
    frontier = json(std::vector<NamePath>(frontier_.begin(), frontier_.end())).dump();
    json s;
    s["state"] = state_to_json(state_);
    s["config"] = config_to_json(cfg_);
    s["seed_stats"] = {{"class_count", seed_stats_.class_count}, {"max_depth", seed_stats_.max_depth}};
    s["judge_baseline"] = judge_baseline_ ? json(*judge_baseline_) : json(nullptr);
    state = s.dump(2);
    for (const auto& d : decisions_) {
      decisions += decision_to_json(d).dump();
      decisions += '\n';
    }
  }
  fs::create_directories(checkpoint_dir_);
  const std::pair<const char*, const std::string*> files[] = {
      {kCheckpointFiles[0], &taxonomy}, {kCheckpointFiles[1], &frontier},
      {kCheckpointFiles[3], &decisions}, {kCheckpointFiles[2], &state}};
  for (const auto& [name, content] : files) {
    write_atomic(checkpoint_dir_ / name, *content);
    write_atomic(checkpoint_dir_ / (std::string(name) + ".sha256"), http::sha256_hex(*content) + "\n");
  }
}

std::unique_ptr<Enrichment> Enrichment::restore(const fs::path& dir, EnrichmentDeps deps) {
  if (!fs::is_directory(dir)) throw Error(ErrorCode::NotFound, "no checkpoint at " + dir.string());
  std::map<std::string, std::string> content;
  for (const char* name : kCheckpointFiles) {
    auto data = read_file(dir / name);
    auto expected = trim(read_file(dir / (std::string(name) + ".sha256")));
    if (http::sha256_hex(data) != expected)
      throw Error(ErrorCode::CorruptCheckpoint, std::string(name) + " does not match its content hash");
    content[name] = std::move(data);
  }
  try {
    auto s = json::parse(content["state.json"]);
    RunConfig cfg = config_from_json(s.at("config"));
    TaxonomyStats seed{s.at("seed_stats").at("class_count").get<std::size_t>(),
                       s.at("seed_stats").at("max_depth").get<std::size_t>()};
    const auto& st = s.at("state");
    std::unique_ptr<Enrichment> e(new Enrichment(parse_taxonomy(content["taxonomy.json"]), std::move(cfg),
                                                 std::move(deps), st.at("run_id").get<std::string>(), seed));
    if (!s["judge_baseline"].is_null()) e->judge_baseline_ = s["judge_baseline"].get<double>();
    e->providers_.judge_baseline = e->judge_baseline_;
    for (auto& p : json::parse(content["frontier.json"]).get<std::vector<NamePath>>()) e->frontier_.push_back(std::move(p));
    std::istringstream lines(content["decisions.jsonl"]);
    for (std::string line; std::getline(lines, line);)
      if (!line.empty()) e->decisions_.push_back(decision_from_json(json::parse(line)));
    auto& state = e->state_;
    auto& c = state.counters;
    c.nodes_prompted = st.at("nodes_prompted").get<std::size_t>();
    c.nodes_failed = st.at("nodes_failed").get<std::size_t>();
    c.candidates_generated = st.at("candidates_generated").get<std::size_t>();
    c.candidates_accepted = st.at("candidates_accepted").get<std::size_t>();
    c.rejected_by_reason = st.at("candidates_rejected_by_reason").get<std::map<std::string, std::size_t>>();
    state.expansions = st.at("expansions").get<std::size_t>();
    state.decisions_logged = e->decisions_.size();
    if (st["started_at"].is_string()) state.started_at = st["started_at"].get<std::string>();
    // Resumes as a fresh pending run regardless of how the snapshot ended.
    state.phase = Phase::Pending;
    e->checkpoint_dir_ = dir;
    return e;
  } catch (const json::exception& ex) {
    throw Error(ErrorCode::CorruptCheckpoint, std::string("unreadable checkpoint: ") + ex.what());
  }
}

RunState Enrichment::state() const {
  std::lock_guard lock(mu_);
  return state_;
}

Taxonomy Enrichment::taxonomy() const {
  std::lock_guard lock(mu_);
  return tree_;
}

RunReport Enrichment::report() const {
  std::lock_guard lock(mu_);
  return build_report(seed_stats_, tree_.stats(), decisions_, cfg_.model_id);
}

std::vector<FilterDecision> Enrichment::decisions(std::size_t after, std::size_t limit) const {
  std::lock_guard lock(mu_);
  std::vector<FilterDecision> out;
  for (std::size_t i = after; i < decisions_.size() && out.size() < limit; ++i) out.push_back(decisions_[i]);
  return out;
}

}  // namespace taxoria

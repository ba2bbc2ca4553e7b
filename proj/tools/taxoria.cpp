// taxoria: validate, inspect, enrich and merge taxonomies; run the HTTP service.
//
// Exit codes: 0 success, 1 domain failure, 2 usage/config/I-O error.

#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "taxoria/embeddings.hpp"
#include "taxoria/error.hpp"
#include "taxoria/filters.hpp"
#include "taxoria/generation.hpp"
#include "taxoria/merge.hpp"
#include "taxoria/orchestrator.hpp"
#include "taxoria/service.hpp"
#include "taxoria/taxonomy.hpp"

using namespace taxoria;

namespace {

constexpr int kOk = 0;
constexpr int kDomainFailure = 1;
constexpr int kUsageError = 2;

std::string env_or(const char* name, std::string fallback) {
  const char* v = std::getenv(name);
  return v && *v ? std::string(v) : std::move(fallback);
}

bool is_io_error(ErrorCode c) { return c == ErrorCode::FileNotFound || c == ErrorCode::Io; }

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path);
  out << content;
  if (!out) throw Error(ErrorCode::Io, "short write to " + path);
}

struct ProviderFlags {
  std::string llm_url;
  std::string replay_dir;
  std::string record_dir;
  std::string embeddings;
  std::optional<std::size_t> embeddings_limit;
  std::string embedding_model;
  std::string similarity_mode = "static-with-fallback";

  void add_to(CLI::App* cmd) {
    cmd->add_option("--llm-url", llm_url, "Inference server base URL (env TAXORIA_LLM_URL)");
    cmd->add_option("--replay-dir", replay_dir, "Serve recorded LLM responses from this directory");
    cmd->add_option("--record-dir", record_dir, "Record live LLM responses into this directory");
    cmd->add_option("--embeddings", embeddings, "Word-vector text file");
    cmd->add_option("--embeddings-limit", embeddings_limit, "Load only the first N vectors");
    cmd->add_option("--embedding-model", embedding_model, "Model for the contextual embedding endpoint");
    cmd->add_option("--similarity-mode", similarity_mode, "static-only | contextual-only | static-with-fallback")
        ->check(CLI::IsMember({"static-only", "contextual-only", "static-with-fallback"}));
  }

  std::shared_ptr<LlmClient> llm() const {
    std::shared_ptr<LlmClient> client;
    if (!replay_dir.empty()) {
      client = std::make_shared<ReplayLlmClient>(replay_dir);
    } else {
      auto url = llm_url.empty() ? env_or("TAXORIA_LLM_URL", "") : llm_url;
      if (url.empty()) throw Error(ErrorCode::InvalidConfig, "either --llm-url or --replay-dir is required");
      client = std::make_shared<HttpLlmClient>(LlmClientConfig{url});
    }
    if (!record_dir.empty()) client = std::make_shared<RecordingLlmClient>(client, record_dir);
    return client;
  }

  std::shared_ptr<const Similarity> similarity(const std::string& fallback_model) const {
    auto mode = *parse_similarity_mode(similarity_mode);
    std::shared_ptr<const EmbeddingProvider> static_provider;
    if (!embeddings.empty())
      static_provider = std::make_shared<StaticWordVectors>(load_static_vectors(embeddings, embeddings_limit));
    std::shared_ptr<const EmbeddingProvider> contextual;
    auto url = llm_url.empty() ? env_or("TAXORIA_LLM_URL", "") : llm_url;
    if (mode != SimilarityMode::StaticOnly && !url.empty())
      contextual = std::make_shared<ContextualEmbeddingClient>(
          url, embedding_model.empty() ? fallback_model : embedding_model);
    return std::make_shared<EmbeddingSimilarity>(static_provider, contextual, mode);
  }
};

int cmd_validate(const std::string& file, bool lenient) {
  auto t = load_taxonomy(file, lenient ? ParseMode::Lenient : ParseMode::Strict);
  std::cerr << file << ": ok (" << t.class_count() << " classes)\n";
  return kOk;
}

int cmd_stats(const std::string& file, bool lenient) {
  auto t = load_taxonomy(file, lenient ? ParseMode::Lenient : ParseMode::Strict);
  nlohmann::ordered_json j;
  j["classes"] = t.class_count();
  j["max_depth"] = t.max_depth();
  std::cout << j.dump() << "\n";
  return kOk;
}

struct EnrichFlags {
  std::string input;
  std::string output;
  std::string decisions;
  std::string model;
  std::string strategy = "bfs";
  double rho = 0.9;
  long long max_extra_depth = 1;
  bool enable_judge = false;
  bool enable_kg = false;
  std::string kg_endpoint;
  std::string judge_model;
  std::optional<std::size_t> frontier_limit;
  std::size_t parallelism = 4;
  std::size_t checkpoint_every = 25;
  std::string checkpoint_dir;
  std::string resume;
  std::string prompt_template;
  bool lenient = false;
  ProviderFlags providers;
};

int cmd_enrich(const EnrichFlags& f) {
  RunConfig cfg;
  cfg.strategy = *parse_strategy(f.strategy);
  cfg.model_id = f.model;
  cfg.filter.rho = f.rho;
  if (f.max_extra_depth < 0) throw Error(ErrorCode::InvalidConfig, "--max-extra-depth must be >= 0");
  cfg.filter.max_extra_depth = static_cast<std::size_t>(f.max_extra_depth);
  cfg.filter.judge_enabled = f.enable_judge;
  cfg.filter.kg_check_enabled = f.enable_kg;
  cfg.filter.kg_endpoint = f.kg_endpoint.empty() ? env_or("TAXORIA_KG_ENDPOINT", std::string(kDefaultKgEndpoint)) : f.kg_endpoint;
  cfg.filter.similarity_mode = *parse_similarity_mode(f.providers.similarity_mode);
  cfg.parallelism = f.parallelism;
  cfg.frontier_limit = f.frontier_limit;
  cfg.checkpoint_every = f.checkpoint_every;
  cfg.seed_taxonomy_id = f.input;
  if (!f.judge_model.empty()) cfg.judge_model = f.judge_model;
  if (!f.prompt_template.empty()) cfg.prompt_template = load_prompt_template(f.prompt_template);
  cfg.validate();

  EnrichmentDeps deps{f.providers.llm(), f.providers.similarity(f.model), nullptr, nullptr};
  const std::string checkpoint_dir = f.checkpoint_dir.empty() ? f.output + ".checkpoint" : f.checkpoint_dir;

  std::unique_ptr<Enrichment> run;
  if (!f.resume.empty()) {
    run = Enrichment::restore(f.resume, deps);
  } else {
    auto seed = load_taxonomy(f.input, f.lenient ? ParseMode::Lenient : ParseMode::Strict);
    run = std::make_unique<Enrichment>(seed, cfg, deps, "cli");
    run->set_checkpoint_dir(checkpoint_dir);
  }

  std::ofstream decision_log;
  if (!f.decisions.empty()) {
    decision_log.open(f.decisions, std::ios::binary | std::ios::trunc);
    if (!decision_log) throw Error(ErrorCode::Io, "cannot write " + f.decisions);
    // A resumed run re-emits what the checkpoint already holds.
    for (const auto& d : run->decisions()) decision_log << decision_to_json(d).dump() << '\n';
    decision_log.flush();
    run->set_decision_sink([&decision_log](const FilterDecision& d) {
      decision_log << decision_to_json(d).dump() << '\n';
      decision_log.flush();
    });
  }

  try {
    run->run();
  } catch (const std::exception& e) {
    std::cerr << "enrichment failed: " << e.what() << "\ncheckpoint: "
              << (f.resume.empty() ? checkpoint_dir : f.resume) << "\n";
    return kDomainFailure;
  }
  write_file(f.output, serialize_taxonomy(run->taxonomy()));
  std::cout << report_to_json(run->report()).dump() << "\n";
  return kOk;
}

int cmd_merge(const std::string& left, const std::string& right, const std::string& output,
              const std::string& report) {
  auto result = merge_taxonomies(load_taxonomy(left), load_taxonomy(right));
  write_file(output, serialize_taxonomy(result.taxonomy));
  if (!report.empty()) write_file(report, merge_report_to_json(result.report).dump());
  nlohmann::ordered_json summary;
  summary["classes"] = result.taxonomy.class_count();
  summary["added"] = result.outcome.added_count;
  std::cout << summary.dump() << "\n";
  return kOk;
}

struct ServeFlags {
  std::string bind;
  std::string data_dir;
  std::string kg_endpoint;
  std::string static_dir;
  std::size_t max_concurrent_runs = 1;
  ProviderFlags providers;
};

int cmd_serve(const ServeFlags& f) {
  ServiceConfig cfg;
  cfg.data_dir = f.data_dir.empty() ? env_or("TAXORIA_DATA_DIR", "taxoria-data") : f.data_dir;
  cfg.kg_endpoint = f.kg_endpoint.empty() ? env_or("TAXORIA_KG_ENDPOINT", std::string(kDefaultKgEndpoint)) : f.kg_endpoint;
  cfg.static_dir = f.static_dir;
  cfg.max_concurrent_runs = f.max_concurrent_runs;
  auto [host, port] = parse_bind_address(f.bind.empty() ? env_or("TAXORIA_BIND_ADDR", "127.0.0.1:8080") : f.bind);

  // Handle SIGINT/SIGTERM on a dedicated thread.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  Service service(cfg, ServiceDeps{f.providers.llm(), f.providers.similarity(f.providers.embedding_model), nullptr});
  int bound = service.start(host, port);
  spdlog::info("listening on {}:{}", host, bound);
  std::thread waiter([&] {
    int sig = 0;
    sigwait(&signals, &sig);
    spdlog::info("signal {} received, shutting down", sig);
    service.stop();
  });
  service.wait();
  pthread_kill(waiter.native_handle(), SIGTERM);
  waiter.join();
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  spdlog::set_default_logger(spdlog::stderr_color_mt("taxoria"));
  CLI::App app{"Taxonomy enrichment with LLM-generated candidate classes"};
  app.require_subcommand(1);

  std::string file;
  bool lenient = false;
  auto* validate = app.add_subcommand("validate", "Check a taxonomy document");
  validate->add_option("file", file)->required();
  validate->add_flag("--lenient", lenient, "Accept and preserve unknown keys");

  auto* stats = app.add_subcommand("stats", "Print class count and max depth");
  stats->add_option("file", file)->required();
  stats->add_flag("--lenient", lenient, "Accept and preserve unknown keys");

  EnrichFlags ef;
  auto* enrich = app.add_subcommand("enrich", "Enrich a seed taxonomy");
  enrich->add_option("--input", ef.input, "Seed taxonomy")->required();
  enrich->add_option("--output", ef.output, "Enriched taxonomy output")->required();
  enrich->add_option("--decisions", ef.decisions, "Decision log (JSON lines)");
  enrich->add_option("--model", ef.model, "Model id")->required();
  enrich->add_option("--strategy", ef.strategy, "bfs | dfs")->check(CLI::IsMember({"bfs", "dfs"}));
  enrich->add_option("--rho", ef.rho, "Similarity threshold in [0,1]");
  enrich->add_option("--max-extra-depth", ef.max_extra_depth, "Levels allowed beyond the seed depth");
  enrich->add_flag("--enable-judge", ef.enable_judge, "LLM-as-judge relevance filter");
  enrich->add_flag("--enable-kg-check", ef.enable_kg, "Reject knowledge-graph instances");
  enrich->add_option("--kg-endpoint", ef.kg_endpoint, "SPARQL endpoint (env TAXORIA_KG_ENDPOINT)");
  enrich->add_option("--judge-model", ef.judge_model, "Judge model id (defaults to --model)");
  enrich->add_option("--frontier-limit", ef.frontier_limit, "Maximum number of prompted nodes");
  enrich->add_option("--parallelism", ef.parallelism, "Concurrent generation requests");
  enrich->add_option("--checkpoint-every", ef.checkpoint_every, "Expansions between checkpoints");
  enrich->add_option("--checkpoint-dir", ef.checkpoint_dir, "Checkpoint directory (default <output>.checkpoint)");
  enrich->add_option("--resume", ef.resume, "Resume from a checkpoint directory");
  enrich->add_option("--prompt-template", ef.prompt_template, "Prompt template file with {{node}} and {{path}}");
  enrich->add_flag("--lenient", ef.lenient, "Accept and preserve unknown keys in the seed");
  ef.providers.add_to(enrich);

  std::string left, right, output, report;
  auto* merge = app.add_subcommand("merge", "Merge two taxonomies sharing a root");
  merge->add_option("left", left)->required();
  merge->add_option("right", right)->required();
  merge->add_option("--output", output)->required();
  merge->add_option("--report", report, "Color report (JSON)");

  ServeFlags sf;
  auto* serve = app.add_subcommand("serve", "Run the HTTP service");
  serve->add_option("--bind", sf.bind, "host:port (env TAXORIA_BIND_ADDR)");
  serve->add_option("--data-dir", sf.data_dir, "Data directory (env TAXORIA_DATA_DIR)");
  serve->add_option("--kg-endpoint", sf.kg_endpoint, "SPARQL endpoint (env TAXORIA_KG_ENDPOINT)");
  serve->add_option("--static-dir", sf.static_dir, "Serve console assets from this directory");
  serve->add_option("--max-concurrent-runs", sf.max_concurrent_runs, "Concurrent enrichment runs");
  sf.providers.add_to(serve);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsageError;
  }

  try {
    if (*validate) return cmd_validate(file, lenient);
    if (*stats) return cmd_stats(file, lenient);
    if (*enrich) return cmd_enrich(ef);
    if (*merge) return cmd_merge(left, right, output, report);
    if (*serve) return cmd_serve(sf);
  } catch (const Error& e) {
    std::cerr << "error: " << error_code_name(e.code()) << ": " << e.what() << "\n";
    if (is_io_error(e.code()) || e.code() == ErrorCode::InvalidConfig) return kUsageError;
    return kDomainFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kDomainFailure;
  }
  return kUsageError;
}

#include "taxoria/service.hpp"

#include <httplib.h>

#include <algorithm>
#include <atomic>
#include <cctype>
#include <chrono>
#include <condition_variable>
#include <fstream>
#include <map>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "taxoria/error.hpp"
#include "taxoria/merge.hpp"
#include "taxoria/orchestrator.hpp"
#include "taxoria/taxonomy.hpp"

namespace taxoria {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct HttpError {
  int status;
  std::string code;
  std::string message;
};

int status_for(ErrorCode c) {
  switch (c) {
    case ErrorCode::MalformedDocument:
    case ErrorCode::SchemaViolation:
    case ErrorCode::EmptyDocument:
      return 400;
    case ErrorCode::NotFound:
    case ErrorCode::PathNotFound:
      return 404;
    case ErrorCode::InvalidConfig:
    case ErrorCode::RootMismatch:
    case ErrorCode::NoMeasurableEdges:
      return 422;
    case ErrorCode::LlmUnreachable:
    case ErrorCode::EndpointUnreachable:
    case ErrorCode::KgUnreachable:
      return 502;
    default:
      return 500;
  }
}

void send_json(httplib::Response& res, int status, const std::string& body) {
  res.status = status;
  res.set_content(body, "application/json");
}

void send_error(httplib::Response& res, int status, std::string_view code, const std::string& message) {
  json j = {{"error", {{"code", std::string(code)}, {"message", message}}}};
  send_json(res, status, j.dump());
}

std::string now_iso8601() {
  auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string random_id(std::string_view prefix) {
  static std::mt19937_64 rng{std::random_device{}()};
  static std::mutex mu;
  std::lock_guard lock(mu);
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(rng()));
  return std::string(prefix) + buf;
}

json stats_json(const TaxonomyStats& s) { return {{"class_count", s.class_count}, {"max_depth", s.max_depth}}; }

}  // namespace

struct Service::Impl {
  struct StoredTaxonomy {
    std::string id;
    std::string name;
    std::string document;
    TaxonomyStats stats;
    std::string uploaded_at;
  };

  struct RunEntry {
    std::string seed_id;
    std::shared_ptr<const Taxonomy> seed;
    std::unique_ptr<Enrichment> enrichment;
    std::thread worker;
    std::atomic<bool> done{false};
  };

  ServiceConfig cfg;
  ServiceDeps deps;
  httplib::Server server;
  std::thread server_thread;

  std::mutex store_mu;
  std::map<std::string, std::shared_ptr<const StoredTaxonomy>> taxonomies;
  std::map<std::string, std::shared_ptr<const Taxonomy>> parsed;

  std::mutex runs_mu;
  std::map<std::string, std::unique_ptr<RunEntry>> runs;

  Impl(ServiceConfig c, ServiceDeps d) : cfg(std::move(c)), deps(std::move(d)) {
    fs::create_directories(cfg.data_dir / "taxonomies");
    fs::create_directories(cfg.data_dir / "runs");
    load_taxonomies();
    routes();
  }

  ~Impl() {
    server.stop();
    if (server_thread.joinable()) server_thread.join();
    std::lock_guard lock(runs_mu);
    for (auto& [_, r] : runs) r->enrichment->cancel();
    for (auto& [_, r] : runs)
      if (r->worker.joinable()) r->worker.join();
  }

  void load_taxonomies() {
    for (const auto& entry : fs::directory_iterator(cfg.data_dir / "taxonomies")) {
      if (entry.path().extension() != ".json" || entry.path().stem().extension() == ".meta") continue;
      const auto id = entry.path().stem().string();
      try {
        std::ifstream in(entry.path(), std::ios::binary);
        std::ostringstream ss;
        ss << in.rdbuf();
        auto tax = std::make_shared<const Taxonomy>(parse_taxonomy(ss.str()));
        auto stored = std::make_shared<StoredTaxonomy>();
        stored->id = id;
        stored->document = ss.str();
        stored->stats = tax->stats();
        stored->name = tax->root().name;
        std::ifstream meta_in(cfg.data_dir / "taxonomies" / (id + ".meta.json"));
        if (meta_in) {
          auto meta = json::parse(meta_in, nullptr, false);
          if (meta.is_object()) {
            stored->name = meta.value("name", stored->name);
            stored->uploaded_at = meta.value("uploaded_at", "");
          }
        }
        taxonomies[id] = stored;
        parsed[id] = tax;
      } catch (const std::exception& e) {
        spdlog::warn("ignoring stored taxonomy {}: {}", id, e.what());
      }
    }
  }

  std::shared_ptr<const Taxonomy> find_taxonomy(const std::string& id) {
    std::lock_guard lock(store_mu);
    auto it = parsed.find(id);
    return it == parsed.end() ? nullptr : it->second;
  }

  RunEntry* find_run(const std::string& id) {
    std::lock_guard lock(runs_mu);
    auto it = runs.find(id);
    return it == runs.end() ? nullptr : it->second.get();
  }

  template <typename F>
  auto guarded(F&& fn) {
    return [fn = std::forward<F>(fn)](const httplib::Request& req, httplib::Response& res) {
      try {
        fn(req, res);
      } catch (const HttpError& e) {
        send_error(res, e.status, e.code, e.message);
      } catch (const Error& e) {
        send_error(res, status_for(e.code()), error_code_name(e.code()), e.what());
      } catch (const std::exception& e) {
        send_error(res, 500, "Internal", e.what());
      }
    };
  }

  void routes() {
    server.set_payload_max_length(cfg.max_body_bytes);
    server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
      if (!res.body.empty()) return;
      std::string code = res.status == 413 ? "PayloadTooLarge" : res.status == 404 ? "NotFound" : "HttpError";
      send_error(res, res.status, code, httplib::status_message(res.status));
    });
    if (!cfg.static_dir.empty()) server.set_mount_point("/", cfg.static_dir.string());

    server.Post("/api/taxonomies", guarded([this](const auto& req, auto& res) { upload(req, res); }));
    server.Get("/api/taxonomies", guarded([this](const auto&, auto& res) { list_taxonomies(res); }));
    server.Get(R"(/api/taxonomies/([A-Za-z0-9_-]+))", guarded([this](const auto& req, auto& res) {
                 auto t = find_taxonomy(req.matches[1]);
                 if (!t) throw HttpError{404, "NotFound", "unknown taxonomy"};
                 send_json(res, 200, serialize_taxonomy(*t));
               }));
    server.Get("/api/models", guarded([this](const auto&, auto& res) {
                 send_json(res, 200, json{{"models", list_models(*deps.llm)}}.dump());
               }));
    server.Post("/api/runs", guarded([this](const auto& req, auto& res) { create_run(req, res); }));
    server.Get("/api/runs", guarded([this](const auto&, auto& res) { list_runs(res); }));
    server.Get(R"(/api/runs/([A-Za-z0-9_-]+))", guarded([this](const auto& req, auto& res) { run_status(req, res); }));
    server.Get(R"(/api/runs/([A-Za-z0-9_-]+)/decisions)",
               guarded([this](const auto& req, auto& res) { run_decisions(req, res); }));
    server.Get(R"(/api/runs/([A-Za-z0-9_-]+)/taxonomy)", guarded([this](const auto& req, auto& res) {
                 auto* r = require_run(req.matches[1]);
                 send_json(res, 200, serialize_taxonomy(r->enrichment->taxonomy()));
               }));
    server.Get(R"(/api/runs/([A-Za-z0-9_-]+)/merge-report)", guarded([this](const auto& req, auto& res) {
                 auto* r = require_run(req.matches[1]);
                 auto merged = merge_taxonomies(*r->seed, r->enrichment->taxonomy());
                 send_json(res, 200, merge_report_to_json(merged.report).dump());
               }));
    server.Post(R"(/api/runs/([A-Za-z0-9_-]+)/cancel)",
                guarded([this](const auto& req, auto& res) { cancel_run(req, res); }));
    server.Post("/api/merge", guarded([this](const auto& req, auto& res) { merge(req, res); }));
  }

  void upload(const httplib::Request& req, httplib::Response& res) {
    if (req.body.size() > cfg.max_body_bytes) throw HttpError{413, "PayloadTooLarge", "taxonomy exceeds size limit"};
    auto tax = std::make_shared<const Taxonomy>(parse_taxonomy(req.body, ParseMode::Strict));
    auto stored = std::make_shared<StoredTaxonomy>();
    stored->id = random_id("tx-");
    stored->name = req.has_param("name") ? req.get_param_value("name") : tax->root().name;
    stored->document = serialize_taxonomy(*tax);
    stored->stats = tax->stats();
    stored->uploaded_at = now_iso8601();
    {
      std::lock_guard lock(store_mu);
      std::ofstream(cfg.data_dir / "taxonomies" / (stored->id + ".json"), std::ios::binary) << stored->document;
      std::ofstream(cfg.data_dir / "taxonomies" / (stored->id + ".meta.json"))
          << json{{"name", stored->name}, {"uploaded_at", stored->uploaded_at}}.dump();
      taxonomies[stored->id] = stored;
      parsed[stored->id] = tax;
    }
    send_json(res, 201, json{{"taxonomy_id", stored->id}, {"name", stored->name}, {"stats", stats_json(stored->stats)}}.dump());
  }

  void list_taxonomies(httplib::Response& res) {
    json arr = json::array();
    std::lock_guard lock(store_mu);
    for (const auto& [id, t] : taxonomies)
      arr.push_back({{"taxonomy_id", id}, {"name", t->name}, {"stats", stats_json(t->stats)}, {"uploaded_at", t->uploaded_at}});
    send_json(res, 200, json{{"taxonomies", arr}}.dump());
  }

  std::size_t active_runs() {
    std::size_t n = 0;
    for (const auto& [_, r] : runs)
      if (!r->done) ++n;
    return n;
  }

  void create_run(const httplib::Request& req, httplib::Response& res) {
    auto body = json::parse(req.body, nullptr, false);
    if (!body.is_object()) throw HttpError{400, "MalformedDocument", "run request must be a JSON object"};
    if (!body.contains("taxonomy_id") || !body["taxonomy_id"].is_string())
      throw HttpError{422, "InvalidConfig", "taxonomy_id is required"};
    const auto seed_id = body["taxonomy_id"].get<std::string>();
    auto seed = find_taxonomy(seed_id);
    if (!seed) throw HttpError{404, "NotFound", "unknown taxonomy " + seed_id};

    json cfg_json = body;
    cfg_json["seed_taxonomy_id"] = seed_id;
    if (!cfg_json.contains("kg_endpoint")) cfg_json["kg_endpoint"] = cfg.kg_endpoint;
    if (!cfg_json.contains("checkpoint_every")) cfg_json["checkpoint_every"] = cfg.checkpoint_every;
    RunConfig run_cfg = config_from_json(cfg_json);
    run_cfg.validate();
    auto models = list_models(*deps.llm);
    if (std::find(models.begin(), models.end(), run_cfg.model_id) == models.end())
      throw HttpError{422, "InvalidConfig", "model '" + run_cfg.model_id + "' is not available"};

    std::lock_guard lock(runs_mu);
    if (active_runs() >= cfg.max_concurrent_runs)
      throw HttpError{409, "Conflict", "concurrent run limit reached"};
    auto run_id = random_id("run-");
    auto entry = std::make_unique<RunEntry>();
    entry->seed_id = seed_id;
    entry->seed = seed;
    entry->enrichment = std::make_unique<Enrichment>(*seed, run_cfg, EnrichmentDeps{deps.llm, deps.similarity, nullptr, deps.kg}, run_id);
    entry->enrichment->set_checkpoint_dir(cfg.data_dir / "runs" / run_id);
    RunEntry* raw = entry.get();
    entry->worker = std::thread([raw] {
      try {
        raw->enrichment->run();
      } catch (const std::exception& e) {
        spdlog::error("run {} failed: {}", raw->enrichment->state().run_id, e.what());
      }
      raw->done = true;
    });
    runs.emplace(run_id, std::move(entry));
    send_json(res, 202, json{{"run_id", run_id}}.dump());
  }

  RunEntry* require_run(const std::string& id) {
    auto* r = find_run(id);
    if (!r) throw HttpError{404, "NotFound", "unknown run " + id};
    return r;
  }

  json run_json(const std::string& id, RunEntry& r) {
    auto state = r.enrichment->state();
    json j = state_to_json(state);
    j["run_id"] = id;
    j["taxonomy_id"] = r.seed_id;
    j["config"] = config_to_json(r.enrichment->config());
    j["report"] = report_to_json(r.enrichment->report());
    return j;
  }

  void run_status(const httplib::Request& req, httplib::Response& res) {
    std::string id = req.matches[1];
    send_json(res, 200, run_json(id, *require_run(id)).dump());
  }

  void list_runs(httplib::Response& res) {
    json arr = json::array();
    std::lock_guard lock(runs_mu);
    for (auto& [id, r] : runs) arr.push_back(run_json(id, *r));
    send_json(res, 200, json{{"runs", arr}}.dump());
  }

  void run_decisions(const httplib::Request& req, httplib::Response& res) {
    auto* r = require_run(req.matches[1]);
    auto parse_count = [&](const char* key, std::size_t fallback) -> std::size_t {
      if (!req.has_param(key)) return fallback;
      try {
        long long v = std::stoll(req.get_param_value(key));
        if (v < 0) throw std::invalid_argument(key);
        return static_cast<std::size_t>(v);
      } catch (const std::exception&) {
        throw HttpError{422, "InvalidConfig", std::string("bad `") + key + "` parameter"};
      }
    };
    const std::size_t after = parse_count("after", 0);
    const std::size_t limit = std::min(parse_count("limit", cfg.decisions_page_limit), cfg.decisions_page_limit);
    auto page = r->enrichment->decisions(after, limit);
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const auto& d : page) arr.push_back(decision_to_json(d));
    nlohmann::ordered_json j;
    j["after"] = after;
    j["next"] = after + page.size();
    j["decisions"] = std::move(arr);
    send_json(res, 200, j.dump());
  }

  void cancel_run(const httplib::Request& req, httplib::Response& res) {
    auto* r = require_run(req.matches[1]);
    auto phase = r->enrichment->state().phase;
    if (r->done || phase == Phase::Completed || phase == Phase::Cancelled || phase == Phase::Failed)
      throw HttpError{409, "Conflict", "run already finished (" + std::string(to_string(phase)) + ")"};
    r->enrichment->cancel();
    send_json(res, 202, json{{"run_id", std::string(req.matches[1])}, {"cancel_requested", true}}.dump());
  }

  void merge(const httplib::Request& req, httplib::Response& res) {
    auto body = json::parse(req.body, nullptr, false);
    if (!body.is_object() || !body.contains("left_id") || !body.contains("right_id") ||
        !body["left_id"].is_string() || !body["right_id"].is_string())
      throw HttpError{400, "MalformedDocument", "expected {\"left_id\": ..., \"right_id\": ...}"};
    auto left = find_taxonomy(body["left_id"].get<std::string>());
    auto right = find_taxonomy(body["right_id"].get<std::string>());
    if (!left || !right) throw HttpError{404, "NotFound", "unknown taxonomy"};
    auto merged = merge_taxonomies(*left, *right);
    nlohmann::ordered_json j;
    j["taxonomy"] = node_to_json(merged.taxonomy.root());
    j["report"] = merge_report_to_json(merged.report);
    j["added_count"] = merged.outcome.added_count;
    send_json(res, 200, j.dump());
  }
};

Service::Service(ServiceConfig cfg, ServiceDeps deps) {
  if (!deps.llm) throw Error(ErrorCode::InvalidConfig, "service needs an LLM client");
  if (!deps.similarity) throw Error(ErrorCode::InvalidConfig, "service needs a similarity provider");
  impl_ = std::make_unique<Impl>(std::move(cfg), std::move(deps));
}

Service::~Service() = default;

int Service::start(const std::string& host, int port) {
  int bound = port == 0 ? impl_->server.bind_to_any_port(host) : (impl_->server.bind_to_port(host, port) ? port : -1);
  if (bound < 0) throw Error(ErrorCode::Io, "cannot bind " + host + ":" + std::to_string(port));
  impl_->server_thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return bound;
}

void Service::wait() {
  if (impl_->server_thread.joinable()) impl_->server_thread.join();
}

void Service::stop() { impl_->server.stop(); }

std::pair<std::string, int> parse_bind_address(const std::string& addr) {
  auto colon = addr.rfind(':');
  std::string host = colon == std::string::npos ? "0.0.0.0" : addr.substr(0, colon);
  std::string port = colon == std::string::npos ? addr : addr.substr(colon + 1);
  if (host.empty()) host = "0.0.0.0";
  try {
    std::size_t used = 0;
    int p = std::stoi(port, &used);
    if (used != port.size() || p < 0 || p > 65535) throw std::out_of_range(port);
    return {host, p};
  } catch (const std::exception&) {
    throw Error(ErrorCode::InvalidConfig, "bad bind address '" + addr + "'");
  }
}

}  // namespace taxoria

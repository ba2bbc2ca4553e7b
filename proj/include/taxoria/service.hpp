#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <string>

#include "taxoria/filters.hpp"
#include "taxoria/generation.hpp"

namespace taxoria {

struct ServiceConfig {
  std::filesystem::path data_dir = "taxoria-data";
  std::size_t max_body_bytes = 20u * 1024u * 1024u;
  std::size_t max_concurrent_runs = 1;
  std::size_t decisions_page_limit = 1000;
  std::size_t checkpoint_every = 25;
  std::string kg_endpoint{kDefaultKgEndpoint};
  // Static assets (the operator console) served from "/" when set.
  std::filesystem::path static_dir;
};

struct ServiceDeps {
  std::shared_ptr<LlmClient> llm;
  std::shared_ptr<const Similarity> similarity;
  std::shared_ptr<KgClient> kg;
};

/// HTTP/JSON backend: taxonomy upload, run lifecycle, status polling,
/// decision pagination and export. Taxonomies and run checkpoints live
/// under `data_dir`.
class Service {
 public:
  Service(ServiceConfig cfg, ServiceDeps deps);
  ~Service();

  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Binds and serves on a background thread. Port 0 picks a free port;
  /// the bound port is returned. Throws Error(Io) when binding fails.
  int start(const std::string& host, int port);
  /// Blocks until stop() is called.
  void wait();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// "host:port" -> (host, port); a bare port binds 0.0.0.0.
std::pair<std::string, int> parse_bind_address(const std::string& addr);

}  // namespace taxoria

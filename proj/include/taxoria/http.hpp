#pragma once

#include <chrono>
#include <string>
#include <utility>
#include <vector>

namespace taxoria::http {

struct Response {
  int status = 0;
  std::string body;
};

using Headers = std::vector<std::pair<std::string, std::string>>;
using Params = std::vector<std::pair<std::string, std::string>>;

/// Splits "http://host:port/prefix" into origin and path prefix.
std::pair<std::string, std::string> split_url(const std::string& url);

/// Throws Error(EndpointUnreachable) on transport failure; HTTP error
/// statuses are returned to the caller.
Response post(const std::string& url, const std::string& body, const std::string& content_type,
              std::chrono::milliseconds timeout, const Headers& headers = {});
Response get(const std::string& url, const Params& params, std::chrono::milliseconds timeout,
             const Headers& headers = {});

std::string sha256_hex(const std::string& data);

}  // namespace taxoria::http

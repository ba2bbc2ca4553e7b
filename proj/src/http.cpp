#include "taxoria/http.hpp"

#include <httplib.h>
#include <openssl/evp.h>

#include <array>
#include <cstdio>

#include "taxoria/error.hpp"

namespace taxoria::http {

namespace {

httplib::Client make_client(const std::string& origin, std::chrono::milliseconds timeout) {
  httplib::Client cli(origin);
  cli.set_connection_timeout(timeout);
  cli.set_read_timeout(timeout);
  cli.set_write_timeout(timeout);
  cli.set_follow_location(true);
  return cli;
}

httplib::Headers to_headers(const Headers& headers) {
  httplib::Headers out;
  for (const auto& [k, v] : headers) out.emplace(k, v);
  return out;
}

}  // namespace

std::pair<std::string, std::string> split_url(const std::string& url) {
  auto scheme_end = url.find("://");
  std::size_t host_start = scheme_end == std::string::npos ? 0 : scheme_end + 3;
  auto slash = url.find('/', host_start);
  if (slash == std::string::npos) return {url, ""};
  std::string prefix = url.substr(slash);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  return {url.substr(0, slash), prefix};
}

Response post(const std::string& url, const std::string& body, const std::string& content_type,
              std::chrono::milliseconds timeout, const Headers& headers) {
  auto [origin, path] = split_url(url);
  auto cli = make_client(origin, timeout);
  auto res = cli.Post(path.empty() ? "/" : path, to_headers(headers), body, content_type);
  if (!res)
    throw Error(ErrorCode::EndpointUnreachable,
                "POST " + url + " failed: " + httplib::to_string(res.error()));
  return {res->status, res->body};
}

Response get(const std::string& url, const Params& params, std::chrono::milliseconds timeout,
             const Headers& headers) {
  auto [origin, path] = split_url(url);
  auto cli = make_client(origin, timeout);
  httplib::Params p;
  for (const auto& [k, v] : params) p.emplace(k, v);
  auto res = cli.Get(path.empty() ? "/" : path, p, to_headers(headers));
  if (!res)
    throw Error(ErrorCode::EndpointUnreachable,
                "GET " + url + " failed: " + httplib::to_string(res.error()));
  return {res->status, res->body};
}

std::string sha256_hex(const std::string& data) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  EVP_Digest(data.data(), data.size(), digest.data(), &len, EVP_sha256(), nullptr);
  std::string hex;
  hex.reserve(len * 2);
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof(buf), "%02x", digest[i]);
    hex += buf;
  }
  return hex;
}

}  // namespace taxoria::http

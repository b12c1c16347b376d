#pragma once

#include <chrono>
#include <string>
#include <utility>
#include <vector>

namespace dlap::net {

struct HttpResponse {
  int status = 0;
  std::string body;
};

/// Splits "scheme://host[:port][/base]" into the origin and a base path.
std::pair<std::string, std::string> split_url(const std::string& url);

/// Thin blocking JSON client over one base URL. Network failures and
/// timeouts throw Error(kTransport); any HTTP status is returned as-is.
class HttpEndpoint {
 public:
  HttpEndpoint(const std::string& base_url, std::chrono::milliseconds timeout,
               std::vector<std::pair<std::string, std::string>> headers = {});

  HttpResponse post_json(const std::string& path, const std::string& body) const;
  HttpResponse get(const std::string& path) const;

  const std::string& origin() const { return origin_; }

 private:
  std::string origin_;
  std::string base_path_;
  std::chrono::milliseconds timeout_;
  std::vector<std::pair<std::string, std::string>> headers_;
};

}  // namespace dlap::net

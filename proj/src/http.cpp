#include "dlap/http.hpp"

#include <httplib.h>

#include "dlap/error.hpp"

namespace dlap::net {

std::pair<std::string, std::string> split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos)
    throw Error(ErrorCode::kInvalidArgument, "URL lacks a scheme: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, ""};
  std::string base = url.substr(path_start);
  while (!base.empty() && base.back() == '/') base.pop_back();
  return {url.substr(0, path_start), base};
}

HttpEndpoint::HttpEndpoint(const std::string& base_url, std::chrono::milliseconds timeout,
                           std::vector<std::pair<std::string, std::string>> headers)
    : timeout_(timeout), headers_(std::move(headers)) {
  std::tie(origin_, base_path_) = split_url(base_url);
}

namespace {

template <typename Call>
HttpResponse perform(const std::string& origin, std::chrono::milliseconds timeout,
                     const std::vector<std::pair<std::string, std::string>>& headers,
                     Call&& call) {
  httplib::Client client(origin);
  client.set_connection_timeout(timeout);
  client.set_read_timeout(timeout);
  client.set_write_timeout(timeout);
  httplib::Headers h;
  for (const auto& [k, v] : headers) h.emplace(k, v);
  client.set_default_headers(h);
  auto result = call(client);
  if (!result)
    throw Error(ErrorCode::kTransport,
                origin + ": " + httplib::to_string(result.error()));
  return HttpResponse{result->status, result->body};
}

}  // namespace

HttpResponse HttpEndpoint::post_json(const std::string& path, const std::string& body) const {
  const std::string full = base_path_ + path;
  return perform(origin_, timeout_, headers_, [&](httplib::Client& c) {
    return c.Post(full, body, "application/json");
  });
}

HttpResponse HttpEndpoint::get(const std::string& path) const {
  const std::string full = base_path_ + path;
  return perform(origin_, timeout_, headers_, [&](httplib::Client& c) { return c.Get(full); });
}

}  // namespace dlap::net

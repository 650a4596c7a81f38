#pragma once

// http_transport backed by cpp-httplib. Define CPPHTTPLIB_OPENSSL_SUPPORT (and
// link OpenSSL) before including this header to reach https endpoints.

#include <chrono>
#include <string>

#include <httplib.h>

#include "ztree/llm_gateway.hpp"

namespace ztree {

class httplib_transport : public http_transport {
public:
  explicit httplib_transport(std::chrono::seconds timeout = std::chrono::seconds(120)) : timeout_(timeout) {}

  http_response post_json(const std::string& url, const std::string& bearer_token, const std::string& body) override {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw transport_error("malformed URL '" + url + "'");
    const auto path_start = url.find('/', scheme_end + 3);
    const auto origin = url.substr(0, path_start);
    const auto path = path_start == std::string::npos ? std::string("/") : url.substr(path_start);

    httplib::Client client(origin);
    client.set_connection_timeout(std::chrono::duration_cast<std::chrono::seconds>(timeout_).count());
    client.set_read_timeout(timeout_.count());
    client.set_write_timeout(timeout_.count());
    httplib::Headers headers;
    if (!bearer_token.empty()) headers.emplace("Authorization", "Bearer " + bearer_token);

    auto res = client.Post(path, headers, body, "application/json");
    if (!res) throw transport_error("request to " + origin + " failed: " + httplib::to_string(res.error()));
    return {res->status, res->body};
  }

private:
  std::chrono::seconds timeout_;
};

}  // namespace ztree

#pragma once

#include <memory>
#include <string>

#include <nlohmann/json.hpp>

#include "dtr/error.hpp"

namespace dtr {

struct HttpEndpoint {
    std::string base_url;  // e.g. http://localhost:8000/v1
    std::string api_key;
    int timeout_seconds = 120;
    int retries = 3;        // extra attempts after the first
    int backoff_ms = 200;   // doubled after each failed attempt
    int max_in_flight = 4;
};

// JSON-over-HTTP POST with retry on transport failures, 429 and 5xx.
// Other HTTP errors fail immediately. Failures raise Error(failure_category).
class JsonHttpClient {
public:
    JsonHttpClient(HttpEndpoint endpoint, ErrorCategory failure_category);
    ~JsonHttpClient();
    JsonHttpClient(const JsonHttpClient&) = delete;
    JsonHttpClient& operator=(const JsonHttpClient&) = delete;

    nlohmann::json post(const std::string& path, const nlohmann::json& body) const;

    const HttpEndpoint& endpoint() const noexcept { return endpoint_; }

private:
    struct Limiter;

    HttpEndpoint endpoint_;
    ErrorCategory failure_category_;
    std::string scheme_host_port_;
    std::string path_prefix_;
    std::unique_ptr<Limiter> limiter_;
};

} // namespace dtr

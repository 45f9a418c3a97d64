#include "dtr/http.hpp"

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <chrono>
#include <condition_variable>
#include <mutex>
#include <thread>

namespace dtr {

struct JsonHttpClient::Limiter {
    std::mutex mu;
    std::condition_variable cv;
    int available;

    explicit Limiter(int n) : available(n < 1 ? 1 : n) {}

    void acquire() {
        std::unique_lock lock(mu);
        cv.wait(lock, [&] { return available > 0; });
        --available;
    }
    void release() {
        {
            std::lock_guard lock(mu);
            ++available;
        }
        cv.notify_one();
    }
};

JsonHttpClient::JsonHttpClient(HttpEndpoint endpoint, ErrorCategory failure_category)
        : endpoint_(std::move(endpoint)),
          failure_category_(failure_category),
          limiter_(std::make_unique<Limiter>(endpoint_.max_in_flight)) {
    const auto& url = endpoint_.base_url;
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) {
        fail(ErrorCategory::config, "endpoint url needs a scheme: '" + url + "'");
    }
    const auto path_start = url.find('/', scheme_end + 3);
    scheme_host_port_ = url.substr(0, path_start);
    if (path_start != std::string::npos) {
        path_prefix_ = url.substr(path_start);
        while (!path_prefix_.empty() && path_prefix_.back() == '/') {
            path_prefix_.pop_back();
        }
    }
}

JsonHttpClient::~JsonHttpClient() = default;

nlohmann::json JsonHttpClient::post(const std::string& path, const nlohmann::json& body) const {
    const std::string full_path = path_prefix_ + path;
    const std::string payload = body.dump();
    httplib::Headers headers;
    if (!endpoint_.api_key.empty()) {
        headers.emplace("Authorization", "Bearer " + endpoint_.api_key);
    }

    std::string last_error;
    int delay_ms = endpoint_.backoff_ms;
    for (int attempt = 0; attempt <= endpoint_.retries; ++attempt) {
        if (attempt > 0) {
            std::this_thread::sleep_for(std::chrono::milliseconds(delay_ms));
            delay_ms *= 2;
        }
        limiter_->acquire();
        httplib::Result res;
        {
            httplib::Client client(scheme_host_port_);
            client.set_connection_timeout(endpoint_.timeout_seconds, 0);
            client.set_read_timeout(endpoint_.timeout_seconds, 0);
            client.set_write_timeout(endpoint_.timeout_seconds, 0);
            res = client.Post(full_path, headers, payload, "application/json");
        }
        limiter_->release();

        if (!res) {
            last_error = "transport error: " + httplib::to_string(res.error());
            continue;
        }
        if (res->status == 429 || res->status >= 500) {
            last_error = "HTTP " + std::to_string(res->status);
            continue;
        }
        if (res->status != 200) {
            fail(failure_category_, "POST " + full_path + " returned HTTP " +
                                            std::to_string(res->status) + ": " +
                                            res->body.substr(0, 200));
        }
        try {
            return nlohmann::json::parse(res->body);
        } catch (const nlohmann::json::parse_error& e) {
            fail(failure_category_, "POST " + full_path + " returned invalid JSON: " + e.what());
        }
    }
    fail(failure_category_, "POST " + full_path + " failed after " +
                                    std::to_string(endpoint_.retries + 1) +
                                    " attempts: " + last_error);
}

} // namespace dtr

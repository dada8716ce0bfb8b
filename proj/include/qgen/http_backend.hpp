#pragma once

#include <chrono>
#include <condition_variable>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "qgen/backend.hpp"

namespace qgen {

struct HttpResponse {
    int status = 0;  // 0 means the request never got a response
    std::string body;
};

using Header = std::pair<std::string, std::string>;

// Seam for tests: the real implementation posts over cpp-httplib, doubles
// inject failures or canned payloads.
class Transport {
  public:
    virtual ~Transport() = default;
    virtual HttpResponse post(const std::string& path, const std::string& body,
                              const std::vector<Header>& headers) = 0;
};

// Connection-per-request client built from base_url.
std::unique_ptr<Transport> make_httplib_transport(const std::string& base_url,
                                                  double timeout_s);

struct HttpBackendConfig {
    std::string base_url = "http://127.0.0.1:8080/v1";
    std::string model = "local-model";
    double timeout_s = 60.0;
    int max_retries = 3;
    int max_in_flight = 4;
    int requests_per_minute = 0;  // 0 = unlimited
    int backoff_ms = 250;
    std::string api_key;  // usually from QGEN_API_KEY
};

// Simple counting gate for the max-in-flight cap.
class Semaphore {
  public:
    explicit Semaphore(int count) : count_(count) {}
    void acquire();
    void release();

  private:
    std::mutex mu_;
    std::condition_variable cv_;
    int count_;
};

// Sliding-window request budget. Clock and sleep are injectable so tests
// do not wait out real minutes.
class RateLimiter {
  public:
    using Clock = std::function<std::chrono::steady_clock::time_point()>;
    using Sleep = std::function<void(std::chrono::milliseconds)>;

    explicit RateLimiter(int per_minute);
    RateLimiter(int per_minute, Clock clock, Sleep sleep);

    void acquire();

  private:
    int per_minute_;
    Clock clock_;
    Sleep sleep_;
    std::mutex mu_;
    std::deque<std::chrono::steady_clock::time_point> window_;
};

// OpenAI-compatible completions client. Generation posts {model, prompt,
// max_tokens, temperature, top_p, n, stop, logprobs}; scoring uses the
// echo-with-logprobs form of the same endpoint with max_tokens = 0.
// Contrastive search is not expressible over this wire and is rejected.
class HttpBackend : public LmBackend {
  public:
    explicit HttpBackend(HttpBackendConfig config);
    HttpBackend(HttpBackendConfig config, std::unique_ptr<Transport> transport);

    std::vector<Completion> generate(const std::string& prompt,
                                     const DecodingParams& params) override;
    std::vector<TokenScore> score_completion(
        const std::string& prompt, const std::string& completion) override;

  private:
    HttpResponse post_with_retry(const std::string& body);
    nlohmann::json post_json(const std::string& body);

    HttpBackendConfig config_;
    std::unique_ptr<Transport> transport_;
    Semaphore in_flight_;
    RateLimiter limiter_;
};

}  // namespace qgen

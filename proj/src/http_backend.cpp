#include "qgen/http_backend.hpp"

#include <cmath>
#include <thread>

#include "httplib.h"
#include "qgen/strings.hpp"

namespace qgen {

namespace {

// Splits "http://host:port/v1" into the client origin and the path prefix.
struct BaseUrl {
    std::string origin;
    std::string prefix;
};

BaseUrl split_base_url(const std::string& base_url) {
    BaseUrl out;
    size_t scheme = base_url.find("://");
    size_t path_start = scheme == std::string::npos
                            ? base_url.find('/')
                            : base_url.find('/', scheme + 3);
    if (path_start == std::string::npos) {
        out.origin = base_url;
    } else {
        out.origin = base_url.substr(0, path_start);
        out.prefix = base_url.substr(path_start);
        while (!out.prefix.empty() && out.prefix.back() == '/') {
            out.prefix.pop_back();
        }
    }
    return out;
}

class HttplibTransport : public Transport {
  public:
    HttplibTransport(std::string base_url, double timeout_s)
        : base_(split_base_url(base_url)), timeout_s_(timeout_s) {}

    HttpResponse post(const std::string& path, const std::string& body,
                      const std::vector<Header>& headers) override {
        httplib::Client client(base_.origin);
        const auto secs = static_cast<time_t>(timeout_s_);
        const auto usecs = static_cast<time_t>(
            (timeout_s_ - static_cast<double>(secs)) * 1e6);
        client.set_connection_timeout(secs, usecs);
        client.set_read_timeout(secs, usecs);
        client.set_write_timeout(secs, usecs);
        httplib::Headers hs;
        for (const auto& [k, v] : headers) hs.emplace(k, v);
        auto res = client.Post(base_.prefix + path, hs, body,
                               "application/json");
        if (!res) return {0, ""};
        return {res->status, res->body};
    }

  private:
    BaseUrl base_;
    double timeout_s_;
};

std::string provider_message(const std::string& body, int status) {
    try {
        auto j = nlohmann::json::parse(body);
        if (j.contains("error")) {
            const auto& err = j["error"];
            if (err.is_object() && err.contains("message")) {
                return err["message"].get<std::string>();
            }
            if (err.is_string()) return err.get<std::string>();
        }
    } catch (const nlohmann::json::parse_error&) {
        // fall through to the raw body
    }
    std::string raw = body.substr(0, 200);
    return "HTTP " + std::to_string(status) +
           (raw.empty() ? "" : ": " + raw);
}

std::optional<std::vector<TokenScore>> parse_choice_logprobs(
    const nlohmann::json& choice, size_t min_offset) {
    if (!choice.contains("logprobs") || choice["logprobs"].is_null()) {
        return std::nullopt;
    }
    const auto& lp = choice["logprobs"];
    if (!lp.contains("tokens") || !lp.contains("token_logprobs")) {
        return std::nullopt;
    }
    const auto& tokens = lp["tokens"];
    const auto& values = lp["token_logprobs"];
    const bool has_offsets =
        lp.contains("text_offset") && lp["text_offset"].is_array();
    std::vector<TokenScore> scores;
    for (size_t i = 0; i < tokens.size() && i < values.size(); ++i) {
        if (has_offsets && i < lp["text_offset"].size() &&
            lp["text_offset"][i].get<size_t>() < min_offset) {
            continue;  // prompt token under echo
        }
        if (values[i].is_null()) {
            if (min_offset == 0 && i == 0) continue;  // first-token null
            throw ApiError("provider returned null logprob for token " +
                           std::to_string(i));
        }
        double v = values[i].get<double>();
        if (!std::isfinite(v)) {
            throw ApiError("provider returned non-finite logprob");
        }
        scores.push_back({tokens[i].get<std::string>(), std::min(v, 0.0)});
    }
    return scores;
}

}  // namespace

std::unique_ptr<Transport> make_httplib_transport(const std::string& base_url,
                                                  double timeout_s) {
    return std::make_unique<HttplibTransport>(base_url, timeout_s);
}

void Semaphore::acquire() {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return count_ > 0; });
    --count_;
}

void Semaphore::release() {
    {
        std::lock_guard lock(mu_);
        ++count_;
    }
    cv_.notify_one();
}

RateLimiter::RateLimiter(int per_minute)
    : RateLimiter(per_minute, [] { return std::chrono::steady_clock::now(); },
                  [](std::chrono::milliseconds d) {
                      std::this_thread::sleep_for(d);
                  }) {}

RateLimiter::RateLimiter(int per_minute, Clock clock, Sleep sleep)
    : per_minute_(per_minute), clock_(std::move(clock)),
      sleep_(std::move(sleep)) {}

void RateLimiter::acquire() {
    if (per_minute_ <= 0) return;
    using namespace std::chrono;
    while (true) {
        milliseconds wait{0};
        {
            std::lock_guard lock(mu_);
            const auto now = clock_();
            while (!window_.empty() && now - window_.front() >= minutes(1)) {
                window_.pop_front();
            }
            if (window_.size() < static_cast<size_t>(per_minute_)) {
                window_.push_back(now);
                return;
            }
            wait = duration_cast<milliseconds>(window_.front() + minutes(1) -
                                               now) +
                   milliseconds(1);
        }
        sleep_(wait);
    }
}

HttpBackend::HttpBackend(HttpBackendConfig config)
    : HttpBackend(config,
                  make_httplib_transport(config.base_url, config.timeout_s)) {}

HttpBackend::HttpBackend(HttpBackendConfig config,
                         std::unique_ptr<Transport> transport)
    : config_(std::move(config)), transport_(std::move(transport)),
      in_flight_(config_.max_in_flight > 0 ? config_.max_in_flight : 1),
      limiter_(config_.requests_per_minute) {}

HttpResponse HttpBackend::post_with_retry(const std::string& body) {
    std::vector<Header> headers;
    if (!config_.api_key.empty()) {
        headers.emplace_back("Authorization", "Bearer " + config_.api_key);
    }
    const int attempts_allowed = 1 + std::max(0, config_.max_retries);
    for (int attempt = 1; attempt <= attempts_allowed; ++attempt) {
        limiter_.acquire();
        in_flight_.acquire();
        HttpResponse res;
        try {
            res = transport_->post("/completions", body, headers);
        } catch (...) {
            in_flight_.release();
            throw;
        }
        in_flight_.release();
        if (res.status != 0) return res;
        if (attempt < attempts_allowed && config_.backoff_ms > 0) {
            std::this_thread::sleep_for(
                std::chrono::milliseconds(config_.backoff_ms << (attempt - 1)));
        }
    }
    throw TransportError("transport failure after " +
                             std::to_string(attempts_allowed) + " attempt(s)",
                         attempts_allowed);
}

nlohmann::json HttpBackend::post_json(const std::string& body) {
    const HttpResponse res = post_with_retry(body);
    if (res.status == 429) {
        throw QuotaError("completion budget exceeded: " +
                         provider_message(res.body, res.status));
    }
    if (res.status < 200 || res.status >= 300) {
        throw ApiError(provider_message(res.body, res.status));
    }
    try {
        return nlohmann::json::parse(res.body);
    } catch (const nlohmann::json::parse_error& e) {
        throw ApiError(std::string("malformed provider response: ") + e.what());
    }
}

std::vector<Completion> HttpBackend::generate(const std::string& prompt,
                                              const DecodingParams& params) {
    params.validate();
    if (params.strategy == DecodingStrategy::Contrastive) {
        throw CapabilityError(
            "contrastive search needs model internals the completions API "
            "does not expose; use the mock backend or a local decoder");
    }
    nlohmann::json payload{
        {"model", config_.model},
        {"prompt", prompt},
        {"max_tokens", params.max_new_tokens},
        {"n", params.n},
        {"logprobs", 0},
    };
    if (!params.stop.empty()) payload["stop"] = params.stop;
    if (params.strategy == DecodingStrategy::Greedy) {
        payload["temperature"] = 0.0;
    } else {
        payload["temperature"] = params.temperature;
        payload["top_p"] = params.top_p;
    }

    const nlohmann::json res = post_json(payload.dump());
    if (!res.contains("choices") || !res["choices"].is_array()) {
        throw ApiError("provider response has no choices array");
    }
    std::vector<Completion> out;
    for (const auto& choice : res["choices"]) {
        Completion c;
        c.text = apply_stop(choice.value("text", std::string{}), params.stop);
        c.token_scores = parse_choice_logprobs(choice, 0);
        out.push_back(std::move(c));
    }
    if (out.size() != static_cast<size_t>(params.n)) {
        throw ApiError("provider returned " + std::to_string(out.size()) +
                       " choices, expected " + std::to_string(params.n));
    }
    return out;
}

std::vector<TokenScore> HttpBackend::score_completion(
    const std::string& prompt, const std::string& completion) {
    if (trim(completion).empty()) {
        throw std::invalid_argument(
            "score_completion: completion must be non-empty");
    }
    const nlohmann::json payload{
        {"model", config_.model}, {"prompt", prompt + completion},
        {"max_tokens", 0},        {"echo", true},
        {"logprobs", 0},
    };
    const nlohmann::json res = post_json(payload.dump());
    if (!res.contains("choices") || res["choices"].empty()) {
        throw ApiError("provider response has no choices array");
    }
    auto scores = parse_choice_logprobs(res["choices"][0], prompt.size());
    if (!scores) {
        throw CapabilityError(
            "backend did not return logprobs; use the mock backend or a "
            "logprob-capable completions endpoint");
    }
    return *scores;
}

}  // namespace qgen

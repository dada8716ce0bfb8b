#pragma once

#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

namespace qgen {

enum class DecodingStrategy { Greedy, Nucleus, Contrastive };

std::string_view to_string(DecodingStrategy s);
std::optional<DecodingStrategy> parse_strategy(std::string_view raw);

struct DecodingParams {
    DecodingStrategy strategy = DecodingStrategy::Greedy;
    double top_p = 0.9;          // nucleus
    double temperature = 1.0;    // nucleus
    int top_k = 4;               // contrastive
    double alpha_penalty = 0.6;  // contrastive
    int n = 1;
    int max_new_tokens = 64;
    std::vector<std::string> stop = {"\n"};

    // Throws std::invalid_argument; greedy requires n == 1.
    void validate() const;

    nlohmann::json to_json() const;
    static DecodingParams from_json(const nlohmann::json& j);

    // Stable serialization used as a cache / replay key component.
    std::string canonical_key() const;

    static DecodingParams greedy();
    static DecodingParams nucleus(double p, double temperature, int n);
    static DecodingParams contrastive(int k, double alpha, int n);
};

struct TokenScore {
    std::string token;
    double logprob = 0.0;  // always finite and <= 0
};

struct Completion {
    std::string text;
    std::optional<std::vector<TokenScore>> token_scores;
};

class BackendError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Transport-level failure after bounded retries; retryable by the caller.
class TransportError : public BackendError {
  public:
    TransportError(const std::string& msg, int attempts)
        : BackendError(msg), attempts(attempts) {}
    int attempts;
};

// The provider returned an error payload; retrying will not help.
class ApiError : public BackendError {
    using BackendError::BackendError;
};

class QuotaError : public BackendError {
    using BackendError::BackendError;
};

// The backend cannot honor the request (no logprobs, no contrastive search).
class CapabilityError : public BackendError {
    using BackendError::BackendError;
};

// Generation-and-scoring contract. Implementations must be safely shareable
// across concurrent callers.
class LmBackend {
  public:
    virtual ~LmBackend() = default;

    // Returns params.n completions, each truncated at the first stop string.
    virtual std::vector<Completion> generate(const std::string& prompt,
                                             const DecodingParams& params) = 0;

    // One TokenScore per completion token under teacher forcing; prompt
    // tokens are excluded. The completion must be non-empty.
    virtual std::vector<TokenScore> score_completion(
        const std::string& prompt, const std::string& completion) = 0;
};

// Truncates at the earliest occurrence of any stop string.
std::string apply_stop(std::string text, std::span<const std::string> stops);

}  // namespace qgen

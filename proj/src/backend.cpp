#include "qgen/backend.hpp"

#include <cmath>

namespace qgen {

std::string_view to_string(DecodingStrategy s) {
    switch (s) {
        case DecodingStrategy::Greedy: return "greedy";
        case DecodingStrategy::Nucleus: return "nucleus";
        case DecodingStrategy::Contrastive: return "contrastive";
    }
    return "greedy";
}

std::optional<DecodingStrategy> parse_strategy(std::string_view raw) {
    if (raw == "greedy") return DecodingStrategy::Greedy;
    if (raw == "nucleus") return DecodingStrategy::Nucleus;
    if (raw == "contrastive") return DecodingStrategy::Contrastive;
    return std::nullopt;
}

void DecodingParams::validate() const {
    if (n < 1) throw std::invalid_argument("decoding: n must be >= 1");
    if (max_new_tokens < 1) {
        throw std::invalid_argument("decoding: max_new_tokens must be >= 1");
    }
    switch (strategy) {
        case DecodingStrategy::Greedy:
            if (n != 1) {
                throw std::invalid_argument("decoding: greedy requires n == 1");
            }
            break;
        case DecodingStrategy::Nucleus:
            if (!(top_p > 0.0 && top_p <= 1.0)) {
                throw std::invalid_argument(
                    "decoding: nucleus requires top_p in (0,1]");
            }
            if (!(temperature > 0.0) || !std::isfinite(temperature)) {
                throw std::invalid_argument(
                    "decoding: nucleus requires temperature > 0");
            }
            break;
        case DecodingStrategy::Contrastive:
            if (top_k < 1) {
                throw std::invalid_argument(
                    "decoding: contrastive requires top_k >= 1");
            }
            if (!(alpha_penalty >= 0.0 && alpha_penalty <= 1.0)) {
                throw std::invalid_argument(
                    "decoding: contrastive requires alpha_penalty in [0,1]");
            }
            break;
    }
}

nlohmann::json DecodingParams::to_json() const {
    return nlohmann::json{
        {"strategy", std::string(to_string(strategy))},
        {"top_p", top_p},
        {"temperature", temperature},
        {"top_k", top_k},
        {"alpha_penalty", alpha_penalty},
        {"n", n},
        {"max_new_tokens", max_new_tokens},
        {"stop", stop},
    };
}

DecodingParams DecodingParams::from_json(const nlohmann::json& j) {
    DecodingParams p;
    if (j.contains("strategy")) {
        auto s = parse_strategy(j.at("strategy").get<std::string>());
        if (!s) {
            throw std::invalid_argument("decoding: unknown strategy '" +
                                        j.at("strategy").get<std::string>() +
                                        "'");
        }
        p.strategy = *s;
    }
    if (j.contains("top_p")) p.top_p = j.at("top_p").get<double>();
    if (j.contains("temperature")) {
        p.temperature = j.at("temperature").get<double>();
    }
    if (j.contains("top_k")) p.top_k = j.at("top_k").get<int>();
    if (j.contains("alpha_penalty")) {
        p.alpha_penalty = j.at("alpha_penalty").get<double>();
    }
    if (j.contains("n")) p.n = j.at("n").get<int>();
    if (j.contains("max_new_tokens")) {
        p.max_new_tokens = j.at("max_new_tokens").get<int>();
    }
    if (j.contains("stop")) {
        p.stop = j.at("stop").get<std::vector<std::string>>();
    }
    return p;
}

std::string DecodingParams::canonical_key() const {
    // nlohmann objects keep keys sorted, so dump() is stable
    return to_json().dump();
}

DecodingParams DecodingParams::greedy() {
    DecodingParams p;
    p.strategy = DecodingStrategy::Greedy;
    p.n = 1;
    return p;
}

DecodingParams DecodingParams::nucleus(double top_p, double temperature, int n) {
    DecodingParams p;
    p.strategy = DecodingStrategy::Nucleus;
    p.top_p = top_p;
    p.temperature = temperature;
    p.n = n;
    return p;
}

DecodingParams DecodingParams::contrastive(int top_k, double alpha, int n) {
    DecodingParams p;
    p.strategy = DecodingStrategy::Contrastive;
    p.top_k = top_k;
    p.alpha_penalty = alpha;
    p.n = n;
    return p;
}

std::string apply_stop(std::string text, std::span<const std::string> stops) {
    size_t cut = std::string::npos;
    for (const auto& stop : stops) {
        if (stop.empty()) continue;
        const size_t pos = text.find(stop);
        if (pos != std::string::npos && pos < cut) cut = pos;
    }
    if (cut != std::string::npos) text.resize(cut);
    return text;
}

}  // namespace qgen

#include "qgen/cache.hpp"

#include <fstream>

#include "qgen/io.hpp"

namespace qgen {

namespace {

nlohmann::json completions_to_json(const std::vector<Completion>& cs) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& c : cs) {
        nlohmann::json j{{"text", c.text}};
        if (c.token_scores) {
            nlohmann::json scores = nlohmann::json::array();
            for (const auto& ts : *c.token_scores) {
                scores.push_back({{"token", ts.token}, {"logprob", ts.logprob}});
            }
            j["token_scores"] = std::move(scores);
        }
        arr.push_back(std::move(j));
    }
    return arr;
}

std::vector<Completion> completions_from_json(const nlohmann::json& arr) {
    std::vector<Completion> out;
    for (const auto& j : arr) {
        Completion c;
        c.text = j.at("text").get<std::string>();
        if (j.contains("token_scores")) {
            std::vector<TokenScore> scores;
            for (const auto& ts : j["token_scores"]) {
                scores.push_back({ts.at("token").get<std::string>(),
                                  ts.at("logprob").get<double>()});
            }
            c.token_scores = std::move(scores);
        }
        out.push_back(std::move(c));
    }
    return out;
}

nlohmann::json scores_to_json(const std::vector<TokenScore>& scores) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& ts : scores) {
        arr.push_back({{"token", ts.token}, {"logprob", ts.logprob}});
    }
    return arr;
}

std::vector<TokenScore> scores_from_json(const nlohmann::json& arr) {
    std::vector<TokenScore> out;
    for (const auto& ts : arr) {
        out.push_back({ts.at("token").get<std::string>(),
                       ts.at("logprob").get<double>()});
    }
    return out;
}

}  // namespace

ResponseCache::ResponseCache(std::filesystem::path file)
    : file_(std::move(file)) {
    if (!std::filesystem::exists(file_)) return;
    for (const auto& row : read_jsonl(file_)) {
        const auto kind = row.at("kind").get<std::string>();
        const auto key = row.at("key").get<std::string>();
        if (kind == "gen") {
            generations_[key] = completions_from_json(row.at("completions"));
        } else if (kind == "score") {
            scores_[key] = scores_from_json(row.at("scores"));
        }
    }
}

std::string ResponseCache::generation_key(const std::string& prompt,
                                          const DecodingParams& params) {
    return "gen\x1f" + params.canonical_key() + "\x1f" + prompt;
}

std::string ResponseCache::score_key(const std::string& prompt,
                                     const std::string& completion) {
    return "score\x1f" + prompt + "\x1f" + completion;
}

std::optional<std::vector<Completion>> ResponseCache::get_generation(
    const std::string& key) const {
    std::lock_guard lock(mu_);
    auto it = generations_.find(key);
    if (it == generations_.end()) return std::nullopt;
    return it->second;
}

void ResponseCache::put_generation(const std::string& key,
                                   const std::vector<Completion>& completions) {
    std::lock_guard lock(mu_);
    if (!generations_.emplace(key, completions).second) return;
    append_row({{"kind", "gen"},
                {"key", key},
                {"completions", completions_to_json(completions)}});
}

std::optional<std::vector<TokenScore>> ResponseCache::get_scores(
    const std::string& key) const {
    std::lock_guard lock(mu_);
    auto it = scores_.find(key);
    if (it == scores_.end()) return std::nullopt;
    return it->second;
}

void ResponseCache::put_scores(const std::string& key,
                               const std::vector<TokenScore>& scores) {
    std::lock_guard lock(mu_);
    if (!scores_.emplace(key, scores).second) return;
    append_row({{"kind", "score"}, {"key", key}, {"scores", scores_to_json(scores)}});
}

size_t ResponseCache::size() const {
    std::lock_guard lock(mu_);
    return generations_.size() + scores_.size();
}

void ResponseCache::append_row(const nlohmann::json& row) {
    if (file_.empty()) return;
    std::ofstream out(file_, std::ios::binary | std::ios::app);
    if (!out) throw std::runtime_error("cannot write cache: " + file_.string());
    out << row.dump() << '\n';
}

std::vector<Completion> CachedBackend::generate(const std::string& prompt,
                                                const DecodingParams& params) {
    const std::string key = ResponseCache::generation_key(prompt, params);
    if (auto hit = cache_.get_generation(key)) return *hit;
    auto fresh = inner_.generate(prompt, params);
    cache_.put_generation(key, fresh);
    return fresh;
}

std::vector<TokenScore> CachedBackend::score_completion(
    const std::string& prompt, const std::string& completion) {
    const std::string key = ResponseCache::score_key(prompt, completion);
    if (auto hit = cache_.get_scores(key)) return *hit;
    auto fresh = inner_.score_completion(prompt, completion);
    cache_.put_scores(key, fresh);
    return fresh;
}

}  // namespace qgen

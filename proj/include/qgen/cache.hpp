#pragma once

#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>

#include "qgen/backend.hpp"

namespace qgen {

// Keyed by the full (prompt, params) text, so identical requests replay
// without touching the backend. With a file attached, entries are appended
// as they land and reloaded on construction, surviving across runs.
class ResponseCache {
  public:
    ResponseCache() = default;
    explicit ResponseCache(std::filesystem::path file);

    std::optional<std::vector<Completion>> get_generation(
        const std::string& key) const;
    void put_generation(const std::string& key,
                        const std::vector<Completion>& completions);

    std::optional<std::vector<TokenScore>> get_scores(
        const std::string& key) const;
    void put_scores(const std::string& key,
                    const std::vector<TokenScore>& scores);

    size_t size() const;

    static std::string generation_key(const std::string& prompt,
                                      const DecodingParams& params);
    static std::string score_key(const std::string& prompt,
                                 const std::string& completion);

  private:
    void append_row(const nlohmann::json& row);

    mutable std::mutex mu_;
    std::filesystem::path file_;
    std::unordered_map<std::string, std::vector<Completion>> generations_;
    std::unordered_map<std::string, std::vector<TokenScore>> scores_;
};

class CachedBackend : public LmBackend {
  public:
    CachedBackend(LmBackend& inner, ResponseCache& cache)
        : inner_(inner), cache_(cache) {}

    std::vector<Completion> generate(const std::string& prompt,
                                     const DecodingParams& params) override;
    std::vector<TokenScore> score_completion(
        const std::string& prompt, const std::string& completion) override;

  private:
    LmBackend& inner_;
    ResponseCache& cache_;
};

}  // namespace qgen

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "qgen/backend.hpp"

namespace qgen {

// One scripted response: the first row whose substring appears in the prompt
// wins. An empty substring acts as a catch-all.
struct MockFixtureRow {
    std::string prompt_substring_match;
    std::vector<std::string> completions;
    std::optional<double> logprob_per_token;
};

// Offline stand-in for the remote model. Every output is a pure function of
// (seed, prompt, params): byte-identical across runs, platforms and thread
// interleavings. Unscripted prompts get synthesized question/answer text.
class MockBackend : public LmBackend {
  public:
    explicit MockBackend(uint64_t seed) : seed_(seed) {}
    MockBackend(uint64_t seed, std::vector<MockFixtureRow> fixtures)
        : seed_(seed), fixtures_(std::move(fixtures)) {}

    // JSONL rows: {prompt_substring_match, completions, logprob_per_token?}
    static std::vector<MockFixtureRow> load_fixtures(
        const std::filesystem::path& path);

    std::vector<Completion> generate(const std::string& prompt,
                                     const DecodingParams& params) override;
    std::vector<TokenScore> score_completion(
        const std::string& prompt, const std::string& completion) override;

  private:
    const MockFixtureRow* match(const std::string& prompt) const;
    std::vector<TokenScore> score_tokens(const std::string& prompt,
                                         const std::string& completion) const;

    uint64_t seed_;
    std::vector<MockFixtureRow> fixtures_;
};

}  // namespace qgen

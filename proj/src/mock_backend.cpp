#include "qgen/mock_backend.hpp"

#include <cmath>

#include "qgen/hashing.hpp"
#include "qgen/io.hpp"
#include "qgen/strings.hpp"

namespace qgen {

namespace {

const char* const kWh[] = {"what", "who",  "why",  "how",
                           "where", "when", "which"};
const char* const kSubject[] = {"the fox",        "the king",
                                "the old woman",  "the youth",
                                "the little bird", "the miller",
                                "the princess",   "the wolf",
                                "the dullhead",   "the rat"};
const char* const kVerb[] = {"find", "see",      "say",      "do",
                             "make", "want",     "fear",     "discover",
                             "hide", "remember", "promise",  "bring"};
const char* const kTail[] = {"in the forest",     "at the castle",
                             "by the river",      "after the feast",
                             "that night",        "in the morning",
                             "near the village",  "under the mountain",
                             "inside the cottage", "on the road"};

template <size_t N>
const char* pick(const char* const (&pool)[N], SeededRng& rng) {
    return pool[rng.next_below(N)];
}

std::string synthesize_question(SeededRng& rng) {
    std::string out = pick(kWh, rng);
    out += " did ";
    out += pick(kSubject, rng);
    out += ' ';
    out += pick(kVerb, rng);
    out += ' ';
    out += pick(kTail, rng);
    out += '?';
    return out;
}

std::string synthesize_answer(SeededRng& rng) {
    std::string out = pick(kSubject, rng);
    out += ' ';
    out += pick(kTail, rng);
    return out;
}

// QA prompts end with a bare "Answer:"; everything else gets question text.
bool wants_answer(const std::string& prompt) {
    const std::string_view suffix = "Answer:";
    return prompt.size() >= suffix.size() &&
           std::string_view(prompt).substr(prompt.size() - suffix.size()) ==
               suffix;
}

// Stream identity ignores n so that asking for more samples extends the
// same deterministic sequence instead of reshuffling it.
uint64_t stream_base(uint64_t seed, const std::string& prompt,
                     const DecodingParams& params) {
    nlohmann::json j = params.to_json();
    j.erase("n");
    return mix64(mix64(seed, fnv1a64(prompt)), fnv1a64(j.dump()));
}

}  // namespace

std::vector<MockFixtureRow> MockBackend::load_fixtures(
    const std::filesystem::path& path) {
    std::vector<MockFixtureRow> rows;
    for (const auto& j : read_jsonl(path)) {
        MockFixtureRow row;
        row.prompt_substring_match =
            j.at("prompt_substring_match").get<std::string>();
        row.completions = j.at("completions").get<std::vector<std::string>>();
        if (j.contains("logprob_per_token") &&
            !j.at("logprob_per_token").is_null()) {
            const double lp = j.at("logprob_per_token").get<double>();
            if (!(lp <= 0.0) || !std::isfinite(lp)) {
                throw std::invalid_argument(
                    "mock fixture: logprob_per_token must be finite and <= 0");
            }
            row.logprob_per_token = lp;
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

const MockFixtureRow* MockBackend::match(const std::string& prompt) const {
    for (const auto& row : fixtures_) {
        if (prompt.find(row.prompt_substring_match) != std::string::npos) {
            return &row;
        }
    }
    return nullptr;
}

std::vector<Completion> MockBackend::generate(const std::string& prompt,
                                              const DecodingParams& params) {
    params.validate();
    const MockFixtureRow* fx = match(prompt);
    const uint64_t base = stream_base(seed_, prompt, params);
    const bool greedy = params.strategy == DecodingStrategy::Greedy;
    const bool answer_mode = wants_answer(prompt);

    std::vector<Completion> out;
    out.reserve(static_cast<size_t>(params.n));
    for (int i = 0; i < params.n; ++i) {
        const size_t sample = greedy ? 0 : static_cast<size_t>(i);
        std::string text;
        if (fx != nullptr && !fx->completions.empty()) {
            text = fx->completions[sample % fx->completions.size()];
        } else {
            SeededRng rng(mix64(base, sample));
            text = answer_mode ? synthesize_answer(rng)
                               : synthesize_question(rng);
        }
        text = apply_stop(std::move(text), params.stop);
        Completion c;
        c.text = text;
        if (!trim(text).empty()) c.token_scores = score_tokens(prompt, text);
        out.push_back(std::move(c));
    }
    return out;
}

std::vector<TokenScore> MockBackend::score_tokens(
    const std::string& prompt, const std::string& completion) const {
    const MockFixtureRow* fx = match(prompt);
    const std::vector<std::string> tokens = split_ws(completion);
    const uint64_t h =
        mix64(mix64(seed_, fnv1a64(prompt)), fnv1a64(completion));
    std::vector<TokenScore> scores;
    scores.reserve(tokens.size());
    for (size_t j = 0; j < tokens.size(); ++j) {
        double lp;
        if (fx != nullptr && fx->logprob_per_token) {
            lp = *fx->logprob_per_token;
        } else {
            const double u =
                (splitmix64(mix64(h, j)) >> 11) * 0x1.0p-53;  // [0,1)
            lp = -(0.05 + 2.0 * u);
        }
        scores.push_back({tokens[j], lp});
    }
    return scores;
}

std::vector<TokenScore> MockBackend::score_completion(
    const std::string& prompt, const std::string& completion) {
    if (trim(completion).empty()) {
        throw std::invalid_argument(
            "score_completion: completion must be non-empty");
    }
    return score_tokens(prompt, completion);
}

}  // namespace qgen

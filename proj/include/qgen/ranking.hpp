#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qgen/backend.hpp"
#include "qgen/corpus.hpp"
#include "qgen/scorer.hpp"

namespace qgen {

struct Candidate {
    std::string question;  // trimmed, unique within a set
    std::optional<std::vector<TokenScore>> token_scores;
    std::optional<FeatureVector> features;
};

// K overgenerated questions for one context-answer pair, deduplicated by
// trimmed text.
struct CandidateSet {
    std::string item_id;
    std::string context;
    std::string answer;
    std::string reference_question;  // empty when the source has none
    std::string prompt;              // the generation prompt, reused for scoring
    std::vector<Candidate> candidates;
    DecodingParams decoding;
    int k = 10;
};

enum class RankMethod { Perplexity, DistMatch };

std::string_view to_string(RankMethod m);

struct RankingResult {
    std::string item_id;
    RankMethod method = RankMethod::Perplexity;
    std::vector<size_t> ordering;  // permutation, best first
    std::vector<double> scores;    // aligned with candidates by index
    size_t selected = 0;           // == ordering[0]
};

class EmptyCandidatePool : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

class SchemaMismatch : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Scoring a specific candidate failed; the message names it.
class CandidateScoringError : public BackendError {
    using BackendError::BackendError;
};

// "Generate question given context and answer: Context: {c} Answer: {a}"
std::string generation_prompt(const QARecord& rec);

// Samples batches until k unique non-empty candidates exist or the retry
// budget (3 batches beyond the minimum) runs out.
CandidateSet overgenerate(const QARecord& rec, LmBackend& backend,
                          const DecodingParams& params, int k = 10);

// exp(-mean(logprob)); >= 1 since logprobs are <= 0.
double perplexity(std::span<const TokenScore> token_scores);

// Stable index ordering by score; ties go to the lower candidate index.
std::vector<size_t> order_indices(std::span<const double> scores,
                                  bool ascending);

// Lowest perplexity wins. Candidates without stored logprobs are scored
// through the backend against the set's generation prompt.
RankingResult rank_by_perplexity(const CandidateSet& cs, LmBackend& backend);

// Highest phi-score wins; features are extracted on demand.
RankingResult rank_by_scorer(const CandidateSet& cs, const QARecord& rec,
                             const ScorerModel& model);

// Wire format used by the overgenerate/rank subcommands.
nlohmann::json candidate_set_to_json(const CandidateSet& cs);
CandidateSet candidate_set_from_json(const nlohmann::json& j);

struct GroupBuildReport {
    std::vector<std::string> skipped_ids;
    std::vector<std::string> messages;
};

// One RankGroup per record with ROUGE-L targets precomputed; records whose
// candidate pool collapses below 2 are skipped and reported.
std::vector<RankGroup> build_training_groups(const Dataset& d,
                                             LmBackend& backend,
                                             const DecodingParams& params,
                                             int k,
                                             GroupBuildReport* report = nullptr);

}  // namespace qgen

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "qgen/backend.hpp"
#include "qgen/corpus.hpp"
#include "qgen/hashing.hpp"

namespace qgen {

enum class PromptMode { QuestionGen, QuestionAnswering };

// Five attribute-matched exemplars plus the target triplet.
struct PromptBundle {
    std::vector<QARecord> exemplars;
    QARecord target;
    PromptMode mode = PromptMode::QuestionGen;
};

// QuestionGen renders exemplars as context/answer/question blocks and ends
// with "Another question with the same answer is:"; QuestionAnswering
// reorders to context/question/answer and ends with a bare "Answer:".
std::string build_prompt(const PromptBundle& bundle);

class ExemplarShortage : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

// k distinct attribute-matched records, target excluded, in seeded order.
std::vector<QARecord> select_exemplars(const Dataset& d, const QARecord& target,
                                       int k, SeededRng& rng);

enum class Provenance { Human, Synthetic };
enum class MatchedAgainst { GroundTruthAnswer, RegeneratedAnswer };

std::string_view to_string(Provenance p);
std::string_view to_string(MatchedAgainst m);

struct AugmentedRecord {
    QARecord base;  // question replaced for synthetic rows
    Provenance provenance = Provenance::Human;
    double weight = 1.0;  // lambda for human rows, 1-lambda for synthetic
    std::optional<std::string> parent_id;
    std::optional<MatchedAgainst> matched_against;
};

nlohmann::json augmented_to_json(const AugmentedRecord& rec);

struct AugmentationConfig {
    int m_candidates = 4;
    double threshold = 0.5;
    double lambda = 0.8;
    bool minority_only = true;
    DecodingParams gen_params = DecodingParams::nucleus(0.9, 0.8, 4);
    DecodingParams qa_params = DecodingParams::greedy();
    uint64_t rng_seed = 0;
    bool tolerant = false;  // skip records whose backend calls fail
    int workers = 1;
};

// Generates M candidates for one record, answers each, and keeps those whose
// regenerated answer scores ROUGE-1 F1 strictly above the threshold against
// the ground-truth answer or against the re-answered ground-truth question.
// Candidates equal to the ground-truth question and duplicate retained
// questions are dropped. Returns synthetic records only.
std::vector<AugmentedRecord> augment_record(const QARecord& rec,
                                            const Dataset& d,
                                            const AugmentationConfig& cfg,
                                            LmBackend& backend);

struct AugmentError {
    std::string record_id;
    std::string message;
};

struct AugmentResult {
    std::vector<AugmentedRecord> records;  // humans first, then synthetics
    std::vector<AugmentError> errors;
};

// Human records pass through with weight lambda in input order; synthetic
// records follow, grouped by parent in eligible-record order.
AugmentResult augment_dataset(const Dataset& d, const AugmentationConfig& cfg,
                              LmBackend& backend);

}  // namespace qgen

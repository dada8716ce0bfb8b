#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace qgen {

// The seven FairytaleQA narrative element categories.
enum class Attribute {
    Character,
    Setting,
    Action,
    Feeling,
    CausalRelationship,
    OutcomeResolution,
    Prediction,
};

inline constexpr std::array<Attribute, 7> kAllAttributes = {
    Attribute::Character,         Attribute::Setting,
    Attribute::Action,            Attribute::Feeling,
    Attribute::CausalRelationship, Attribute::OutcomeResolution,
    Attribute::Prediction,
};

// Whether the answer is a verbatim span of the context or must be inferred.
enum class AnswerKind { Explicit, Implicit };

enum class Split { Train, Val, Test };

std::string_view to_string(Attribute a);
std::string_view to_string(AnswerKind k);
std::string_view to_string(Split s);

// Case-insensitive after trimming; '_' and '-' are accepted for spaces.
std::optional<Attribute> parse_attribute(std::string_view raw);
std::optional<AnswerKind> parse_answer_kind(std::string_view raw);
std::optional<Split> parse_split(std::string_view raw);

// Action and causal relationship dominate the corpus; everything else is a
// minority attribute targeted by augmentation.
inline bool is_minority(Attribute a) {
    return a != Attribute::Action && a != Attribute::CausalRelationship;
}

struct QARecord {
    std::string id;
    std::string context;
    std::string answer;
    std::string question;
    Attribute attribute = Attribute::Action;
    AnswerKind answer_kind = AnswerKind::Explicit;
    Split split = Split::Train;
};

nlohmann::json record_to_json(const QARecord& rec);

struct Dataset {
    std::vector<QARecord> records;

    size_t size() const { return records.size(); }
    bool empty() const { return records.empty(); }
    std::map<Attribute, size_t> counts_by_attribute() const;
};

enum class CorpusFormat { Jsonl, Csv };

struct RowError {
    size_t row = 0;  // 1-based data-row index
    std::string message;
};

struct LoadOptions {
    bool strict = false;
    // canonical field name -> name used in the source file
    std::map<std::string, std::string> field_map;
};

struct LoadResult {
    Dataset dataset;
    std::vector<RowError> errors;
};

class ValidationError : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Row-level problems are collected, not fail-fast; strict mode turns a
// non-empty error list into a ValidationError. Row order is preserved.
LoadResult load_dataset(const std::filesystem::path& path, CorpusFormat format,
                        const LoadOptions& options = {});

Dataset minority_subset(const Dataset& d);

}  // namespace qgen

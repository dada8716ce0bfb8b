#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qgen/corpus.hpp"

namespace qgen {

struct StratumMean {
    double mean = 0.0;
    size_t n = 0;
};

struct EvalReport {
    StratumMean overall;
    std::map<AnswerKind, StratumMean> by_answer_kind;
    std::map<Attribute, StratumMean> by_attribute;
    std::vector<std::string> missing_ids;  // references without a prediction
    std::vector<std::string> unknown_ids;  // predictions without a reference

    nlohmann::json to_json() const;
    std::string render_table() const;
};

struct EvalOptions {
    // strict scores missing predictions as 0 and keeps them in the means;
    // lenient excludes them (they stay listed either way).
    bool strict = true;
    bool group_by_answer_kind = true;
    bool group_by_attribute = true;
};

// Mean per-item ROUGE-L F1 of predictions against the ground-truth
// questions, overall and per stratum.
EvalReport evaluate(const std::map<std::string, std::string>& predictions,
                    const Dataset& references, const EvalOptions& options = {});

// One row of a method-comparison table; absent strata render as "-".
struct MethodRow {
    std::string name;
    std::optional<double> all;
    std::optional<double> explicit_mean;
    std::optional<double> implicit_mean;

    static MethodRow from_report(std::string name, const EvalReport& report);
};

std::string render_method_table(std::span<const MethodRow> rows);

// Test-decoding rows crossed with ranking-method columns; cells hold the
// overall mean, rendered to 4 decimals.
struct DecodingGrid {
    std::vector<std::string> row_labels;
    std::vector<std::string> col_labels;
    std::vector<std::vector<std::optional<double>>> cells;  // [row][col]

    std::string render() const;
    nlohmann::json to_json() const;
    static DecodingGrid from_json(const nlohmann::json& j);
};

struct GridEntry {
    std::string test_decoding;  // row
    std::string method;         // column
    EvalReport report;
};

// Labels keep first-appearance order.
DecodingGrid decoding_grid(std::span<const GridEntry> entries);

}  // namespace qgen

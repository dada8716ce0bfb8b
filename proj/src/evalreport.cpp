#include "qgen/evalreport.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "qgen/metrics.hpp"

namespace qgen {

namespace {

std::string fmt4(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", v);
    return buf;
}

std::string cell(const std::optional<double>& v) {
    return v ? fmt4(*v) : std::string("-");
}

void pad(std::string& s, size_t width) {
    if (s.size() < width) s.append(width - s.size(), ' ');
}

struct Accumulator {
    double sum = 0.0;
    size_t n = 0;
    void add(double v) {
        sum += v;
        ++n;
    }
    StratumMean finish() const {
        return {n > 0 ? sum / static_cast<double>(n) : 0.0, n};
    }
};

}  // namespace

nlohmann::json EvalReport::to_json() const {
    nlohmann::json j;
    j["overall"] = {{"mean", overall.mean}, {"n", overall.n}};
    if (!by_answer_kind.empty()) {
        nlohmann::json k = nlohmann::json::object();
        for (const auto& [kind, m] : by_answer_kind) {
            k[std::string(to_string(kind))] = {{"mean", m.mean}, {"n", m.n}};
        }
        j["by_answer_kind"] = std::move(k);
    }
    if (!by_attribute.empty()) {
        nlohmann::json a = nlohmann::json::object();
        for (const auto& [attr, m] : by_attribute) {
            a[std::string(to_string(attr))] = {{"mean", m.mean}, {"n", m.n}};
        }
        j["by_attribute"] = std::move(a);
    }
    if (!missing_ids.empty()) j["missing_ids"] = missing_ids;
    if (!unknown_ids.empty()) j["unknown_ids"] = unknown_ids;
    return j;
}

std::string EvalReport::render_table() const {
    std::vector<std::array<std::string, 3>> rows;
    rows.push_back({"stratum", "n", "rouge_l"});
    rows.push_back({"overall", std::to_string(overall.n), fmt4(overall.mean)});
    for (const auto& [kind, m] : by_answer_kind) {
        rows.push_back(
            {std::string(to_string(kind)), std::to_string(m.n), fmt4(m.mean)});
    }
    for (const auto& [attr, m] : by_attribute) {
        rows.push_back({"attribute:" + std::string(to_string(attr)),
                        std::to_string(m.n), fmt4(m.mean)});
    }
    std::array<size_t, 3> widths{0, 0, 0};
    for (const auto& r : rows) {
        for (size_t c = 0; c < 3; ++c) widths[c] = std::max(widths[c], r[c].size());
    }
    std::ostringstream out;
    for (const auto& r : rows) {
        std::string line;
        for (size_t c = 0; c < 3; ++c) {
            std::string v = r[c];
            pad(v, widths[c] + (c + 1 < 3 ? 2 : 0));
            line += v;
        }
        while (!line.empty() && line.back() == ' ') line.pop_back();
        out << line << '\n';
    }
    return out.str();
}

EvalReport evaluate(const std::map<std::string, std::string>& predictions,
                    const Dataset& references, const EvalOptions& options) {
    EvalReport report;
    Accumulator overall;
    std::map<AnswerKind, Accumulator> by_kind;
    std::map<Attribute, Accumulator> by_attr;

    std::map<std::string, size_t> ref_ids;
    for (const auto& rec : references.records) ++ref_ids[rec.id];
    for (const auto& [id, _] : predictions) {
        if (ref_ids.find(id) == ref_ids.end()) {
            report.unknown_ids.push_back(id);
        }
    }

    for (const auto& rec : references.records) {
        auto it = predictions.find(rec.id);
        double score = 0.0;
        if (it == predictions.end()) {
            report.missing_ids.push_back(rec.id);
            if (!options.strict) continue;  // excluded from the means
        } else {
            score = rouge_l_f1(it->second, rec.question);
        }
        overall.add(score);
        if (options.group_by_answer_kind) by_kind[rec.answer_kind].add(score);
        if (options.group_by_attribute) by_attr[rec.attribute].add(score);
    }

    report.overall = overall.finish();
    for (const auto& [kind, acc] : by_kind) {
        report.by_answer_kind[kind] = acc.finish();
    }
    for (const auto& [attr, acc] : by_attr) {
        report.by_attribute[attr] = acc.finish();
    }
    return report;
}

MethodRow MethodRow::from_report(std::string name, const EvalReport& report) {
    MethodRow row;
    row.name = std::move(name);
    row.all = report.overall.mean;
    auto e = report.by_answer_kind.find(AnswerKind::Explicit);
    if (e != report.by_answer_kind.end()) row.explicit_mean = e->second.mean;
    auto i = report.by_answer_kind.find(AnswerKind::Implicit);
    if (i != report.by_answer_kind.end()) row.implicit_mean = i->second.mean;
    return row;
}

std::string render_method_table(std::span<const MethodRow> rows) {
    std::vector<std::array<std::string, 4>> table;
    table.push_back({"method", "all", "explicit", "implicit"});
    for (const auto& r : rows) {
        table.push_back({r.name, cell(r.all), cell(r.explicit_mean),
                         cell(r.implicit_mean)});
    }
    std::array<size_t, 4> widths{0, 0, 0, 0};
    for (const auto& r : table) {
        for (size_t c = 0; c < 4; ++c) widths[c] = std::max(widths[c], r[c].size());
    }
    std::ostringstream out;
    for (const auto& r : table) {
        std::string line;
        for (size_t c = 0; c < 4; ++c) {
            std::string v = r[c];
            pad(v, widths[c] + (c + 1 < 4 ? 2 : 0));
            line += v;
        }
        while (!line.empty() && line.back() == ' ') line.pop_back();
        out << line << '\n';
    }
    return out.str();
}

std::string DecodingGrid::render() const {
    const size_t cols = col_labels.size();
    std::vector<std::vector<std::string>> table;
    {
        std::vector<std::string> header{"test_decoding"};
        header.insert(header.end(), col_labels.begin(), col_labels.end());
        table.push_back(std::move(header));
    }
    for (size_t r = 0; r < row_labels.size(); ++r) {
        std::vector<std::string> row{row_labels[r]};
        for (size_t c = 0; c < cols; ++c) {
            row.push_back(
                cell(r < cells.size() && c < cells[r].size() ? cells[r][c]
                                                             : std::nullopt));
        }
        table.push_back(std::move(row));
    }
    std::vector<size_t> widths(cols + 1, 0);
    for (const auto& row : table) {
        for (size_t c = 0; c < row.size(); ++c) {
            widths[c] = std::max(widths[c], row[c].size());
        }
    }
    std::ostringstream out;
    for (const auto& row : table) {
        std::string line;
        for (size_t c = 0; c < row.size(); ++c) {
            std::string v = row[c];
            pad(v, widths[c] + (c + 1 < row.size() ? 2 : 0));
            line += v;
        }
        while (!line.empty() && line.back() == ' ') line.pop_back();
        out << line << '\n';
    }
    return out.str();
}

nlohmann::json DecodingGrid::to_json() const {
    nlohmann::json rows = nlohmann::json::array();
    for (size_t r = 0; r < row_labels.size(); ++r) {
        nlohmann::json row;
        row["test_decoding"] = row_labels[r];
        nlohmann::json vals = nlohmann::json::object();
        for (size_t c = 0; c < col_labels.size(); ++c) {
            const auto& v =
                r < cells.size() && c < cells[r].size() ? cells[r][c]
                                                        : std::nullopt;
            if (v) {
                vals[col_labels[c]] = *v;
            } else {
                vals[col_labels[c]] = nullptr;
            }
        }
        row["cells"] = std::move(vals);
        rows.push_back(std::move(row));
    }
    return nlohmann::json{{"columns", col_labels}, {"rows", rows}};
}

DecodingGrid DecodingGrid::from_json(const nlohmann::json& j) {
    DecodingGrid grid;
    grid.col_labels = j.at("columns").get<std::vector<std::string>>();
    for (const auto& row : j.at("rows")) {
        grid.row_labels.push_back(row.at("test_decoding").get<std::string>());
        std::vector<std::optional<double>> vals;
        for (const auto& col : grid.col_labels) {
            const auto& v = row.at("cells").at(col);
            vals.push_back(v.is_null() ? std::nullopt
                                       : std::optional<double>(v.get<double>()));
        }
        grid.cells.push_back(std::move(vals));
    }
    return grid;
}

DecodingGrid decoding_grid(std::span<const GridEntry> entries) {
    DecodingGrid grid;
    auto index_of = [](std::vector<std::string>& labels,
                       const std::string& label) {
        auto it = std::find(labels.begin(), labels.end(), label);
        if (it != labels.end()) {
            return static_cast<size_t>(it - labels.begin());
        }
        labels.push_back(label);
        return labels.size() - 1;
    };
    for (const auto& e : entries) {
        const size_t r = index_of(grid.row_labels, e.test_decoding);
        const size_t c = index_of(grid.col_labels, e.method);
        if (grid.cells.size() < grid.row_labels.size()) {
            grid.cells.resize(grid.row_labels.size());
        }
        for (auto& row : grid.cells) {
            if (row.size() < grid.col_labels.size()) {
                row.resize(grid.col_labels.size());
            }
        }
        grid.cells[r][c] = e.report.overall.mean;
    }
    return grid;
}

}  // namespace qgen

#include "qgen/corpus.hpp"

#include <fstream>
#include <sstream>

#include "qgen/io.hpp"
#include "qgen/strings.hpp"

namespace qgen {

namespace {

constexpr std::string_view kAttributeNames[] = {
    "character",          "setting",           "action", "feeling",
    "causal relationship", "outcome resolution", "prediction",
};

const char* const kFields[] = {"id",        "context",     "answer", "question",
                               "attribute", "answer_kind", "split"};

std::string canon(std::string_view raw) {
    std::string s = lower(trim(raw));
    for (char& c : s) {
        if (c == '_' || c == '-') c = ' ';
    }
    return s;
}

// Minimal RFC 4180 reader: quoted fields, "" escapes, embedded separators
// and newlines, CRLF tolerant.
std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> row;
    std::string field;
    bool quoted = false;
    bool any = false;
    for (size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field.push_back(c);
            }
            continue;
        }
        switch (c) {
            case '"':
                quoted = true;
                any = true;
                break;
            case ',':
                row.push_back(std::move(field));
                field.clear();
                any = true;
                break;
            case '\r':
                break;
            case '\n':
                if (any || !field.empty() || !row.empty()) {
                    row.push_back(std::move(field));
                    field.clear();
                    rows.push_back(std::move(row));
                    row.clear();
                    any = false;
                }
                break;
            default:
                field.push_back(c);
                any = true;
                break;
        }
    }
    if (any || !field.empty() || !row.empty()) {
        row.push_back(std::move(field));
        rows.push_back(std::move(row));
    }
    return rows;
}

struct ParsedRow {
    std::optional<QARecord> record;
    std::string error;
};

ParsedRow parse_record(const nlohmann::json& row,
                       const std::map<std::string, std::string>& field_map) {
    ParsedRow out;
    auto lookup = [&](const char* name) -> const nlohmann::json* {
        auto mapped = field_map.find(name);
        const std::string& key =
            mapped != field_map.end() ? mapped->second : std::string(name);
        auto it = row.find(key);
        return it != row.end() && !it->is_null() ? &*it : nullptr;
    };

    std::map<std::string, std::string> values;
    for (const char* name : kFields) {
        const nlohmann::json* v = lookup(name);
        if (v == nullptr) {
            out.error = std::string("missing field '") + name + "'";
            return out;
        }
        if (v->is_string()) {
            values[name] = v->get<std::string>();
        } else if (v->is_number_integer()) {
            values[name] = std::to_string(v->get<long long>());
        } else {
            out.error = std::string("field '") + name + "' is not a string";
            return out;
        }
    }

    QARecord rec;
    rec.id = trim(values["id"]);
    rec.context = trim(values["context"]);
    rec.answer = trim(values["answer"]);
    rec.question = trim(values["question"]);
    for (const char* name : {"context", "answer", "question"}) {
        if (trim(values[name]).empty()) {
            out.error = std::string("empty field '") + name + "'";
            return out;
        }
    }
    auto attr = parse_attribute(values["attribute"]);
    if (!attr) {
        out.error = "unknown attribute '" + trim(values["attribute"]) + "'";
        return out;
    }
    auto kind = parse_answer_kind(values["answer_kind"]);
    if (!kind) {
        out.error = "unknown answer_kind '" + trim(values["answer_kind"]) + "'";
        return out;
    }
    auto split = parse_split(values["split"]);
    if (!split) {
        out.error = "unknown split '" + trim(values["split"]) + "'";
        return out;
    }
    rec.attribute = *attr;
    rec.answer_kind = *kind;
    rec.split = *split;
    out.record = std::move(rec);
    return out;
}

}  // namespace

std::string_view to_string(Attribute a) {
    return kAttributeNames[static_cast<size_t>(a)];
}

std::string_view to_string(AnswerKind k) {
    return k == AnswerKind::Explicit ? "explicit" : "implicit";
}

std::string_view to_string(Split s) {
    switch (s) {
        case Split::Train: return "train";
        case Split::Val: return "val";
        case Split::Test: return "test";
    }
    return "train";
}

std::optional<Attribute> parse_attribute(std::string_view raw) {
    const std::string s = canon(raw);
    for (size_t i = 0; i < kAllAttributes.size(); ++i) {
        if (s == kAttributeNames[i]) return kAllAttributes[i];
    }
    return std::nullopt;
}

std::optional<AnswerKind> parse_answer_kind(std::string_view raw) {
    const std::string s = canon(raw);
    if (s == "explicit") return AnswerKind::Explicit;
    if (s == "implicit") return AnswerKind::Implicit;
    return std::nullopt;
}

std::optional<Split> parse_split(std::string_view raw) {
    const std::string s = canon(raw);
    if (s == "train") return Split::Train;
    if (s == "val" || s == "validation") return Split::Val;
    if (s == "test") return Split::Test;
    return std::nullopt;
}

nlohmann::json record_to_json(const QARecord& rec) {
    return nlohmann::json{
        {"id", rec.id},
        {"context", rec.context},
        {"answer", rec.answer},
        {"question", rec.question},
        {"attribute", std::string(to_string(rec.attribute))},
        {"answer_kind", std::string(to_string(rec.answer_kind))},
        {"split", std::string(to_string(rec.split))},
    };
}

std::map<Attribute, size_t> Dataset::counts_by_attribute() const {
    std::map<Attribute, size_t> counts;
    for (const auto& rec : records) ++counts[rec.attribute];
    return counts;
}

LoadResult load_dataset(const std::filesystem::path& path, CorpusFormat format,
                        const LoadOptions& options) {
    std::vector<nlohmann::json> rows;
    if (format == CorpusFormat::Jsonl) {
        rows = read_jsonl(path);
    } else {
        const auto cells = parse_csv(read_file(path));
        if (cells.empty()) throw ValidationError("empty CSV: " + path.string());
        const auto& header = cells.front();
        for (size_t r = 1; r < cells.size(); ++r) {
            nlohmann::json obj = nlohmann::json::object();
            for (size_t c = 0; c < header.size() && c < cells[r].size(); ++c) {
                obj[trim(header[c])] = cells[r][c];
            }
            rows.push_back(std::move(obj));
        }
    }

    LoadResult result;
    for (size_t i = 0; i < rows.size(); ++i) {
        if (!rows[i].is_object()) {
            result.errors.push_back({i + 1, "row is not an object"});
            continue;
        }
        ParsedRow parsed = parse_record(rows[i], options.field_map);
        if (parsed.record) {
            result.dataset.records.push_back(std::move(*parsed.record));
        } else {
            result.errors.push_back({i + 1, parsed.error});
        }
    }

    if (options.strict && !result.errors.empty()) {
        std::ostringstream msg;
        msg << path.string() << ": " << result.errors.size()
            << " invalid row(s):";
        const size_t shown = std::min<size_t>(result.errors.size(), 10);
        for (size_t i = 0; i < shown; ++i) {
            msg << "\n  row " << result.errors[i].row << ": "
                << result.errors[i].message;
        }
        if (result.errors.size() > shown) msg << "\n  ...";
        throw ValidationError(msg.str());
    }
    return result;
}

Dataset minority_subset(const Dataset& d) {
    Dataset out;
    for (const auto& rec : d.records) {
        if (is_minority(rec.attribute)) out.records.push_back(rec);
    }
    return out;
}

}  // namespace qgen

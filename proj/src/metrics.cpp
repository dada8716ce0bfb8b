#include "qgen/metrics.hpp"

#include <algorithm>
#include <unordered_map>

namespace qgen {

namespace {

bool is_alnum(char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
           (c >= '0' && c <= '9');
}

double f1(double lcs_or_overlap, size_t cand_len, size_t ref_len) {
    if (cand_len == 0 || ref_len == 0) return 0.0;
    const double p = lcs_or_overlap / static_cast<double>(cand_len);
    const double r = lcs_or_overlap / static_cast<double>(ref_len);
    if (p + r == 0.0) return 0.0;
    return 2.0 * p * r / (p + r);
}

}  // namespace

TokenSequence tokenize(std::string_view text) {
    TokenSequence tokens;
    std::string cur;
    for (char c : text) {
        if (is_alnum(c)) {
            if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
            cur.push_back(c);
        } else if (!cur.empty()) {
            tokens.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) tokens.push_back(std::move(cur));
    return tokens;
}

size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b) {
    // keep the shorter sequence along the DP row
    if (a.size() < b.size()) std::swap(a, b);
    if (b.empty()) return 0;
    std::vector<size_t> prev(b.size() + 1, 0);
    std::vector<size_t> cur(b.size() + 1, 0);
    for (size_t i = 0; i < a.size(); ++i) {
        for (size_t j = 0; j < b.size(); ++j) {
            if (a[i] == b[j]) {
                cur[j + 1] = prev[j] + 1;
            } else {
                cur[j + 1] = std::max(prev[j + 1], cur[j]);
            }
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

double rouge_l_f1(const TokenSequence& candidate, const TokenSequence& reference) {
    if (candidate.empty() || reference.empty()) return 0.0;
    const size_t lcs = lcs_length(candidate, reference);
    return f1(static_cast<double>(lcs), candidate.size(), reference.size());
}

double rouge_l_f1(std::string_view candidate, std::string_view reference) {
    return rouge_l_f1(tokenize(candidate), tokenize(reference));
}

double rouge_1_f1(const TokenSequence& candidate, const TokenSequence& reference) {
    if (candidate.empty() || reference.empty()) return 0.0;
    std::unordered_map<std::string, size_t> ref_counts;
    for (const auto& t : reference) ++ref_counts[t];
    size_t overlap = 0;
    for (const auto& t : candidate) {
        auto it = ref_counts.find(t);
        if (it != ref_counts.end() && it->second > 0) {
            ++overlap;
            --it->second;
        }
    }
    return f1(static_cast<double>(overlap), candidate.size(), reference.size());
}

double rouge_1_f1(std::string_view candidate, std::string_view reference) {
    return rouge_1_f1(tokenize(candidate), tokenize(reference));
}

}  // namespace qgen

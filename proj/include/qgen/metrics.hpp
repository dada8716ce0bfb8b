#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace qgen {

using TokenSequence = std::vector<std::string>;

// Lower-cases and splits on maximal runs of non-alphanumeric bytes.
// No stemming, no stopword removal; empty input yields an empty sequence.
TokenSequence tokenize(std::string_view text);

// Longest common subsequence length, O(|a|*|b|) time, two DP rows.
size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b);

// LCS-based F1. 0 when either side tokenizes to nothing or P+R == 0.
double rouge_l_f1(const TokenSequence& candidate, const TokenSequence& reference);
double rouge_l_f1(std::string_view candidate, std::string_view reference);

// Unigram F1 with clipped counts: each reference token is matched at most
// its multiplicity.
double rouge_1_f1(const TokenSequence& candidate, const TokenSequence& reference);
double rouge_1_f1(std::string_view candidate, std::string_view reference);

}  // namespace qgen

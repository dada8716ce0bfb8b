#include "qgen/ranking.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "qgen/strings.hpp"

namespace qgen {

std::string_view to_string(RankMethod m) {
    return m == RankMethod::Perplexity ? "perplexity" : "dist_match";
}

std::string generation_prompt(const QARecord& rec) {
    return "Generate question given context and answer: Context: " +
           rec.context + " Answer: " + rec.answer;
}

CandidateSet overgenerate(const QARecord& rec, LmBackend& backend,
                          const DecodingParams& params, int k) {
    if (k < 1) throw std::invalid_argument("overgenerate: k must be >= 1");
    params.validate();

    CandidateSet cs;
    cs.item_id = rec.id;
    cs.context = rec.context;
    cs.answer = rec.answer;
    cs.reference_question = rec.question;
    cs.prompt = generation_prompt(rec);
    cs.decoding = params;
    cs.k = k;

    const int base_calls = (k + params.n - 1) / params.n;
    const int max_calls = base_calls + 3;
    std::unordered_set<std::string> seen;
    for (int call = 0;
         call < max_calls && cs.candidates.size() < static_cast<size_t>(k);
         ++call) {
        for (auto& completion : backend.generate(cs.prompt, params)) {
            if (cs.candidates.size() >= static_cast<size_t>(k)) break;
            std::string text = trim(completion.text);
            if (text.empty()) continue;
            if (!seen.insert(text).second) continue;
            Candidate cand;
            cand.question = std::move(text);
            cand.token_scores = std::move(completion.token_scores);
            cs.candidates.push_back(std::move(cand));
        }
    }
    if (cs.candidates.empty()) {
        throw EmptyCandidatePool("no usable candidates for record '" + rec.id +
                                 "' after " + std::to_string(max_calls) +
                                 " generation batches");
    }
    return cs;
}

double perplexity(std::span<const TokenScore> token_scores) {
    if (token_scores.empty()) {
        throw std::invalid_argument("perplexity: empty token scores");
    }
    double sum = 0.0;
    for (const auto& ts : token_scores) sum += ts.logprob;
    return std::exp(-sum / static_cast<double>(token_scores.size()));
}

std::vector<size_t> order_indices(std::span<const double> scores,
                                  bool ascending) {
    std::vector<size_t> idx(scores.size());
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::stable_sort(idx.begin(), idx.end(), [&](size_t a, size_t b) {
        if (scores[a] != scores[b]) {
            return ascending ? scores[a] < scores[b] : scores[a] > scores[b];
        }
        return a < b;
    });
    return idx;
}

RankingResult rank_by_perplexity(const CandidateSet& cs, LmBackend& backend) {
    RankingResult result;
    result.item_id = cs.item_id;
    result.method = RankMethod::Perplexity;
    result.scores.reserve(cs.candidates.size());
    for (size_t i = 0; i < cs.candidates.size(); ++i) {
        const Candidate& cand = cs.candidates[i];
        try {
            if (cand.token_scores && !cand.token_scores->empty()) {
                result.scores.push_back(perplexity(*cand.token_scores));
            } else {
                result.scores.push_back(
                    perplexity(backend.score_completion(cs.prompt, cand.question)));
            }
        } catch (const std::exception& e) {
            throw CandidateScoringError("failed to score candidate #" +
                                        std::to_string(i) + " '" +
                                        cand.question + "': " + e.what());
        }
    }
    result.ordering = order_indices(result.scores, /*ascending=*/true);
    result.selected = result.ordering.at(0);
    return result;
}

RankingResult rank_by_scorer(const CandidateSet& cs, const QARecord& rec,
                             const ScorerModel& model) {
    if (model.feature_schema_version != kFeatureSchemaVersion) {
        throw SchemaMismatch(
            "model feature_schema_version " +
            std::to_string(model.feature_schema_version) +
            " does not match extractor version " +
            std::to_string(kFeatureSchemaVersion));
    }
    RankingResult result;
    result.item_id = cs.item_id;
    result.method = RankMethod::DistMatch;
    result.scores.reserve(cs.candidates.size());
    for (const Candidate& cand : cs.candidates) {
        const FeatureVector features =
            cand.features ? *cand.features
                          : extract_features(cand.question, rec.context,
                                             rec.answer);
        result.scores.push_back(model.score(features));
    }
    if (result.scores.empty()) {
        throw EmptyCandidatePool("candidate set '" + cs.item_id + "' is empty");
    }
    result.ordering = order_indices(result.scores, /*ascending=*/false);
    result.selected = result.ordering.at(0);
    return result;
}

nlohmann::json candidate_set_to_json(const CandidateSet& cs) {
    nlohmann::json cands = nlohmann::json::array();
    for (const auto& c : cs.candidates) {
        nlohmann::json j{{"question", c.question}};
        if (c.token_scores) {
            nlohmann::json scores = nlohmann::json::array();
            for (const auto& ts : *c.token_scores) {
                scores.push_back({{"token", ts.token}, {"logprob", ts.logprob}});
            }
            j["token_scores"] = std::move(scores);
        }
        cands.push_back(std::move(j));
    }
    return nlohmann::json{
        {"item_id", cs.item_id},
        {"context", cs.context},
        {"answer", cs.answer},
        {"reference_question", cs.reference_question},
        {"prompt", cs.prompt},
        {"k", cs.k},
        {"decoding", cs.decoding.to_json()},
        {"candidates", cands},
    };
}

CandidateSet candidate_set_from_json(const nlohmann::json& j) {
    CandidateSet cs;
    cs.item_id = j.at("item_id").get<std::string>();
    cs.context = j.value("context", std::string{});
    cs.answer = j.value("answer", std::string{});
    cs.reference_question = j.value("reference_question", std::string{});
    cs.prompt = j.value("prompt", std::string{});
    cs.k = j.value("k", 10);
    if (j.contains("decoding")) {
        cs.decoding = DecodingParams::from_json(j.at("decoding"));
    }
    for (const auto& cj : j.at("candidates")) {
        Candidate c;
        if (cj.is_string()) {
            c.question = cj.get<std::string>();
        } else {
            c.question = cj.at("question").get<std::string>();
            if (cj.contains("token_scores")) {
                std::vector<TokenScore> scores;
                for (const auto& ts : cj["token_scores"]) {
                    scores.push_back({ts.at("token").get<std::string>(),
                                      ts.at("logprob").get<double>()});
                }
                c.token_scores = std::move(scores);
            }
        }
        cs.candidates.push_back(std::move(c));
    }
    return cs;
}

std::vector<RankGroup> build_training_groups(const Dataset& d,
                                             LmBackend& backend,
                                             const DecodingParams& params,
                                             int k, GroupBuildReport* report) {
    std::vector<RankGroup> groups;
    for (const auto& rec : d.records) {
        std::vector<std::string> texts;
        try {
            CandidateSet cs = overgenerate(rec, backend, params, k);
            texts.reserve(cs.candidates.size());
            for (auto& cand : cs.candidates) {
                texts.push_back(std::move(cand.question));
            }
        } catch (const EmptyCandidatePool& e) {
            if (report != nullptr) {
                report->skipped_ids.push_back(rec.id);
                report->messages.push_back(e.what());
            }
            continue;
        }
        if (texts.size() < 2) {
            if (report != nullptr) {
                report->skipped_ids.push_back(rec.id);
                report->messages.push_back(
                    "record '" + rec.id +
                    "': candidates collapsed to fewer than 2 after dedup");
            }
            continue;
        }
        groups.push_back(make_group(rec.id, rec.context, rec.answer,
                                    rec.question, std::move(texts)));
    }
    return groups;
}

}  // namespace qgen

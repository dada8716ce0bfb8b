#include "qgen/augment.hpp"

#include <atomic>
#include <thread>
#include <unordered_set>

#include "qgen/metrics.hpp"
#include "qgen/strings.hpp"

namespace qgen {

namespace {

void render_triplet(std::string& out, const QARecord& rec, PromptMode mode) {
    out += "Context: ";
    out += rec.context;
    out += '\n';
    if (mode == PromptMode::QuestionGen) {
        out += "Answer: ";
        out += rec.answer;
        out += "\nQuestion: ";
        out += rec.question;
    } else {
        out += "Question: ";
        out += rec.question;
        out += "\nAnswer: ";
        out += rec.answer;
    }
    out += "\n\n";
}

uint64_t record_seed(const AugmentationConfig& cfg, const QARecord& rec) {
    return mix64(cfg.rng_seed, fnv1a64(rec.id));
}

}  // namespace

std::string build_prompt(const PromptBundle& bundle) {
    if (bundle.exemplars.size() != 5) {
        throw std::invalid_argument(
            "prompt bundle needs exactly 5 exemplars, got " +
            std::to_string(bundle.exemplars.size()));
    }
    for (const auto& ex : bundle.exemplars) {
        if (ex.attribute != bundle.target.attribute) {
            throw std::invalid_argument(
                "exemplar attribute '" + std::string(to_string(ex.attribute)) +
                "' does not match target attribute '" +
                std::string(to_string(bundle.target.attribute)) + "'");
        }
        if (ex.id == bundle.target.id) {
            throw std::invalid_argument(
                "exemplars must not include the target record '" + ex.id + "'");
        }
    }

    std::string out;
    for (const auto& ex : bundle.exemplars) {
        render_triplet(out, ex, bundle.mode);
    }
    out += "Context: ";
    out += bundle.target.context;
    out += '\n';
    if (bundle.mode == PromptMode::QuestionGen) {
        out += "Answer: ";
        out += bundle.target.answer;
        out += "\nAnother question with the same answer is:";
    } else {
        out += "Question: ";
        out += bundle.target.question;
        out += "\nAnswer:";
    }
    return out;
}

std::vector<QARecord> select_exemplars(const Dataset& d, const QARecord& target,
                                       int k, SeededRng& rng) {
    std::vector<size_t> pool;
    for (size_t i = 0; i < d.records.size(); ++i) {
        if (d.records[i].attribute == target.attribute &&
            d.records[i].id != target.id) {
            pool.push_back(i);
        }
    }
    if (pool.size() < static_cast<size_t>(k)) {
        throw ExemplarShortage(
            "not enough exemplars with attribute '" +
            std::string(to_string(target.attribute)) + "': need " +
            std::to_string(k) + ", have " + std::to_string(pool.size()));
    }
    // partial Fisher-Yates; a pool of exactly k yields all of it, shuffled
    std::vector<QARecord> out;
    out.reserve(static_cast<size_t>(k));
    for (int i = 0; i < k; ++i) {
        const size_t j =
            static_cast<size_t>(i) + rng.next_below(pool.size() - i);
        std::swap(pool[i], pool[j]);
        out.push_back(d.records[pool[i]]);
    }
    return out;
}

std::string_view to_string(Provenance p) {
    return p == Provenance::Human ? "human" : "synthetic";
}

std::string_view to_string(MatchedAgainst m) {
    return m == MatchedAgainst::GroundTruthAnswer ? "ground_truth_answer"
                                                  : "regenerated_answer";
}

nlohmann::json augmented_to_json(const AugmentedRecord& rec) {
    nlohmann::json j = record_to_json(rec.base);
    j["provenance"] = std::string(to_string(rec.provenance));
    j["weight"] = rec.weight;
    if (rec.parent_id) j["parent_id"] = *rec.parent_id;
    if (rec.matched_against) {
        j["matched_against"] = std::string(to_string(*rec.matched_against));
    }
    return j;
}

std::vector<AugmentedRecord> augment_record(const QARecord& rec,
                                            const Dataset& d,
                                            const AugmentationConfig& cfg,
                                            LmBackend& backend) {
    if (cfg.m_candidates <= 0) return {};

    SeededRng rng(record_seed(cfg, rec));
    const std::vector<QARecord> exemplars = select_exemplars(d, rec, 5, rng);

    DecodingParams gen = cfg.gen_params;
    gen.n = cfg.m_candidates;
    gen.validate();
    const std::string gen_prompt =
        build_prompt({exemplars, rec, PromptMode::QuestionGen});
    const std::vector<Completion> candidates =
        backend.generate(gen_prompt, gen);

    auto answer_for = [&](const std::string& question) {
        QARecord probe = rec;
        probe.question = question;
        const std::string qa_prompt =
            build_prompt({exemplars, probe, PromptMode::QuestionAnswering});
        const auto replies = backend.generate(qa_prompt, cfg.qa_params);
        return replies.empty() ? std::string{} : trim(replies.front().text);
    };

    // one regenerated reference answer per record, reused for all candidates
    const std::string regenerated_ref = answer_for(rec.question);

    const std::string ground_truth_q = trim(rec.question);
    std::unordered_set<std::string> retained_questions;
    std::vector<AugmentedRecord> out;
    for (size_t j = 0; j < candidates.size(); ++j) {
        const std::string question = trim(candidates[j].text);
        if (question.empty() || question == ground_truth_q) continue;
        if (retained_questions.count(question) > 0) continue;

        const std::string answer = answer_for(question);
        std::optional<MatchedAgainst> matched;
        if (rouge_1_f1(answer, rec.answer) > cfg.threshold) {
            matched = MatchedAgainst::GroundTruthAnswer;
        } else if (rouge_1_f1(answer, regenerated_ref) > cfg.threshold) {
            matched = MatchedAgainst::RegeneratedAnswer;
        }
        if (!matched) continue;

        retained_questions.insert(question);
        AugmentedRecord aug;
        aug.base = rec;
        aug.base.id = rec.id + "-s" + std::to_string(j);
        aug.base.question = question;
        aug.provenance = Provenance::Synthetic;
        aug.weight = 1.0 - cfg.lambda;
        aug.parent_id = rec.id;
        aug.matched_against = matched;
        out.push_back(std::move(aug));
    }
    return out;
}

AugmentResult augment_dataset(const Dataset& d, const AugmentationConfig& cfg,
                              LmBackend& backend) {
    AugmentResult result;
    result.records.reserve(d.records.size());
    for (const auto& rec : d.records) {
        AugmentedRecord human;
        human.base = rec;
        human.provenance = Provenance::Human;
        human.weight = cfg.lambda;
        result.records.push_back(std::move(human));
    }
    if (cfg.m_candidates <= 0) return result;

    const Dataset eligible = cfg.minority_only ? minority_subset(d) : d;
    struct Failure {
        AugmentError error;
        bool from_backend = false;
    };
    std::vector<std::vector<AugmentedRecord>> synthetic(eligible.size());
    std::vector<std::optional<Failure>> failures(eligible.size());

    const int workers =
        std::max(1, std::min<int>(cfg.workers,
                                  static_cast<int>(eligible.size())));
    std::atomic<size_t> next{0};
    auto run = [&] {
        while (true) {
            const size_t i = next.fetch_add(1);
            if (i >= eligible.size()) break;
            const QARecord& rec = eligible.records[i];
            try {
                synthetic[i] = augment_record(rec, d, cfg, backend);
            } catch (const BackendError& e) {
                failures[i] = Failure{{rec.id, e.what()}, true};
            } catch (const std::exception& e) {
                failures[i] = Failure{{rec.id, e.what()}, false};
            }
        }
    };
    if (workers == 1) {
        run();
    } else {
        std::vector<std::thread> threads;
        threads.reserve(static_cast<size_t>(workers));
        for (int w = 0; w < workers; ++w) threads.emplace_back(run);
        for (auto& t : threads) t.join();
    }

    for (size_t i = 0; i < eligible.size(); ++i) {
        if (failures[i]) {
            if (!cfg.tolerant) {
                const std::string msg = "augmentation failed for record '" +
                                        failures[i]->error.record_id +
                                        "': " + failures[i]->error.message;
                if (failures[i]->from_backend) throw BackendError(msg);
                throw std::runtime_error(msg);
            }
            result.errors.push_back(failures[i]->error);
            continue;
        }
        for (auto& rec : synthetic[i]) result.records.push_back(std::move(rec));
    }
    return result;
}

}  // namespace qgen

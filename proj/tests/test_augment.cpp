#include <atomic>

#include "doctest.h"
#include "qgen/augment.hpp"
#include "qgen/metrics.hpp"
#include "qgen/mock_backend.hpp"
#include "qgen/strings.hpp"
#include "testutil.hpp"

using namespace qgen;

namespace {

QARecord feeling_record(const std::string& id, const std::string& context,
                        const std::string& answer,
                        const std::string& question) {
    QARecord rec;
    rec.id = id;
    rec.context = context;
    rec.answer = answer;
    rec.question = question;
    rec.attribute = Attribute::Feeling;
    rec.answer_kind = AnswerKind::Implicit;
    rec.split = Split::Train;
    return rec;
}

// Six feeling records: five exemplars plus the augmentation target from the
// linen-thread story.
Dataset consistency_dataset() {
    Dataset d;
    d.records.push_back(feeling_record(
        "r1", "The rat laid a linen thread in the youth's hand.", "excited",
        "How did the youth feel when the rat allowed him to go above?"));
    const char* moods[] = {"sad", "angry", "afraid", "proud", "calm"};
    for (int i = 0; i < 5; ++i) {
        d.records.push_back(feeling_record(
            "e" + std::to_string(i), "Exemplar story " + std::to_string(i),
            moods[i], "How did character " + std::to_string(i) + " feel?"));
    }
    return d;
}

// Scripted per the augmentation flow: M=5 candidates whose regenerated
// answers hit every branch of the consistency check.
std::vector<MockFixtureRow> consistency_fixtures() {
    const std::string gt_q =
        "How did the youth feel when the rat allowed him to go above?";
    const std::string cand1 =
        "How did the youth feel when he had the linen thread in his hand?";
    const std::string cand2 = "What did the youth feel about going above?";
    const std::string cand3 = "Where did the rat take the youth?";
    const std::string cand5 = "What was the youth's mood?";
    return {
        {"Answer: excited\nAnother question with the same answer is:",
         {cand1, cand2, cand3, gt_q, cand5},
         std::nullopt},
        // the ground-truth question re-answered: the second reference
        {"Question: " + gt_q + "\nAnswer:", {"happy"}, std::nullopt},
        // matches the regenerated reference only
        {"Question: " + cand1 + "\nAnswer:", {"happy"}, std::nullopt},
        // matches the ground-truth answer exactly
        {"Question: " + cand2 + "\nAnswer:", {"excited"}, std::nullopt},
        // overlaps neither reference
        {"Question: " + cand3 + "\nAnswer:", {"to the cellar"}, std::nullopt},
        // ROUGE-1 F1 against "happy" is exactly 0.5: not strictly above
        {"Question: " + cand5 + "\nAnswer:", {"happy and sad"}, std::nullopt},
    };
}

AugmentationConfig consistency_config() {
    AugmentationConfig cfg;
    cfg.m_candidates = 5;
    cfg.rng_seed = 11;
    return cfg;
}

// Answers every question with the record's own ground-truth answer, so every
// candidate passes the filter; question candidates are distinct per record.
struct EchoBackend : LmBackend {
    const Dataset& data;
    explicit EchoBackend(const Dataset& d) : data(d) {}

    const QARecord* target_of(const std::string& prompt) const {
        const size_t pos = prompt.rfind("Context: ");
        if (pos == std::string::npos) return nullptr;
        const std::string tail = prompt.substr(pos);
        for (const auto& rec : data.records) {
            if (tail.rfind("Context: " + rec.context + "\n", 0) == 0) {
                return &rec;
            }
        }
        return nullptr;
    }

    std::vector<Completion> generate(const std::string& prompt,
                                     const DecodingParams& params) override {
        const QARecord* rec = target_of(prompt);
        REQUIRE(rec != nullptr);
        std::vector<Completion> out;
        if (prompt.size() >= 7 &&
            prompt.compare(prompt.size() - 7, 7, "Answer:") == 0) {
            for (int i = 0; i < params.n; ++i) {
                out.push_back({rec->answer, std::nullopt});
            }
        } else {
            for (int i = 0; i < params.n; ++i) {
                out.push_back({"synthetic question " + std::to_string(i) +
                                   " about " + rec->id + "?",
                               std::nullopt});
            }
        }
        return out;
    }
    std::vector<TokenScore> score_completion(const std::string&,
                                             const std::string& c) override {
        return {{c, -1.0}};
    }
};

}  // namespace

TEST_CASE("build_prompt renders the question-generation template") {
    Dataset d = consistency_dataset();
    std::vector<QARecord> exemplars(d.records.begin() + 1, d.records.end());
    PromptBundle bundle{exemplars, d.records[0], PromptMode::QuestionGen};
    const std::string prompt = build_prompt(bundle);

    const std::string expected_head =
        "Context: Exemplar story 0\nAnswer: sad\nQuestion: How did character "
        "0 feel?\n\n";
    CHECK(prompt.rfind(expected_head, 0) == 0);
    const std::string expected_tail =
        "Context: The rat laid a linen thread in the youth's hand.\n"
        "Answer: excited\nAnother question with the same answer is:";
    CHECK(prompt.size() >= expected_tail.size());
    CHECK(prompt.substr(prompt.size() - expected_tail.size()) ==
          expected_tail);
}

TEST_CASE("build_prompt renders the question-answering template") {
    Dataset d = consistency_dataset();
    std::vector<QARecord> exemplars(d.records.begin() + 1, d.records.end());
    PromptBundle bundle{exemplars, d.records[0],
                        PromptMode::QuestionAnswering};
    const std::string prompt = build_prompt(bundle);
    // exemplars reordered to context-question-answer
    CHECK(prompt.find("Context: Exemplar story 0\nQuestion: How did character "
                      "0 feel?\nAnswer: sad\n\n") != std::string::npos);
    const std::string tail =
        "Context: The rat laid a linen thread in the youth's hand.\n"
        "Question: How did the youth feel when the rat allowed him to go "
        "above?\nAnswer:";
    CHECK(prompt.substr(prompt.size() - tail.size()) == tail);
}

TEST_CASE("build_prompt enforces the bundle invariants") {
    Dataset d = consistency_dataset();
    std::vector<QARecord> exemplars(d.records.begin() + 1, d.records.end());

    PromptBundle four{std::vector<QARecord>(exemplars.begin(),
                                            exemplars.begin() + 4),
                      d.records[0], PromptMode::QuestionGen};
    CHECK_THROWS_AS(build_prompt(four), std::invalid_argument);

    PromptBundle mismatched{exemplars, d.records[0], PromptMode::QuestionGen};
    mismatched.exemplars[2].attribute = Attribute::Action;
    CHECK_THROWS_AS(build_prompt(mismatched), std::invalid_argument);

    PromptBundle self{exemplars, d.records[0], PromptMode::QuestionGen};
    self.exemplars[0] = d.records[0];
    CHECK_THROWS_AS(build_prompt(self), std::invalid_argument);
}

TEST_CASE("select_exemplars samples attribute-matched records") {
    Dataset d = consistency_dataset();
    const QARecord& target = d.records[0];

    SUBCASE("a pool of exactly k returns the whole pool") {
        SeededRng rng(1);
        const auto picked = select_exemplars(d, target, 5, rng);
        REQUIRE(picked.size() == 5);
        std::set<std::string> ids;
        for (const auto& rec : picked) {
            CHECK(rec.attribute == target.attribute);
            CHECK(rec.id != target.id);
            ids.insert(rec.id);
        }
        CHECK(ids == std::set<std::string>{"e0", "e1", "e2", "e3", "e4"});
    }

    SUBCASE("different seeds yield different samples from a large pool") {
        Dataset big = d;
        for (int i = 0; i < 94; ++i) {
            big.records.push_back(feeling_record(
                "x" + std::to_string(i), "story " + std::to_string(i), "glad",
                "How did person " + std::to_string(i) + " feel?"));
        }
        SeededRng rng_a(1);
        SeededRng rng_b(2);
        const auto a = select_exemplars(big, target, 5, rng_a);
        const auto b = select_exemplars(big, target, 5, rng_b);
        bool differs = false;
        for (size_t i = 0; i < 5; ++i) differs |= a[i].id != b[i].id;
        CHECK(differs);
        SeededRng rng_c(1);
        const auto c = select_exemplars(big, target, 5, rng_c);
        for (size_t i = 0; i < 5; ++i) CHECK(a[i].id == c[i].id);
    }

    SUBCASE("a short pool raises a shortage naming the attribute") {
        Dataset small;
        small.records.push_back(d.records[0]);
        small.records.push_back(d.records[1]);
        small.records.push_back(d.records[2]);
        SeededRng rng(1);
        try {
            select_exemplars(small, target, 5, rng);
            FAIL("expected ExemplarShortage");
        } catch (const ExemplarShortage& e) {
            CHECK(std::string(e.what()).find("feeling") != std::string::npos);
        }
    }
}

TEST_CASE("augment_record keeps exactly the consistency-matched candidates") {
    Dataset d = consistency_dataset();
    MockBackend backend(3, consistency_fixtures());
    const auto synthetic =
        augment_record(d.records[0], d, consistency_config(), backend);

    // cand1 passes via the regenerated reference (excited vs happy/happy),
    // cand2 via the ground-truth answer; cand3 overlaps nothing, the
    // ground-truth question is excluded, and cand5 sits exactly at 0.5.
    REQUIRE(synthetic.size() == 2);
    CHECK(synthetic[0].base.question ==
          "How did the youth feel when he had the linen thread in his hand?");
    CHECK(synthetic[0].matched_against == MatchedAgainst::RegeneratedAnswer);
    CHECK(synthetic[1].base.question ==
          "What did the youth feel about going above?");
    CHECK(synthetic[1].matched_against == MatchedAgainst::GroundTruthAnswer);
    for (const auto& rec : synthetic) {
        CHECK(rec.provenance == Provenance::Synthetic);
        CHECK(rec.parent_id == std::string("r1"));
        CHECK(rec.weight == 1.0 - consistency_config().lambda);
        CHECK(rec.base.answer == "excited");
        CHECK(rec.base.attribute == Attribute::Feeling);
    }
    CHECK(synthetic[0].base.id == "r1-s0");
    CHECK(synthetic[1].base.id == "r1-s1");
}

TEST_CASE("retained duplicates collapse to the first occurrence") {
    Dataset d = consistency_dataset();
    d.records.push_back(feeling_record("r2", "A second story entirely.",
                                       "joyful", "How did the miller feel?"));
    auto fixtures = consistency_fixtures();
    fixtures.push_back({"Answer: joyful\nAnother question with the same "
                        "answer is:",
                        {"Was the miller glad?", "Was the miller glad?",
                         "Did the miller rejoice?", "Who was there?"},
                        std::nullopt});
    fixtures.push_back(
        {"Question: How did the miller feel?\nAnswer:", {"joyful"}, std::nullopt});
    fixtures.push_back(
        {"Question: Was the miller glad?\nAnswer:", {"joyful"}, std::nullopt});
    fixtures.push_back({"Question: Did the miller rejoice?\nAnswer:",
                        {"joyful"},
                        std::nullopt});
    fixtures.push_back(
        {"Question: Who was there?\nAnswer:", {"nobody of note"}, std::nullopt});
    MockBackend backend(3, fixtures);

    AugmentationConfig cfg = consistency_config();
    cfg.m_candidates = 4;
    const auto synthetic = augment_record(d.records.back(), d, cfg, backend);
    REQUIRE(synthetic.size() == 2);
    CHECK(synthetic[0].base.question == "Was the miller glad?");
    CHECK(synthetic[1].base.question == "Did the miller rejoice?");
}

TEST_CASE("augment_dataset with m = 0 passes humans through untouched") {
    struct ThrowingBackend : LmBackend {
        std::vector<Completion> generate(const std::string&,
                                         const DecodingParams&) override {
            throw BackendError("must not be called");
        }
        std::vector<TokenScore> score_completion(const std::string&,
                                                 const std::string&) override {
            throw BackendError("must not be called");
        }
    } backend;
    Dataset d = consistency_dataset();
    AugmentationConfig cfg;
    cfg.m_candidates = 0;
    const AugmentResult result = augment_dataset(d, cfg, backend);
    REQUIRE(result.records.size() == d.size());
    for (size_t i = 0; i < d.size(); ++i) {
        CHECK(result.records[i].base.id == d.records[i].id);
        CHECK(result.records[i].provenance == Provenance::Human);
        CHECK(result.records[i].weight == 0.8);
    }
}

TEST_CASE("minority_only skips majority-attribute datasets entirely") {
    Dataset d;
    for (int i = 0; i < 3; ++i) {
        QARecord rec = feeling_record("a" + std::to_string(i),
                                      "ctx " + std::to_string(i), "ans",
                                      "what happened " + std::to_string(i) + "?");
        rec.attribute = Attribute::Action;
        d.records.push_back(rec);
    }
    EchoBackend backend(d);
    AugmentationConfig cfg;
    const AugmentResult result = augment_dataset(d, cfg, backend);
    CHECK(result.records.size() == 3);
    for (const auto& rec : result.records) {
        CHECK(rec.provenance == Provenance::Human);
    }
}

TEST_CASE("an echoing backend retains M synthetics per eligible record") {
    Dataset d;
    const char* stories[] = {"story one", "story two", "story three",
                             "story four", "story five", "story six",
                             "story seven", "story eight"};
    for (int i = 0; i < 8; ++i) {
        d.records.push_back(feeling_record(
            "f" + std::to_string(i), stories[i], "answer " + std::to_string(i),
            "what is question " + std::to_string(i) + "?"));
    }
    QARecord action = d.records[0];
    action.id = "act0";
    action.context = "an action story";
    action.attribute = Attribute::Action;
    d.records.push_back(action);

    EchoBackend backend(d);
    AugmentationConfig cfg;
    cfg.m_candidates = 4;
    cfg.rng_seed = 5;
    const AugmentResult result = augment_dataset(d, cfg, backend);
    REQUIRE(result.errors.empty());

    // counting oracle: every candidate echoes the ground-truth answer, no
    // duplicates, none equals the human question -> M per minority record
    const size_t eligible = 8;
    const size_t humans = d.size();
    REQUIRE(result.records.size() == humans + 4 * eligible);

    size_t idx = 0;
    for (; idx < humans; ++idx) {
        CHECK(result.records[idx].provenance == Provenance::Human);
        CHECK(result.records[idx].base.id == d.records[idx].id);
        CHECK(result.records[idx].weight == cfg.lambda);
    }
    std::map<std::string, size_t> per_parent;
    for (; idx < result.records.size(); ++idx) {
        const auto& rec = result.records[idx];
        CHECK(rec.provenance == Provenance::Synthetic);
        CHECK(rec.weight == 1.0 - cfg.lambda);
        CHECK(rec.matched_against == MatchedAgainst::GroundTruthAnswer);
        REQUIRE(rec.parent_id.has_value());
        ++per_parent[*rec.parent_id];
    }
    for (const auto& [parent, count] : per_parent) {
        CHECK(count <= static_cast<size_t>(cfg.m_candidates));
        CHECK(parent.rfind("f", 0) == 0);  // only minority parents
    }
    // synthetics are grouped by parent in eligible order
    CHECK(result.records[humans].parent_id == std::string("f0"));
    CHECK(result.records[humans + 4].parent_id == std::string("f1"));
}

TEST_CASE("the regenerated reference answer is computed once per record") {
    Dataset d = consistency_dataset();
    struct CountingEcho : EchoBackend {
        using EchoBackend::EchoBackend;
        std::atomic<int> qa_calls{0};
        std::atomic<int> gen_calls{0};
        std::vector<Completion> generate(const std::string& prompt,
                                         const DecodingParams& params) override {
            if (prompt.compare(prompt.size() - 7, 7, "Answer:") == 0) {
                ++qa_calls;
            } else {
                ++gen_calls;
            }
            return EchoBackend::generate(prompt, params);
        }
    } backend(d);
    AugmentationConfig cfg;
    cfg.m_candidates = 4;
    const auto synthetic = augment_record(d.records[0], d, cfg, backend);
    CHECK(synthetic.size() == 4);
    CHECK(backend.gen_calls == 1);
    CHECK(backend.qa_calls == 1 + 4);  // one reference answer + one per candidate
}

TEST_CASE("every synthetic question re-passes the consistency predicate") {
    Dataset d = consistency_dataset();
    MockBackend backend(3, consistency_fixtures());
    AugmentationConfig cfg = consistency_config();
    const AugmentResult result = augment_dataset(d, cfg, backend);

    for (const auto& rec : result.records) {
        if (rec.provenance != Provenance::Synthetic) continue;
        const QARecord* parent = nullptr;
        for (const auto& r : d.records) {
            if (r.id == *rec.parent_id) parent = &r;
        }
        REQUIRE(parent != nullptr);
        // replay the record's seeded exemplar draw
        SeededRng rng(mix64(cfg.rng_seed, fnv1a64(parent->id)));
        const auto exemplars = select_exemplars(d, *parent, 5, rng);

        auto answer_of = [&](const std::string& question) {
            QARecord probe = *parent;
            probe.question = question;
            const auto replies = backend.generate(
                build_prompt({exemplars, probe, PromptMode::QuestionAnswering}),
                cfg.qa_params);
            return trim(replies.front().text);
        };
        const std::string regenerated = answer_of(parent->question);
        const std::string answer = answer_of(rec.base.question);
        const bool passes =
            rouge_1_f1(answer, parent->answer) > cfg.threshold ||
            rouge_1_f1(answer, regenerated) > cfg.threshold;
        CHECK(passes);
    }
}

TEST_CASE("augmentation output is byte-stable across runs and worker counts") {
    Dataset d;
    for (int i = 0; i < 8; ++i) {
        d.records.push_back(feeling_record(
            "f" + std::to_string(i), "story " + std::to_string(i),
            "answer " + std::to_string(i),
            "what is question " + std::to_string(i) + "?"));
    }
    EchoBackend backend(d);
    AugmentationConfig cfg;
    cfg.rng_seed = 77;

    auto dump = [&](int workers) {
        AugmentationConfig local = cfg;
        local.workers = workers;
        const AugmentResult result = augment_dataset(d, local, backend);
        std::string out;
        for (const auto& rec : result.records) {
            out += augmented_to_json(rec).dump();
            out += '\n';
        }
        return out;
    };
    const std::string serial = dump(1);
    CHECK(serial == dump(1));
    CHECK(serial == dump(4));
}

TEST_CASE("per-record failures honor the tolerant flag") {
    Dataset d = consistency_dataset();
    // one prediction record with no exemplar pool at all
    QARecord orphan = feeling_record("orphan", "lonely story", "alone",
                                     "who is alone?");
    orphan.attribute = Attribute::Prediction;
    d.records.push_back(orphan);
    EchoBackend backend(d);

    AugmentationConfig cfg;
    cfg.m_candidates = 2;
    SUBCASE("strict mode raises naming the record") {
        cfg.tolerant = false;
        try {
            augment_dataset(d, cfg, backend);
            FAIL("expected failure for the orphan record");
        } catch (const std::exception& e) {
            CHECK(std::string(e.what()).find("orphan") != std::string::npos);
            CHECK(std::string(e.what()).find("prediction") !=
                  std::string::npos);
        }
    }
    SUBCASE("tolerant mode records the error and keeps going") {
        cfg.tolerant = true;
        const AugmentResult result = augment_dataset(d, cfg, backend);
        REQUIRE(result.errors.size() == 1);
        CHECK(result.errors[0].record_id == "orphan");
        size_t synthetic = 0;
        for (const auto& rec : result.records) {
            synthetic += rec.provenance == Provenance::Synthetic;
        }
        CHECK(synthetic == 2 * 6);  // six feeling records still augmented
    }
}

TEST_CASE("augmented rows serialize with provenance metadata") {
    Dataset d = consistency_dataset();
    MockBackend backend(3, consistency_fixtures());
    const auto synthetic =
        augment_record(d.records[0], d, consistency_config(), backend);
    REQUIRE_FALSE(synthetic.empty());
    const nlohmann::json row = augmented_to_json(synthetic[0]);
    CHECK(row["provenance"] == "synthetic");
    CHECK(row["parent_id"] == "r1");
    CHECK(row["matched_against"] == "regenerated_answer");
    CHECK(row["weight"].get<double>() == 1.0 - 0.8);
    CHECK(row["attribute"] == "feeling");

    AugmentedRecord human;
    human.base = d.records[0];
    human.weight = 0.8;
    const nlohmann::json hrow = augmented_to_json(human);
    CHECK(hrow["provenance"] == "human");
    CHECK_FALSE(hrow.contains("parent_id"));
    CHECK_FALSE(hrow.contains("matched_against"));
}

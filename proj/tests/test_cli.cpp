#include <cstdio>
#include <iostream>
#include <sstream>

#include "doctest.h"
#include "qgen/cli.hpp"
#include "qgen/io.hpp"
#include "testutil.hpp"

using namespace qgen;

namespace {

struct CaptureStdout {
    std::ostringstream buffer;
    std::streambuf* saved;
    CaptureStdout() : saved(std::cout.rdbuf(buffer.rdbuf())) {}
    ~CaptureStdout() { std::cout.rdbuf(saved); }
    std::string str() const { return buffer.str(); }
};

nlohmann::json data_row(const std::string& id, const std::string& attribute,
                        const std::string& kind, const std::string& split,
                        int salt) {
    return nlohmann::json{
        {"id", id},
        {"context", "Once upon a time story number " + std::to_string(salt) +
                        " happened in the kingdom."},
        {"answer", "the answer " + std::to_string(salt)},
        {"question", "what happened in story " + std::to_string(salt) + "?"},
        {"attribute", attribute},
        {"answer_kind", kind},
        {"split", split},
    };
}

std::filesystem::path write_train_set(const std::filesystem::path& dir,
                                      int feeling = 8, int action = 3) {
    std::vector<nlohmann::json> rows;
    int salt = 0;
    for (int i = 0; i < feeling; ++i) {
        rows.push_back(data_row("f" + std::to_string(i), "feeling",
                                i % 2 ? "implicit" : "explicit", "train",
                                salt++));
    }
    for (int i = 0; i < action; ++i) {
        rows.push_back(data_row("a" + std::to_string(i), "action", "explicit",
                                "train", salt++));
    }
    const auto path = dir / "train.jsonl";
    write_jsonl(path, rows);
    return path;
}

}  // namespace

TEST_CASE("rouge subcommand prints six decimals") {
    CaptureStdout capture;
    const int code = cli::dispatch({"rouge", "--candidate", "a", "--reference",
                                    "a"});
    CHECK(code == 0);
    CHECK(capture.str() == "1.000000\n");
}

TEST_CASE("rouge variant 1 switches the metric") {
    CaptureStdout capture;
    const int code =
        cli::dispatch({"rouge", "--candidate", "a lovely dinner",
                       "--reference", "lovely dinner", "--variant", "1"});
    CHECK(code == 0);
    CHECK(capture.str() == "0.800000\n");
}

TEST_CASE("validation failures exit with 1") {
    CHECK(cli::dispatch({"rank", "--method", "distmatch", "--candidates",
                         "/nonexistent.jsonl", "--out", "/tmp/x"}) == 1);
    CHECK(cli::dispatch({"rouge", "--candidate", "a"}) == 1);  // missing flag
    CHECK(cli::dispatch({"rouge", "--candidate", "a", "--reference", "b",
                         "--frobnicate"}) == 1);
    CHECK(cli::dispatch({"no-such-command"}) == 1);
    CHECK(cli::dispatch({}) == 1);
}

TEST_CASE("help exits 0") {
    CaptureStdout capture;
    CHECK(cli::dispatch({"--help"}) == 0);
    CHECK(capture.str().find("augment") != std::string::npos);
}

TEST_CASE("config file values apply and flags override them") {
    const auto dir = testutil::make_temp_dir("cli-config");
    const auto input = write_train_set(dir);
    const auto config = dir / "config.json";
    write_file(config, nlohmann::json{
                           {"augment", {{"threshold", 0.7}, {"m", 0}}},
                           {"seed", 5}}
                           .dump());

    CaptureStdout capture;
    const auto out1 = dir / "aug1.jsonl";
    REQUIRE(cli::dispatch({"augment", "--input", input.string(), "--out",
                           out1.string(), "--config", config.string()}) == 0);
    const auto manifest1 =
        nlohmann::json::parse(read_file(out1.string() + ".manifest.json"));
    CHECK(manifest1["config"]["augment"]["threshold"] == doctest::Approx(0.7));
    CHECK(manifest1["config"]["augment"]["m"] == 0);
    CHECK(manifest1["config"]["seed"] == 5);
    CHECK(manifest1["version"] == cli::kVersion);
    CHECK(manifest1["inputs"].size() == 1);

    const auto out2 = dir / "aug2.jsonl";
    REQUIRE(cli::dispatch({"augment", "--input", input.string(), "--out",
                           out2.string(), "--config", config.string(),
                           "--threshold", "0.3"}) == 0);
    const auto manifest2 =
        nlohmann::json::parse(read_file(out2.string() + ".manifest.json"));
    CHECK(manifest2["config"]["augment"]["threshold"] == doctest::Approx(0.3));
}

TEST_CASE("the full mock pipeline runs end to end") {
    const auto dir = testutil::make_temp_dir("cli-pipeline");
    const auto train = write_train_set(dir);
    std::vector<nlohmann::json> test_rows;
    for (int i = 0; i < 4; ++i) {
        test_rows.push_back(data_row("t" + std::to_string(i), "feeling",
                                     i % 2 ? "implicit" : "explicit", "test",
                                     100 + i));
    }
    const auto test = dir / "test.jsonl";
    write_jsonl(test, test_rows);

    CaptureStdout capture;
    const auto aug = dir / "aug.jsonl";
    REQUIRE(cli::dispatch({"augment", "--input", train.string(), "--out",
                           aug.string(), "--backend", "mock", "--seed", "9",
                           "--tolerant"}) == 0);
    REQUIRE(std::filesystem::exists(aug));

    const auto groups = dir / "groups.jsonl";
    REQUIRE(cli::dispatch({"overgenerate", "--input", train.string(), "--out",
                           groups.string(), "--k", "8", "--strategy",
                           "nucleus", "--top-p", "0.9", "--temperature", "1",
                           "--seed", "9"}) == 0);
    REQUIRE(read_jsonl(groups).size() == 11);

    const auto model = dir / "model.json";
    REQUIRE(cli::dispatch({"train-ranker", "--groups", groups.string(),
                           "--out", model.string(), "--epochs", "40",
                           "--seed", "9"}) == 0);
    const auto model_json = nlohmann::json::parse(read_file(model));
    CHECK(model_json["feature_schema_version"] == 1);
    CHECK(model_json["phi"].size() == 16);
    CHECK(model_json["trained_on"].get<std::string>().rfind("fnv64:", 0) == 0);

    const auto cands = dir / "cands.jsonl";
    REQUIRE(cli::dispatch({"overgenerate", "--input", test.string(), "--out",
                           cands.string(), "--k", "8", "--seed", "9"}) == 0);

    const auto selected = dir / "selected.jsonl";
    REQUIRE(cli::dispatch({"rank", "--candidates", cands.string(), "--method",
                           "distmatch", "--model", model.string(), "--out",
                           selected.string()}) == 0);
    const auto selected_rows = read_jsonl(selected);
    REQUIRE(selected_rows.size() == 4);
    for (const auto& row : selected_rows) {
        CHECK(row.contains("question"));
        CHECK(row["method"] == "dist_match");
        CHECK(row["ordering"].size() == 8);
    }

    const auto selected_ppl = dir / "selected_ppl.jsonl";
    REQUIRE(cli::dispatch({"rank", "--candidates", cands.string(), "--method",
                           "ppl", "--out", selected_ppl.string(), "--seed",
                           "9"}) == 0);
    REQUIRE(read_jsonl(selected_ppl).size() == 4);
    CHECK(read_jsonl(selected_ppl)[0]["method"] == "perplexity");

    const auto report = dir / "report.json";
    REQUIRE(cli::dispatch({"eval", "--pred", selected.string(), "--ref",
                           test.string(), "--format", "json", "--out",
                           report.string()}) == 0);
    const auto report_json = nlohmann::json::parse(read_file(report));
    CHECK(report_json["overall"]["n"] == 4);
    CHECK(report_json.contains("by_answer_kind"));
    REQUIRE(std::filesystem::exists(report.string() + ".manifest.json"));
}

TEST_CASE("eval prints a table to stdout when no output file is given") {
    const auto dir = testutil::make_temp_dir("cli-eval-stdout");
    const auto refs = dir / "refs.jsonl";
    write_jsonl(refs, {data_row("t0", "feeling", "explicit", "test", 1)});
    const auto preds = dir / "preds.jsonl";
    write_jsonl(preds, {{{"item_id", "t0"},
                         {"question", "what happened in story 1?"}}});
    CaptureStdout capture;
    REQUIRE(cli::dispatch({"eval", "--pred", preds.string(), "--ref",
                           refs.string()}) == 0);
    CHECK(capture.str().find("overall") != std::string::npos);
    CHECK(capture.str().find("1.0000") != std::string::npos);
}

TEST_CASE("the installed binary behaves like dispatch") {
    const std::string command =
        std::string(QGEN_CLI_PATH) +
        " rouge --candidate \"the cat sat\" --reference \"the cat sat\"";
    FILE* pipe = popen(command.c_str(), "r");
    REQUIRE(pipe != nullptr);
    char buffer[64] = {0};
    REQUIRE(fgets(buffer, sizeof(buffer), pipe) != nullptr);
    CHECK(pclose(pipe) == 0);
    CHECK(std::string(buffer) == "1.000000\n");
}

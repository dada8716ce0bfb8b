#include "qgen/cli.hpp"

#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <memory>

#include "CLI11.hpp"
#include "qgen/augment.hpp"
#include "qgen/cache.hpp"
#include "qgen/corpus.hpp"
#include "qgen/evalreport.hpp"
#include "qgen/hashing.hpp"
#include "qgen/http_backend.hpp"
#include "qgen/io.hpp"
#include "qgen/metrics.hpp"
#include "qgen/mock_backend.hpp"
#include "qgen/ranking.hpp"
#include "qgen/scorer.hpp"

namespace qgen::cli {

namespace {

namespace fs = std::filesystem;

struct BackendSettings {
    std::string kind = "mock";
    std::string base_url = "http://127.0.0.1:8080/v1";
    std::string model = "local-model";
    double timeout_s = 60.0;
    int max_retries = 3;
    int max_in_flight = 4;
    int requests_per_minute = 0;
    std::string fixture;
};

struct PipelineConfig {
    uint64_t seed = 0;
    BackendSettings backend;
    AugmentationConfig augment;
    RankTrainConfig ranker;
    DecodingParams decode = DecodingParams::nucleus(0.9, 1.0, 10);
    std::string cache_path;
};

void overlay_config(PipelineConfig& cfg, const nlohmann::json& j) {
    if (j.contains("seed")) cfg.seed = j.at("seed").get<uint64_t>();
    if (j.contains("backend")) {
        const auto& b = j.at("backend");
        auto& out = cfg.backend;
        out.kind = b.value("kind", out.kind);
        out.base_url = b.value("base_url", out.base_url);
        out.model = b.value("model", out.model);
        out.timeout_s = b.value("timeout_s", out.timeout_s);
        out.max_retries = b.value("max_retries", out.max_retries);
        out.max_in_flight = b.value("max_in_flight", out.max_in_flight);
        out.requests_per_minute =
            b.value("requests_per_minute", out.requests_per_minute);
        out.fixture = b.value("fixture", out.fixture);
    }
    if (j.contains("augment")) {
        const auto& a = j.at("augment");
        auto& out = cfg.augment;
        out.m_candidates = a.value("m", out.m_candidates);
        out.threshold = a.value("threshold", out.threshold);
        out.lambda = a.value("lambda", out.lambda);
        out.minority_only = a.value("minority_only", out.minority_only);
        out.workers = a.value("workers", out.workers);
        out.tolerant = a.value("tolerant", out.tolerant);
        out.gen_params.top_p = a.value("gen_top_p", out.gen_params.top_p);
        out.gen_params.temperature =
            a.value("gen_temperature", out.gen_params.temperature);
        out.gen_params.max_new_tokens =
            a.value("max_new_tokens", out.gen_params.max_new_tokens);
    }
    if (j.contains("ranker")) {
        const auto& r = j.at("ranker");
        auto& out = cfg.ranker;
        out.alpha_p = r.value("alpha_p", out.alpha_p);
        out.alpha_r = r.value("alpha_r", out.alpha_r);
        out.learning_rate = r.value("learning_rate", out.learning_rate);
        out.epochs = r.value("epochs", out.epochs);
        out.batch_size = r.value("batch_size", out.batch_size);
    }
    if (j.contains("decode")) {
        cfg.decode = DecodingParams::from_json(j.at("decode"));
    }
    if (j.contains("paths")) {
        cfg.cache_path = j.at("paths").value("cache", cfg.cache_path);
    }
}

nlohmann::json config_to_json(const PipelineConfig& cfg) {
    return nlohmann::json{
        {"seed", cfg.seed},
        {"backend",
         {{"kind", cfg.backend.kind},
          {"base_url", cfg.backend.base_url},
          {"model", cfg.backend.model},
          {"timeout_s", cfg.backend.timeout_s},
          {"max_retries", cfg.backend.max_retries},
          {"max_in_flight", cfg.backend.max_in_flight},
          {"requests_per_minute", cfg.backend.requests_per_minute},
          {"fixture", cfg.backend.fixture}}},
        {"augment",
         {{"m", cfg.augment.m_candidates},
          {"threshold", cfg.augment.threshold},
          {"lambda", cfg.augment.lambda},
          {"minority_only", cfg.augment.minority_only},
          {"workers", cfg.augment.workers},
          {"tolerant", cfg.augment.tolerant},
          {"gen_top_p", cfg.augment.gen_params.top_p},
          {"gen_temperature", cfg.augment.gen_params.temperature},
          {"max_new_tokens", cfg.augment.gen_params.max_new_tokens}}},
        {"ranker",
         {{"alpha_p", cfg.ranker.alpha_p},
          {"alpha_r", cfg.ranker.alpha_r},
          {"learning_rate", cfg.ranker.learning_rate},
          {"epochs", cfg.ranker.epochs},
          {"batch_size", cfg.ranker.batch_size}}},
        {"decode", cfg.decode.to_json()},
        {"paths", {{"cache", cfg.cache_path}}},
    };
}

struct BackendHandle {
    std::unique_ptr<ResponseCache> cache;
    std::unique_ptr<LmBackend> base;
    std::unique_ptr<LmBackend> cached;

    LmBackend& get() { return cached ? *cached : *base; }
};

BackendHandle make_backend(const PipelineConfig& cfg) {
    BackendHandle handle;
    if (cfg.backend.kind == "mock") {
        std::vector<MockFixtureRow> fixtures;
        if (!cfg.backend.fixture.empty()) {
            fixtures = MockBackend::load_fixtures(cfg.backend.fixture);
        }
        handle.base = std::make_unique<MockBackend>(
            mix64(cfg.seed, fnv1a64("backend")), std::move(fixtures));
    } else if (cfg.backend.kind == "http") {
        HttpBackendConfig hc;
        hc.base_url = cfg.backend.base_url;
        hc.model = cfg.backend.model;
        hc.timeout_s = cfg.backend.timeout_s;
        hc.max_retries = cfg.backend.max_retries;
        hc.max_in_flight = cfg.backend.max_in_flight;
        hc.requests_per_minute = cfg.backend.requests_per_minute;
        if (const char* key = std::getenv("QGEN_API_KEY")) hc.api_key = key;
        handle.base = std::make_unique<HttpBackend>(hc);
    } else {
        throw ValidationError("unknown backend '" + cfg.backend.kind +
                              "' (expected mock or http)");
    }
    if (!cfg.cache_path.empty()) {
        handle.cache = std::make_unique<ResponseCache>(cfg.cache_path);
        handle.cached =
            std::make_unique<CachedBackend>(*handle.base, *handle.cache);
    }
    return handle;
}

std::string hex64(uint64_t v) {
    char buf[24];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(v));
    return buf;
}

void write_manifest(const fs::path& out, const std::vector<fs::path>& inputs,
                    const nlohmann::json& config) {
    nlohmann::json inputs_json = nlohmann::json::object();
    for (const auto& p : inputs) {
        inputs_json[p.string()] = "fnv64:" + hex64(fnv1a64(read_file(p)));
    }
    const nlohmann::json manifest{
        {"version", kVersion}, {"inputs", inputs_json}, {"config", config}};
    write_file(out.string() + ".manifest.json", manifest.dump(2) + "\n");
}

CorpusFormat parse_format(const std::string& s) {
    if (s == "jsonl") return CorpusFormat::Jsonl;
    if (s == "csv") return CorpusFormat::Csv;
    throw ValidationError("unknown format '" + s + "' (expected jsonl or csv)");
}

Dataset load_or_fail(const std::string& path, const std::string& format,
                     bool strict,
                     const std::map<std::string, std::string>& field_map) {
    LoadOptions opts;
    opts.strict = strict;
    opts.field_map = field_map;
    LoadResult result = load_dataset(path, parse_format(format), opts);
    for (const auto& err : result.errors) {
        std::cerr << path << ": row " << err.row << ": " << err.message
                  << " (skipped)\n";
    }
    return std::move(result.dataset);
}

std::map<std::string, std::string> parse_field_map(
    const std::vector<std::string>& entries) {
    std::map<std::string, std::string> out;
    for (const auto& e : entries) {
        const size_t eq = e.find('=');
        if (eq == std::string::npos || eq == 0 || eq + 1 >= e.size()) {
            throw ValidationError("--map-field expects canonical=source, got '" +
                                  e + "'");
        }
        out[e.substr(0, eq)] = e.substr(eq + 1);
    }
    return out;
}

}  // namespace

int dispatch(const std::vector<std::string>& args) {
    PipelineConfig cfg;
    // --config is applied before flag parsing so flags win
    for (size_t i = 0; i < args.size(); ++i) {
        std::string path;
        if (args[i] == "--config" && i + 1 < args.size()) {
            path = args[i + 1];
        } else if (args[i].rfind("--config=", 0) == 0) {
            path = args[i].substr(9);
        }
        if (!path.empty()) {
            try {
                overlay_config(cfg, nlohmann::json::parse(read_file(path)));
            } catch (const std::exception& e) {
                std::cerr << "config error: " << e.what() << "\n";
                return 1;
            }
        }
    }

    CLI::App app{"question generation pipeline"};
    app.require_subcommand(1);
    std::string config_path;
    app.add_option("--config", config_path, "JSON config file");

    // rouge
    auto* rouge_cmd = app.add_subcommand("rouge", "score one candidate/reference pair");
    std::string rouge_candidate;
    std::string rouge_reference;
    std::string rouge_variant = "l";
    rouge_cmd->add_option("--candidate", rouge_candidate)->required();
    rouge_cmd->add_option("--reference", rouge_reference)->required();
    rouge_cmd->add_option("--variant", rouge_variant)
        ->check(CLI::IsMember({"l", "1"}));
    rouge_cmd->callback([&] {
        const double score =
            rouge_variant == "1" ? rouge_1_f1(rouge_candidate, rouge_reference)
                                 : rouge_l_f1(rouge_candidate, rouge_reference);
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.6f", score);
        std::cout << buf << "\n";
    });

    // augment
    auto* aug_cmd = app.add_subcommand("augment",
                                       "consistency-filtered synthetic questions");
    std::string aug_input;
    std::string aug_out;
    std::string aug_format = "jsonl";
    bool aug_strict_load = false;
    std::vector<std::string> aug_field_map;
    aug_cmd->add_option("--input", aug_input)->required();
    aug_cmd->add_option("--out", aug_out)->required();
    aug_cmd->add_option("--format", aug_format)
        ->check(CLI::IsMember({"jsonl", "csv"}));
    aug_cmd->add_option("--backend", cfg.backend.kind)
        ->check(CLI::IsMember({"mock", "http"}));
    aug_cmd->add_option("--fixture", cfg.backend.fixture, "mock fixture JSONL");
    aug_cmd->add_option("--m", cfg.augment.m_candidates, "candidates per record");
    aug_cmd->add_option("--threshold", cfg.augment.threshold);
    aug_cmd->add_option("--lambda", cfg.augment.lambda);
    aug_cmd->add_flag("--minority-only,!--no-minority-only",
                      cfg.augment.minority_only);
    aug_cmd->add_option("--seed", cfg.seed);
    aug_cmd->add_option("--workers", cfg.augment.workers);
    aug_cmd->add_flag("--tolerant", cfg.augment.tolerant,
                      "skip records whose backend calls fail");
    aug_cmd->add_flag("--strict-load", aug_strict_load,
                      "reject inputs with any invalid row");
    aug_cmd->add_option("--cache", cfg.cache_path, "response cache JSONL");
    aug_cmd->add_option("--map-field", aug_field_map,
                        "canonical=source field mapping");
    aug_cmd->callback([&] {
        Dataset d = load_or_fail(aug_input, aug_format, aug_strict_load,
                                 parse_field_map(aug_field_map));
        cfg.augment.rng_seed = mix64(cfg.seed, fnv1a64("augment"));
        BackendHandle backend = make_backend(cfg);
        const AugmentResult result =
            augment_dataset(d, cfg.augment, backend.get());
        std::vector<nlohmann::json> rows;
        rows.reserve(result.records.size());
        size_t synthetic = 0;
        for (const auto& rec : result.records) {
            if (rec.provenance == Provenance::Synthetic) ++synthetic;
            rows.push_back(augmented_to_json(rec));
        }
        write_jsonl(aug_out, rows);
        for (const auto& err : result.errors) {
            std::cerr << "record '" << err.record_id << "': " << err.message
                      << " (skipped)\n";
        }
        write_manifest(aug_out, {aug_input}, config_to_json(cfg));
        std::cout << "augmented " << d.size() << " records: "
                  << result.records.size() - synthetic << " human + "
                  << synthetic << " synthetic -> " << aug_out << "\n";
    });

    // overgenerate
    auto* over_cmd =
        app.add_subcommand("overgenerate", "K question candidates per record");
    std::string over_input;
    std::string over_out;
    std::string over_format = "jsonl";
    std::string over_strategy;
    int over_k = 10;
    int over_n = 0;  // 0 = derive from strategy
    over_cmd->add_option("--input", over_input)->required();
    over_cmd->add_option("--out", over_out)->required();
    over_cmd->add_option("--format", over_format)
        ->check(CLI::IsMember({"jsonl", "csv"}));
    over_cmd->add_option("--k", over_k);
    over_cmd->add_option("--strategy", over_strategy)
        ->check(CLI::IsMember({"greedy", "nucleus", "contrastive"}));
    over_cmd->add_option("--top-p", cfg.decode.top_p);
    over_cmd->add_option("--temperature", cfg.decode.temperature);
    over_cmd->add_option("--top-k", cfg.decode.top_k);
    over_cmd->add_option("--alpha-penalty", cfg.decode.alpha_penalty);
    over_cmd->add_option("--n", over_n, "samples per call");
    over_cmd->add_option("--max-new-tokens", cfg.decode.max_new_tokens);
    over_cmd->add_option("--backend", cfg.backend.kind)
        ->check(CLI::IsMember({"mock", "http"}));
    over_cmd->add_option("--fixture", cfg.backend.fixture);
    over_cmd->add_option("--seed", cfg.seed);
    over_cmd->add_option("--cache", cfg.cache_path);
    over_cmd->callback([&] {
        if (!over_strategy.empty()) {
            cfg.decode.strategy = *parse_strategy(over_strategy);
        }
        cfg.decode.n =
            over_n > 0 ? over_n
                       : (cfg.decode.strategy == DecodingStrategy::Greedy
                              ? 1
                              : over_k);
        cfg.decode.validate();
        Dataset d = load_or_fail(over_input, over_format, false, {});
        BackendHandle backend = make_backend(cfg);
        std::vector<nlohmann::json> rows;
        size_t skipped = 0;
        for (const auto& rec : d.records) {
            try {
                rows.push_back(candidate_set_to_json(
                    overgenerate(rec, backend.get(), cfg.decode, over_k)));
            } catch (const EmptyCandidatePool& e) {
                std::cerr << e.what() << " (skipped)\n";
                ++skipped;
            }
        }
        write_jsonl(over_out, rows);
        write_manifest(over_out, {over_input}, config_to_json(cfg));
        std::cout << "overgenerated " << rows.size() << " candidate sets (k="
                  << over_k << ", " << skipped << " skipped) -> " << over_out
                  << "\n";
    });

    // train-ranker
    auto* train_cmd =
        app.add_subcommand("train-ranker", "fit the distribution-matching scorer");
    std::string train_groups;
    std::string train_out;
    train_cmd->add_option("--groups", train_groups)->required();
    train_cmd->add_option("--out", train_out)->required();
    train_cmd->add_option("--alpha-p", cfg.ranker.alpha_p);
    train_cmd->add_option("--alpha-r", cfg.ranker.alpha_r);
    train_cmd->add_option("--lr", cfg.ranker.learning_rate);
    train_cmd->add_option("--epochs", cfg.ranker.epochs);
    train_cmd->add_option("--batch-size", cfg.ranker.batch_size);
    train_cmd->add_option("--seed", cfg.seed);
    train_cmd->callback([&] {
        std::vector<RankGroup> groups;
        size_t skipped = 0;
        for (const auto& row : read_jsonl(train_groups)) {
            CandidateSet cs = candidate_set_from_json(row);
            if (cs.reference_question.empty()) {
                throw ValidationError(
                    "group '" + cs.item_id +
                    "' has no reference_question; train on the train split");
            }
            if (cs.candidates.size() < 2) {
                ++skipped;
                continue;
            }
            std::vector<std::string> texts;
            texts.reserve(cs.candidates.size());
            for (auto& c : cs.candidates) texts.push_back(std::move(c.question));
            groups.push_back(make_group(cs.item_id, cs.context, cs.answer,
                                        cs.reference_question,
                                        std::move(texts)));
        }
        if (groups.empty()) {
            throw ValidationError("no trainable groups in " + train_groups);
        }
        cfg.ranker.rng_seed = mix64(cfg.seed, fnv1a64("train"));
        const TrainResult result = train(groups, cfg.ranker);
        result.model.save(train_out);
        write_manifest(train_out, {train_groups}, config_to_json(cfg));
        std::cout << "trained on " << groups.size() << " groups (" << skipped
                  << " skipped), best loss " << result.best_loss << " -> "
                  << train_out << "\n";
    });

    // rank
    auto* rank_cmd = app.add_subcommand("rank", "select the best candidate");
    std::string rank_candidates;
    std::string rank_out;
    std::string rank_method;
    std::string rank_model;
    rank_cmd->add_option("--candidates", rank_candidates)->required();
    rank_cmd->add_option("--out", rank_out)->required();
    rank_cmd->add_option("--method", rank_method)
        ->required()
        ->check(CLI::IsMember({"ppl", "distmatch"}));
    rank_cmd->add_option("--model", rank_model, "scorer model JSON");
    rank_cmd->add_option("--backend", cfg.backend.kind)
        ->check(CLI::IsMember({"mock", "http"}));
    rank_cmd->add_option("--fixture", cfg.backend.fixture);
    rank_cmd->add_option("--seed", cfg.seed);
    rank_cmd->add_option("--cache", cfg.cache_path);
    rank_cmd->callback([&] {
        const bool dist = rank_method == "distmatch";
        ScorerModel model;
        if (dist) {
            if (rank_model.empty()) {
                throw ValidationError(
                    "rank --method distmatch requires --model <model.json>");
            }
            model = ScorerModel::load(rank_model);
        }
        std::optional<BackendHandle> backend;
        std::vector<nlohmann::json> rows;
        for (const auto& row : read_jsonl(rank_candidates)) {
            const CandidateSet cs = candidate_set_from_json(row);
            RankingResult result;
            if (dist) {
                QARecord rec;
                rec.id = cs.item_id;
                rec.context = cs.context;
                rec.answer = cs.answer;
                rec.question = cs.reference_question;
                result = rank_by_scorer(cs, rec, model);
            } else {
                if (!backend) backend.emplace(make_backend(cfg));
                result = rank_by_perplexity(cs, backend->get());
            }
            rows.push_back(nlohmann::json{
                {"item_id", result.item_id},
                {"question", cs.candidates.at(result.selected).question},
                {"method", std::string(to_string(result.method))},
                {"score", result.scores.at(result.selected)},
                {"ordering", result.ordering},
            });
        }
        write_jsonl(rank_out, rows);
        std::vector<fs::path> inputs{rank_candidates};
        if (dist) inputs.push_back(rank_model);
        write_manifest(rank_out, inputs, config_to_json(cfg));
        std::cout << "ranked " << rows.size() << " candidate sets ("
                  << rank_method << ") -> " << rank_out << "\n";
    });

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "corpus-level ROUGE-L report");
    std::string eval_pred;
    std::string eval_ref;
    std::string eval_ref_format = "jsonl";
    std::string eval_group_by = "answer_kind,attribute";
    std::string eval_format = "table";
    std::string eval_out;
    bool eval_lenient = false;
    eval_cmd->add_option("--pred", eval_pred)->required();
    eval_cmd->add_option("--ref", eval_ref)->required();
    eval_cmd->add_option("--ref-format", eval_ref_format)
        ->check(CLI::IsMember({"jsonl", "csv"}));
    eval_cmd->add_option("--group-by", eval_group_by,
                         "comma list of answer_kind,attribute");
    eval_cmd->add_option("--format", eval_format)
        ->check(CLI::IsMember({"table", "json"}));
    eval_cmd->add_option("--out", eval_out, "write report here instead of stdout");
    eval_cmd->add_flag("--lenient", eval_lenient,
                       "exclude missing predictions instead of scoring 0");
    eval_cmd->callback([&] {
        std::map<std::string, std::string> predictions;
        for (const auto& row : read_jsonl(eval_pred)) {
            const auto id = row.at("item_id").get<std::string>();
            const auto question = row.at("question").get<std::string>();
            if (!predictions.emplace(id, question).second) {
                std::cerr << "duplicate prediction for '" << id
                          << "' ignored\n";
            }
        }
        const Dataset refs = load_or_fail(eval_ref, eval_ref_format, false, {});
        EvalOptions opts;
        opts.strict = !eval_lenient;
        opts.group_by_answer_kind =
            eval_group_by.find("answer_kind") != std::string::npos;
        opts.group_by_attribute =
            eval_group_by.find("attribute") != std::string::npos;
        const EvalReport report = evaluate(predictions, refs, opts);
        if (!report.missing_ids.empty()) {
            std::cerr << report.missing_ids.size()
                      << " reference item(s) without predictions\n";
        }
        if (!report.unknown_ids.empty()) {
            std::cerr << report.unknown_ids.size()
                      << " prediction id(s) not in the references\n";
        }
        const std::string text = eval_format == "json"
                                     ? report.to_json().dump(2) + "\n"
                                     : report.render_table();
        if (eval_out.empty()) {
            std::cout << text;
        } else {
            write_file(eval_out, text);
            write_manifest(eval_out, {eval_pred, eval_ref},
                           config_to_json(cfg));
            std::cout << "evaluated " << report.overall.n << " item(s) -> "
                      << eval_out << "\n";
        }
    });

    std::vector<const char*> argv;
    argv.reserve(args.size() + 1);
    argv.push_back("qgen");
    for (const auto& a : args) argv.push_back(a.c_str());

    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);  // prints help or error text
        return code == 0 ? 0 : 1;
    } catch (const BackendError& e) {
        std::cerr << "backend error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

}  // namespace qgen::cli

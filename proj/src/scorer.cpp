#include "qgen/scorer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <unordered_set>

#include "qgen/hashing.hpp"
#include "qgen/io.hpp"
#include "qgen/metrics.hpp"
#include "qgen/strings.hpp"

namespace qgen {

namespace {

const char* const kWhWords[] = {"what", "who",  "why",  "how",
                                "where", "when", "which"};

double dot(std::span<const double> phi, const FeatureVector& x) {
    double s = 0.0;
    for (size_t i = 0; i < kFeatureDim; ++i) s += phi[i] * x[i];
    return s;
}

void check_group(const RankGroup& group) {
    const size_t k = group.features.size();
    if (k < 2) {
        throw std::invalid_argument(
            "group must have at least 2 candidates, got " + std::to_string(k));
    }
    if (group.target_rouge.size() != k) {
        throw std::invalid_argument("group targets/features size mismatch");
    }
}

void check_model(const ScorerModel& model) {
    if (model.phi.size() != kFeatureDim) {
        throw std::invalid_argument("model phi has wrong dimension");
    }
    for (double v : model.phi) {
        if (!std::isfinite(v)) {
            throw std::invalid_argument("model phi has non-finite entries");
        }
    }
}

uint64_t hash_double(double v) {
    uint64_t bits = 0;
    static_assert(sizeof(bits) == sizeof(v));
    std::memcpy(&bits, &v, sizeof(bits));
    return bits;
}

std::string hash_groups(const std::vector<RankGroup>& groups) {
    uint64_t h = fnv1a64("rank-groups");
    for (const auto& g : groups) {
        h = mix64(h, fnv1a64(g.item_id));
        h = mix64(h, fnv1a64(g.reference_question));
        for (const auto& c : g.candidates) h = mix64(h, fnv1a64(c));
        for (double t : g.target_rouge) h = mix64(h, hash_double(t));
    }
    char buf[32];
    std::snprintf(buf, sizeof(buf), "fnv64:%016llx",
                  static_cast<unsigned long long>(h));
    return buf;
}

// Per-group loss and, when grad != nullptr, the accumulated gradient.
double group_objective(std::span<const double> phi, const RankGroup& group,
                       const RankTrainConfig& cfg, std::vector<double>* grad) {
    const size_t k = group.features.size();
    std::vector<double> raw(k);
    for (size_t j = 0; j < k; ++j) raw[j] = dot(phi, group.features[j]);
    const std::vector<double> p = softmax_scaled(raw, cfg.alpha_p);
    const std::vector<double> r =
        softmax_scaled(group.target_rouge, cfg.alpha_r);

    std::vector<double> g(k);
    double loss = 0.0;
    for (size_t j = 0; j < k; ++j) {
        g[j] = std::log(p[j]) - std::log(r[j]);
        loss += p[j] * g[j];
    }
    if (grad != nullptr) {
        double s = 0.0;
        for (size_t j = 0; j < k; ++j) s += p[j] * (g[j] + 1.0);
        for (size_t j = 0; j < k; ++j) {
            const double coef = cfg.alpha_p * p[j] * (g[j] + 1.0 - s);
            for (size_t d = 0; d < kFeatureDim; ++d) {
                (*grad)[d] += coef * group.features[j][d];
            }
        }
    }
    return loss;
}

}  // namespace

FeatureVector extract_features(const std::string& question,
                               const std::string& context,
                               const std::string& answer) {
    const TokenSequence q = tokenize(question);
    const TokenSequence c = tokenize(context);
    const TokenSequence a = tokenize(answer);

    FeatureVector f{};
    f[0] = rouge_1_f1(q, c);
    f[1] = rouge_1_f1(q, a);
    f[2] = rouge_l_f1(q, c);
    f[3] = rouge_l_f1(q, a);
    f[4] = std::min(1.0, static_cast<double>(q.size()) / 32.0);

    size_t wh = 7;  // "other"
    for (const auto& tok : q) {
        bool found = false;
        for (size_t w = 0; w < 7; ++w) {
            if (tok == kWhWords[w]) {
                wh = w;
                found = true;
                break;
            }
        }
        if (found) break;
    }
    f[5 + wh] = 1.0;

    if (!a.empty()) {
        std::unordered_set<std::string> q_set(q.begin(), q.end());
        std::unordered_set<std::string> a_set(a.begin(), a.end());
        size_t covered = 0;
        for (const auto& tok : a_set) covered += q_set.count(tok);
        f[13] = static_cast<double>(covered) / static_cast<double>(a_set.size());
    }

    const std::string trimmed = trim(question);
    f[14] = !trimmed.empty() && trimmed.back() == '?' ? 1.0 : 0.0;
    f[15] = 1.0;
    return f;
}

double ScorerModel::score(const FeatureVector& features) const {
    check_model(*this);
    return dot(phi, features);
}

nlohmann::json ScorerModel::to_json() const {
    return nlohmann::json{
        {"feature_schema_version", feature_schema_version},
        {"phi", phi},
        {"alpha_p", alpha_p},
        {"trained_on", trained_on},
    };
}

ScorerModel ScorerModel::from_json(const nlohmann::json& j) {
    ScorerModel m;
    m.feature_schema_version = j.at("feature_schema_version").get<int>();
    m.phi = j.at("phi").get<std::vector<double>>();
    m.alpha_p = j.value("alpha_p", 1e-3);
    m.trained_on = j.value("trained_on", std::string{});
    return m;
}

void ScorerModel::save(const std::filesystem::path& path) const {
    write_file(path, to_json().dump(2) + "\n");
}

ScorerModel ScorerModel::load(const std::filesystem::path& path) {
    return from_json(nlohmann::json::parse(read_file(path)));
}

std::vector<double> softmax_scaled(std::span<const double> values,
                                   double alpha) {
    if (values.empty()) {
        throw std::invalid_argument("softmax_scaled: empty input");
    }
    if (!(alpha > 0.0) || !std::isfinite(alpha)) {
        throw std::invalid_argument("softmax_scaled: alpha must be positive");
    }
    double hi = -std::numeric_limits<double>::infinity();
    for (double v : values) {
        if (!std::isfinite(v)) {
            throw std::invalid_argument("softmax_scaled: non-finite input");
        }
        hi = std::max(hi, alpha * v);
    }
    std::vector<double> out(values.size());
    double sum = 0.0;
    for (size_t i = 0; i < values.size(); ++i) {
        out[i] = std::exp(alpha * values[i] - hi);
        sum += out[i];
    }
    for (double& v : out) v /= sum;
    return out;
}

double kl_divergence(std::span<const double> p, std::span<const double> q) {
    if (p.size() != q.size() || p.empty()) {
        throw std::invalid_argument("kl_divergence: length mismatch");
    }
    double sp = 0.0;
    double sq = 0.0;
    for (size_t i = 0; i < p.size(); ++i) {
        if (!(p[i] >= 0.0) || !std::isfinite(p[i])) {
            throw std::invalid_argument("kl_divergence: p is not a distribution");
        }
        if (!(q[i] > 0.0) || !std::isfinite(q[i])) {
            throw std::invalid_argument("kl_divergence: q entries must be > 0");
        }
        sp += p[i];
        sq += q[i];
    }
    if (std::abs(sp - 1.0) > 1e-9 || std::abs(sq - 1.0) > 1e-9) {
        throw std::invalid_argument("kl_divergence: inputs must sum to 1");
    }
    double kl = 0.0;
    for (size_t i = 0; i < p.size(); ++i) {
        if (p[i] > 0.0) kl += p[i] * std::log(p[i] / q[i]);
    }
    return kl;
}

RankGroup make_group(std::string item_id, std::string context,
                     std::string answer, std::string reference_question,
                     std::vector<std::string> candidates) {
    RankGroup g;
    g.item_id = std::move(item_id);
    g.context = std::move(context);
    g.answer = std::move(answer);
    g.reference_question = std::move(reference_question);
    g.candidates = std::move(candidates);
    const TokenSequence ref = tokenize(g.reference_question);
    g.features.reserve(g.candidates.size());
    g.target_rouge.reserve(g.candidates.size());
    for (const auto& cand : g.candidates) {
        g.features.push_back(extract_features(cand, g.context, g.answer));
        g.target_rouge.push_back(rouge_l_f1(tokenize(cand), ref));
    }
    return g;
}

double group_loss(const ScorerModel& model, const RankGroup& group,
                  const RankTrainConfig& cfg) {
    check_model(model);
    check_group(group);
    return group_objective(model.phi, group, cfg, nullptr);
}

std::vector<double> group_gradient(const ScorerModel& model,
                                   const RankGroup& group,
                                   const RankTrainConfig& cfg) {
    check_model(model);
    check_group(group);
    std::vector<double> grad(kFeatureDim, 0.0);
    group_objective(model.phi, group, cfg, &grad);
    return grad;
}

TrainResult train(const std::vector<RankGroup>& groups,
                  const RankTrainConfig& cfg) {
    if (groups.empty()) {
        throw std::invalid_argument("train: no groups");
    }
    for (const auto& g : groups) check_group(g);

    const double inv_n = 1.0 / static_cast<double>(groups.size());
    std::vector<double> phi(kFeatureDim, 0.0);

    auto full_loss = [&](std::span<const double> params) {
        double loss = 0.0;
        for (const auto& g : groups) {
            loss += group_objective(params, g, cfg, nullptr);
        }
        return loss * inv_n;
    };

    // Adam state
    std::vector<double> m(kFeatureDim, 0.0);
    std::vector<double> v(kFeatureDim, 0.0);
    constexpr double beta1 = 0.9;
    constexpr double beta2 = 0.999;
    constexpr double eps = 1e-8;
    long step = 0;

    auto apply_step = [&](const std::vector<double>& grad) {
        ++step;
        const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
        const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
        for (size_t d = 0; d < kFeatureDim; ++d) {
            m[d] = beta1 * m[d] + (1.0 - beta1) * grad[d];
            v[d] = beta2 * v[d] + (1.0 - beta2) * grad[d] * grad[d];
            const double mhat = m[d] / bc1;
            const double vhat = v[d] / bc2;
            phi[d] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + eps);
        }
    };

    TrainResult result;
    result.best_loss = full_loss(phi);
    result.loss_trace.push_back(result.best_loss);
    std::vector<double> best_phi = phi;

    std::vector<size_t> order(groups.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    SeededRng rng(cfg.rng_seed);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        if (cfg.batch_size > 0) {
            // seeded Fisher-Yates, then minibatch steps
            for (size_t i = order.size(); i > 1; --i) {
                std::swap(order[i - 1], order[rng.next_below(i)]);
            }
            const size_t bs = static_cast<size_t>(cfg.batch_size);
            for (size_t start = 0; start < order.size(); start += bs) {
                const size_t end = std::min(start + bs, order.size());
                std::vector<double> grad(kFeatureDim, 0.0);
                for (size_t i = start; i < end; ++i) {
                    group_objective(phi, groups[order[i]], cfg, &grad);
                }
                const double scale = 1.0 / static_cast<double>(end - start);
                for (double& g : grad) g *= scale;
                apply_step(grad);
            }
        } else {
            std::vector<double> grad(kFeatureDim, 0.0);
            for (const auto& g : groups) group_objective(phi, g, cfg, &grad);
            for (double& g : grad) g *= inv_n;
            apply_step(grad);
        }

        const double loss = full_loss(phi);
        if (!std::isfinite(loss)) {
            throw TrainingDiverged(
                "training loss became non-finite at epoch " +
                std::to_string(epoch + 1) + "; lower learning_rate (current " +
                std::to_string(cfg.learning_rate) + ")");
        }
        result.loss_trace.push_back(loss);
        if (loss < result.best_loss) {
            result.best_loss = loss;
            best_phi = phi;
        }
    }

    result.model.phi = std::move(best_phi);
    result.model.feature_schema_version = kFeatureSchemaVersion;
    result.model.alpha_p = cfg.alpha_p;
    result.model.trained_on = hash_groups(groups);
    return result;
}

}  // namespace qgen

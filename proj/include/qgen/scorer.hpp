#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace qgen {

// Hand-crafted similarity features standing in for a deep encoder:
//   [0..3]  ROUGE-1(q,c), ROUGE-1(q,a), ROUGE-L(q,c), ROUGE-L(q,a)
//   [4]     question length in tokens / 32, clamped to 1
//   [5..12] wh-word one-hot: what who why how where when which other
//   [13]    fraction of distinct answer tokens present in the question
//   [14]    question ends with '?'
//   [15]    bias
inline constexpr size_t kFeatureDim = 16;
inline constexpr int kFeatureSchemaVersion = 1;

using FeatureVector = std::array<double, kFeatureDim>;

FeatureVector extract_features(const std::string& question,
                               const std::string& context,
                               const std::string& answer);

// Linear scorer phi with its persisted metadata.
struct ScorerModel {
    std::vector<double> phi = std::vector<double>(kFeatureDim, 0.0);
    int feature_schema_version = kFeatureSchemaVersion;
    double alpha_p = 1e-3;
    std::string trained_on;  // stable hash of the training groups

    double score(const FeatureVector& features) const;

    nlohmann::json to_json() const;
    static ScorerModel from_json(const nlohmann::json& j);
    void save(const std::filesystem::path& path) const;
    static ScorerModel load(const std::filesystem::path& path);
};

// p_j = exp(alpha*v_j - max_k alpha*v_k), normalized. Entries are in (0,1]
// and sum to 1.
std::vector<double> softmax_scaled(std::span<const double> values,
                                   double alpha);

// sum_j p_j * ln(p_j / q_j) with 0*ln(0) = 0. Requires equal lengths, both
// summing to 1 within 1e-9, and all q_j > 0.
double kl_divergence(std::span<const double> p, std::span<const double> q);

// One context-answer pair with its K overgenerated candidates, their
// similarity features, and ROUGE-L targets against the reference question.
struct RankGroup {
    std::string item_id;
    std::string context;
    std::string answer;
    std::string reference_question;
    std::vector<std::string> candidates;
    std::vector<FeatureVector> features;
    std::vector<double> target_rouge;
};

// Computes features and ROUGE-L targets from the raw strings.
RankGroup make_group(std::string item_id, std::string context,
                     std::string answer, std::string reference_question,
                     std::vector<std::string> candidates);

struct RankTrainConfig {
    double alpha_p = 1e-3;
    double alpha_r = 1e-2;
    double learning_rate = 0.05;
    int epochs = 200;
    uint64_t rng_seed = 0;
    int batch_size = 0;  // 0 = full batch
};

// KL( softmax(phi . x, alpha_p) || softmax(targets, alpha_r) ). K >= 2.
double group_loss(const ScorerModel& model, const RankGroup& group,
                  const RankTrainConfig& cfg);

// Exact analytic gradient of group_loss with respect to phi.
std::vector<double> group_gradient(const ScorerModel& model,
                                   const RankGroup& group,
                                   const RankTrainConfig& cfg);

class TrainingDiverged : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct TrainResult {
    ScorerModel model;             // parameters with the lowest loss seen
    std::vector<double> loss_trace;  // full-batch loss per epoch, [0] = init
    double best_loss = 0.0;
};

// Adam from phi = 0, deterministic for a fixed config and group order.
TrainResult train(const std::vector<RankGroup>& groups,
                  const RankTrainConfig& cfg);

}  // namespace qgen

#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

#include "icpguard/metrics.hpp"
#include "icpguard/nnet.hpp"
#include "icpguard/registration.hpp"

namespace icpguard::failure {

inline constexpr Eigen::Index kFeatureDim = 17;
inline constexpr double kDefaultSuccessThreshold = 0.01;  // ADD, meters
inline constexpr double kDefaultDecisionThreshold = 0.5;

/// fitness_1cm, fitness_2cm, rmse_inlier, dist_mesh_to_scene,
/// dist_scene_to_mesh, then [R | t] row-major.
using FeatureVector = Eigen::Matrix<double, kFeatureDim, 1>;

struct SuccessPrediction {
  double probability = 0.0;
  bool label = false;
};

FeatureVector extract_features(const IcpResult& icp_result, const AlignmentReport& report);

SuccessPrediction predict_success(const nnet::Network& model, const FeatureVector& features,
                                  double threshold = kDefaultDecisionThreshold);

/// Grasp-success proxy: true iff add < success_threshold.
bool label_by_add(double add, double success_threshold = kDefaultSuccessThreshold);

struct FailureDataset {
  std::vector<FeatureVector> features;
  std::vector<bool> labels;
  std::vector<std::size_t> sources;  // optional mixing sources

  std::size_t size() const { return features.size(); }
};

struct FailureTrainConfig {
  std::vector<std::size_t> hidden = {32, 16};
  nnet::TrainConfig train{0.05, 300, 32, 0, nnet::LossKind::BinaryCrossEntropy, 0.9, 1e-4, 5.0};
};

struct FailureTrainResult {
  nnet::Network model;
  nnet::TrainReport report;
};

/// Trains on standardized features; the standardization is folded into the
/// first layer, so the returned network takes raw feature vectors.
FailureTrainResult train_failure_model(const FailureDataset& data, const FailureTrainConfig& config,
                                       const nnet::MixingSchedule* schedule = nullptr);

struct ConfusionMatrix {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;

  std::size_t total() const { return tp + fp + fn + tn; }
  double accuracy() const;
  std::string to_text() const;
};

ConfusionMatrix confusion(const std::vector<bool>& predicted, const std::vector<bool>& actual);
ConfusionMatrix evaluate(const nnet::Network& model, const FailureDataset& data,
                         double threshold = kDefaultDecisionThreshold);

nnet::WeightFile to_weight_file(const nnet::Network& model, double decision_threshold);

}  // namespace icpguard::failure

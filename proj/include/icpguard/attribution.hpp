#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "icpguard/geometry.hpp"
#include "icpguard/nnet.hpp"

namespace icpguard::attribution {

enum class ErrorClass { Noise = 0, BadInit = 1, Occlusion = 2 };
inline constexpr std::size_t kNumClasses = 3;

std::string to_string(ErrorClass c);
ErrorClass error_class_from_string(const std::string& s);

using ClassProbabilities = std::array<double, kNumClasses>;

ErrorClass argmax(const ClassProbabilities& p);

/// Resamples to exactly n_points, centers on the centroid and scales by the
/// max radius; below a radius of 1e-9 every output point is zero. The result
/// depends only on the set of points, not their order: FPS starts at the point
/// farthest from the centroid, and padding draws from the lexicographically
/// sorted cloud after every point has been taken once.
Eigen::Matrix3Xd normalize_cloud(const PointCloud& cloud, std::size_t n_points, std::uint64_t seed);

struct AttributionModel {
  nnet::Network encoder;  // per point, 3 -> h
  nnet::Network head;     // pooled h -> 3, softmax
  std::size_t n_points = 2048;
  std::uint64_t sample_seed = 0;

  void validate() const;
};

ClassProbabilities classify(const AttributionModel& model, const PointCloud& cloud);
ClassProbabilities classify_normalized(const AttributionModel& model, const Eigen::Matrix3Xd& points);

struct AttributionDataset {
  std::vector<PointCloud> clouds;
  std::vector<ErrorClass> labels;
  std::vector<std::size_t> sources;

  std::size_t size() const { return clouds.size(); }
};

struct AttributionTrainConfig {
  std::vector<std::size_t> encoder_dims = {32, 64};
  std::vector<std::size_t> head_hidden = {32};
  std::size_t n_points = 2048;
  nnet::TrainConfig train{0.02, 30, 16, 0, nnet::LossKind::CrossEntropy, 0.9, 1e-4, 5.0};
};

struct AttributionTrainResult {
  AttributionModel model;
  nnet::TrainReport report;
};

/// Cross-entropy of one normalized cloud and its gradients for {encoder, head}.
struct SampleGradient {
  double loss = 0.0;
  std::vector<nnet::Gradients> grads;
};
SampleGradient sample_gradient(const AttributionModel& model, const Eigen::Matrix3Xd& points, ErrorClass label);

AttributionTrainResult train_attribution(const AttributionDataset& data,
                                         const AttributionTrainConfig& config,
                                         const nnet::MixingSchedule* schedule = nullptr);

/// Rows are actual classes, columns predicted classes.
struct ClassConfusion {
  std::array<std::array<std::size_t, kNumClasses>, kNumClasses> counts{};

  std::size_t total() const;
  double accuracy() const;
  // Fraction of samples of class `actual` predicted as `predicted`.
  double rate(ErrorClass actual, ErrorClass predicted) const;
  std::string to_text() const;
};

ClassConfusion confusion(const std::vector<ErrorClass>& predicted,
                         const std::vector<ErrorClass>& actual);
ClassConfusion evaluate(const AttributionModel& model, const AttributionDataset& data);

nnet::WeightFile to_weight_file(const AttributionModel& model);
AttributionModel from_weight_file(const nnet::WeightFile& file);

}  // namespace icpguard::attribution

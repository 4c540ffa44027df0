#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "icpguard/geometry.hpp"
#include "icpguard/kdtree.hpp"

namespace icpguard::nnet {

enum class Activation { Identity, ReLU, Sigmoid, Softmax };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);

struct DenseLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;    // out
  Activation activation = Activation::Identity;
};

/// Feed-forward stack of dense layers. Batches are matrices with one sample
/// per column.
struct Network {
  std::vector<DenseLayer> layers;
  std::uint64_t init_seed = 0;

  /// dims = {in, h1, ..., out}; one activation per layer. Weights are drawn
  /// uniformly in +-sqrt(6 / (fan_in + fan_out)); biases start at zero.
  static Network create(const std::vector<std::size_t>& dims,
                        const std::vector<Activation>& activations, std::uint64_t seed);

  std::size_t input_dim() const;
  std::size_t output_dim() const;
  std::size_t parameter_count() const;
  // Dimension chaining and finiteness; throws InvalidInput.
  void validate() const;
};

/// Activations of one forward pass, kept for the reverse pass.
struct ForwardCache {
  std::vector<Eigen::MatrixXd> inputs;  // input of each layer
  std::vector<Eigen::MatrixXd> outputs;  // post-activation output of each layer
};

Eigen::VectorXd forward(const Network& net, const Eigen::VectorXd& input);
Eigen::MatrixXd forward_batch(const Network& net, const Eigen::MatrixXd& inputs);
Eigen::MatrixXd forward_batch(const Network& net, const Eigen::MatrixXd& inputs,
                              ForwardCache& cache);

struct Gradients {
  std::vector<Eigen::MatrixXd> weight;
  std::vector<Eigen::VectorXd> bias;

  static Gradients zeros_like(const Network& net);
  void set_zero();
  void add_scaled(const Gradients& other, double scale);
  void scale(double s);
  double squared_norm() const;
  bool all_zero() const;
};

/// Reverse pass from dL/d(output). Parameter gradients are accumulated into
/// grads; the return value is dL/d(input).
Eigen::MatrixXd backward(const Network& net, const ForwardCache& cache,
                         const Eigen::MatrixXd& upstream, Gradients& grads);

/// Same, but the upstream gradient is taken w.r.t. the last layer's
/// pre-activation (fused sigmoid/softmax cross-entropy).
Eigen::MatrixXd backward_from_logits(const Network& net, const ForwardCache& cache,
                                     const Eigen::MatrixXd& upstream_logits, Gradients& grads);

/// Single-sample convenience form.
Gradients backward(const Network& net, const Eigen::VectorXd& input,
                   const Eigen::VectorXd& upstream);

// ---- pooling over sets (columns) ------------------------------------------

/// Coordinatewise max over columns; argmax (first maximum) is reported when asked.
Eigen::VectorXd pool_max(const Eigen::MatrixXd& set,
                         std::vector<Eigen::Index>* argmax = nullptr);
Eigen::VectorXd pool_mean(const Eigen::MatrixXd& set);
Eigen::VectorXd pool_max(std::span<const Eigen::VectorXd> set);
Eigen::VectorXd pool_mean(std::span<const Eigen::VectorXd> set);

// ---- losses ---------------------------------------------------------------

enum class LossKind { BinaryCrossEntropy, CrossEntropy, Chamfer };

std::string to_string(LossKind k);
LossKind loss_from_string(const std::string& s);

inline constexpr double kProbEps = 1e-12;

/// Mean binary cross-entropy of sigmoid outputs (1 x n) against 0/1 targets.
double binary_cross_entropy(const Eigen::MatrixXd& probs, const Eigen::MatrixXd& targets);
/// Mean categorical cross-entropy of softmax outputs (c x n) against one-hot targets.
double cross_entropy(const Eigen::MatrixXd& probs, const Eigen::MatrixXd& targets);

/// Chamfer distance between predicted points (3 x n) and a fixed target set,
/// with the subgradient w.r.t. the predictions under the nearest-neighbor
/// assignment of this evaluation.
struct ChamferValue {
  double loss = 0.0;
  Eigen::MatrixXd gradient;  // 3 x n
};
ChamferValue chamfer_loss(const Eigen::MatrixXd& predicted, const PointCloud& target,
                          const KdTree& target_index);

// ---- training -------------------------------------------------------------

struct TrainConfig {
  double learning_rate = 0.05;
  int epochs = 50;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  LossKind loss = LossKind::BinaryCrossEntropy;
  double momentum = 0.9;
  double weight_decay = 0.0;
  double grad_clip = 0.0;  // global L2 norm; 0 disables

  void validate() const;
};

/// Dataset-source mixing by epoch. Stage k applies from its epoch_start until
/// the next stage begins; weights are relative draw shares per source.
struct MixingStage {
  int epoch_start = 0;
  std::vector<double> weights;
};

struct MixingSchedule {
  std::vector<MixingStage> stages;

  void validate(std::size_t n_sources) const;
  const MixingStage& stage_for(int epoch) const;
};

struct TrainReport {
  std::vector<double> loss_curve;          // mean sample loss per epoch
  std::vector<std::size_t> source_draws;   // samples drawn from each source
};

/// Loss callback for one mini-batch: returns the summed sample loss and
/// accumulates summed parameter gradients (one Gradients per network).
using BatchLossFn =
    std::function<double(std::span<const std::size_t> batch, std::vector<Gradients>& grads)>;

/// Mini-batch gradient descent with momentum over a set of networks. Sample
/// order is drawn from the seeded generator; the run is deterministic.
TrainReport train_networks(std::span<Network* const> nets, std::span<const std::size_t> sources,
                           const BatchLossFn& batch_loss, const TrainConfig& config,
                           const MixingSchedule* schedule = nullptr);

/// Supervised vector dataset; inputs and targets hold one sample per column.
struct VectorDataset {
  Eigen::MatrixXd inputs;
  Eigen::MatrixXd targets;
  std::vector<std::size_t> sources;  // optional; empty means all source 0

  std::size_t size() const { return static_cast<std::size_t>(inputs.cols()); }
};

struct TrainOutcome {
  Network network;
  TrainReport report;
};

TrainOutcome train(const Network& net, const VectorDataset& data, const TrainConfig& config,
                   const MixingSchedule* schedule = nullptr);

// ---- persistence ----------------------------------------------------------

inline constexpr int kWeightFormatVersion = 1;

nlohmann::json network_to_json(const Network& net);
Network network_from_json(const nlohmann::json& j);

/// Weight file: {format_version, model_kind, networks: [{name, input_dim,
/// layers}], metadata}. Unknown format versions are rejected.
struct WeightFile {
  std::string model_kind;
  std::vector<std::pair<std::string, Network>> networks;
  nlohmann::json metadata = nlohmann::json::object();

  const Network& get(const std::string& name) const;
};

nlohmann::json weight_file_to_json(const WeightFile& file);
WeightFile weight_file_from_json(const nlohmann::json& j);
void save_weight_file(const std::filesystem::path& path, const WeightFile& file);
WeightFile load_weight_file(const std::filesystem::path& path);

}  // namespace icpguard::nnet

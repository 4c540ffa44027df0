#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "icpguard/geometry.hpp"
#include "icpguard/nnet.hpp"

namespace icpguard::recon {

struct PatchSet {
  PointCloud centers;
  std::vector<std::vector<std::size_t>> members;  // indices into the scene cloud
};

struct TokenSet {
  Eigen::MatrixXd tokens;  // d x I
};

struct ProxySet {
  Eigen::MatrixXd features;             // d x J
  std::vector<std::size_t> source_index;  // into P_M, FPS order
};

struct FusedTokens {
  Eigen::MatrixXd tokens;   // d x I, after the decoder mixer
  Eigen::MatrixXd weights;  // I x J
};

struct DisplacementField {
  std::vector<Eigen::Vector3d> vectors;  // meters, aligned with the centers
};

struct ReconHyper {
  std::size_t n_centers = 64;   // I
  std::size_t n_proxies = 64;   // J
  std::size_t patch_size = 32;  // m
  std::size_t n_interp = 4;     // K
  std::size_t feature_dim = 64; // d
  std::size_t edge_k = 8;
  std::size_t hidden = 64;
  /// Network inputs are coordinates times this factor; head outputs are
  /// divided by it.
  double coord_scale = 10.0;

  void validate() const;
};

/// Token mixer block: t' = t + mixer(t (+) mean_k t_k), applied column-wise.
struct ReconstructionModel {
  ReconHyper hyper;
  nnet::Network patch_encoder;  // 3 -> d, per point, max-pooled
  nnet::Network pos_encoder;    // 3 -> d
  nnet::Network enc_mixer;      // 2d -> d
  nnet::Network edge_net;       // 6 -> d, on (x_i, x_j - x_i), max over k
  nnet::Network fusion_scorer;  // 2d -> 1
  nnet::Network fusion_combiner;  // 2d -> d
  nnet::Network dec_mixer;      // 2d -> d
  nnet::Network head;           // 3 + d -> 3

  static ReconstructionModel create(const ReconHyper& hyper, std::uint64_t seed);
  void validate() const;
};

PatchSet patchify(const PointCloud& P, std::size_t n_centers, std::size_t patch_size);

/// use_mixer = false skips the encoder token mixer.
TokenSet encode_patches(const ReconstructionModel& model, const PatchSet& patches,
                        const PointCloud& P, bool use_mixer = true);

ProxySet mesh_proxies(const ReconstructionModel& model, const PointCloud& P_M, std::size_t n_proxies);

/// use_mixer = false returns the combiner outputs without the decoder mixer.
FusedTokens fuse(const ReconstructionModel& model, const TokenSet& V, const ProxySet& O,
                 bool use_mixer = true);

DisplacementField predict_displacements(const ReconstructionModel& model, const FusedTokens& fused,
                                        const PointCloud& centers);

PointCloud propagate(const PointCloud& P, const PointCloud& centers, const DisplacementField& field,
                     std::size_t K);

/// Row n holds the propagation weights of point n over the centers; the
/// displaced cloud is P + D * W^T with D the 3 x I field.
struct PropagationWeights {
  std::vector<std::vector<std::pair<std::size_t, double>>> rows;
};
PropagationWeights propagation_weights(const PointCloud& P, const PointCloud& centers, std::size_t K);

PointCloud reconstruct(const ReconstructionModel& model, const PointCloud& P, const PointCloud& P_M);

struct ReconSample {
  PointCloud corrupted;
  PointCloud clean;
  PointCloud mesh;
};

struct ReconTrainConfig {
  ReconHyper hyper;
  nnet::TrainConfig train{0.003, 10, 8, 0, nnet::LossKind::Chamfer, 0.9, 0.0, 1.0};
};

struct ReconTrainResult {
  ReconstructionModel model;
  nnet::TrainReport report;
};

/// Networks in the order patch_encoder, pos_encoder, enc_mixer, edge_net,
/// fusion_scorer, fusion_combiner, dec_mixer, head.
std::vector<nnet::Network*> networks_of(ReconstructionModel& model);

struct SampleGradient {
  double loss = 0.0;  // chamfer_loss of the reconstruction against the clean cloud
  std::vector<nnet::Gradients> grads;  // one per network, networks_of order
};
SampleGradient sample_gradient(const ReconstructionModel& model, const ReconSample& sample);

/// Chamfer-to-clean training with fixed-assignment subgradients.
ReconTrainResult train_reconstruction(const std::vector<ReconSample>& data,
                                      const ReconTrainConfig& config,
                                      const nnet::MixingSchedule* schedule = nullptr,
                                      const std::vector<std::size_t>& sources = {});

nnet::WeightFile to_weight_file(const ReconstructionModel& model);
ReconstructionModel from_weight_file(const nnet::WeightFile& file);

}  // namespace icpguard::recon

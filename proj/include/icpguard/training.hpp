#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "icpguard/attribution.hpp"
#include "icpguard/failure.hpp"
#include "icpguard/pipeline.hpp"
#include "icpguard/reconstruct.hpp"
#include "icpguard/simscene.hpp"

namespace icpguard::training {

inline constexpr const char* kFailureFile = "failure.json";
inline constexpr const char* kAttributionFile = "attribution.json";
inline constexpr const char* kReconstructionFile = "reconstruction.json";

/// Alignments from pipeline::training_attempts on every scene, labeled by ADD.
/// Attempt seeds are mix_seed(seed, scene seed). jobs parallelizes over scenes;
/// the output order does not depend on it.
failure::FailureDataset failure_set(const std::vector<sim::SceneSample>& scenes, const IcpConfig& icp,
                                    double success_threshold, std::uint64_t seed, std::size_t jobs = 1);

/// Observed clouds of the non-clean scenes, labeled by their case.
attribution::AttributionDataset attribution_set(const std::vector<sim::SceneSample>& scenes);
attribution::ErrorClass error_class_of(sim::SceneCase c);

/// (observed, clean, mesh) triples of the Noise scenes.
std::vector<recon::ReconSample> reconstruction_set(const std::vector<sim::SceneSample>& scenes);

nnet::Network failure_from_weight_file(const nnet::WeightFile& file);

/// Loads all three models from dir; FormatError names the offending file.
pipeline::Models load_models(const std::filesystem::path& dir);

/// "epoch,loss" header and one row per epoch.
void write_loss_csv(const std::filesystem::path& path, const std::vector<double>& loss_curve);

}  // namespace icpguard::training

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "icpguard/attribution.hpp"
#include "icpguard/failure.hpp"
#include "icpguard/pipeline.hpp"
#include "icpguard/reconstruct.hpp"
#include "icpguard/simscene.hpp"

namespace icpguard::config {

inline constexpr int kConfigFormatVersion = 1;

struct Paths {
  std::string dataset = "data";
  std::string models = "models";
  std::string reports = "reports";
};

struct Seeds {
  std::uint64_t generate = 1;
  std::uint64_t train = 0;
  std::uint64_t bench = 0;
};

struct GenerateSection {
  std::vector<sim::SceneCase> cases = {sim::SceneCase::Clean, sim::SceneCase::Noise, sim::SceneCase::BadInit,
                                       sim::SceneCase::Occlusion};
  std::size_t per_case = 20;
  std::vector<std::string> objects = sim::default_objects();
  sim::GenerateConfig scene;
};

/// Pipeline settings other than the model references, which are loaded from
/// the model directory.
struct PipelineSection {
  IcpConfig icp{60, 0.01, 1e-6, 10};
  double decision_threshold = failure::kDefaultDecisionThreshold;
  double success_threshold = failure::kDefaultSuccessThreshold;
  bo::SearchBounds bo_bounds = pipeline::PipelineConfig::default_bo_bounds();
  bo::BoConfig bo = pipeline::PipelineConfig::default_bo_config();
  IcpConfig bo_scoring{30, 0.08, 1e-6, 10};
  std::size_t nbv_visibility_samples = 2000;
  int max_mitigation_rounds = 1;
};

struct RunConfig {
  Paths paths;
  Seeds seeds;
  std::size_t jobs = 1;
  GenerateSection generate;
  failure::FailureTrainConfig failure;
  attribution::AttributionTrainConfig attribution;
  recon::ReconTrainConfig reconstruction;
  PipelineSection pipeline;

  void validate() const;
  /// Copies the pipeline section into a PipelineConfig (models left empty).
  pipeline::PipelineConfig pipeline_config() const;
};

nlohmann::json to_json(const RunConfig& c);
/// Rejects unknown keys at every level and any format_version other than
/// kConfigFormatVersion (InvalidInput naming the offending key).
RunConfig from_json(const nlohmann::json& j);

RunConfig load(const std::filesystem::path& path);
void save(const std::filesystem::path& path, const RunConfig& c);

nlohmann::json train_config_to_json(const nnet::TrainConfig& t);
/// Fields absent from j keep their value in base.
nnet::TrainConfig train_config_from_json(const nlohmann::json& j, const std::string& where,
                                         nnet::TrainConfig base = {});

}  // namespace icpguard::config

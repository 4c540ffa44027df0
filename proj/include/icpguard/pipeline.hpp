#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "icpguard/attribution.hpp"
#include "icpguard/boicp.hpp"
#include "icpguard/failure.hpp"
#include "icpguard/reconstruct.hpp"
#include "icpguard/registration.hpp"
#include "icpguard/simscene.hpp"

namespace icpguard::pipeline {

enum class Mitigation { None, BoIcp, Reconstruct, Nbv };

std::string to_string(Mitigation m);
Mitigation mitigation_from_string(const std::string& s);
/// The dispatch table: Noise -> reconstruct, BadInit -> bo_icp, Occlusion -> nbv.
Mitigation mitigation_for(attribution::ErrorClass c);

struct Models {
  std::shared_ptr<const nnet::Network> failure;
  std::shared_ptr<const attribution::AttributionModel> attribution;
  std::shared_ptr<const recon::ReconstructionModel> reconstruction;
};

struct PipelineConfig {
  IcpConfig icp{60, 0.01, 1e-6, 10};
  double decision_threshold = failure::kDefaultDecisionThreshold;
  double success_threshold = failure::kDefaultSuccessThreshold;  // ADD, meters
  bo::SearchBounds bo_bounds = default_bo_bounds();
  bo::BoConfig bo = default_bo_config();
  IcpConfig bo_scoring{30, 0.08, 1e-6, 10};
  std::vector<sim::Viewpoint> nbv_candidates = sim::hemisphere_candidates();
  std::size_t nbv_visibility_samples = 2000;
  sim::RenderConfig render;
  int max_mitigation_rounds = 1;
  Models models;

  static bo::SearchBounds default_bo_bounds();
  static bo::BoConfig default_bo_config();
  void validate() const;
};

struct StageTimings {
  double icp_ms = 0.0;
  double predict_ms = 0.0;
  double attribute_ms = 0.0;
  double mitigate_ms = 0.0;
};

struct Attempt {
  Mitigation mitigation = Mitigation::None;
  IcpResult icp;
  failure::FeatureVector features = failure::FeatureVector::Zero();
  failure::SuccessPrediction prediction;
  double add = 0.0;
  std::string error;
  bool stage_failed = false;  // the mitigation threw; no estimate was produced
};

struct PipelineResult {
  std::string sample_label;
  std::uint64_t seed = 0;
  Attempt initial;
  std::optional<attribution::ErrorClass> attributed;
  attribution::ClassProbabilities class_probabilities{};
  Mitigation mitigation = Mitigation::None;  // first mitigation applied
  std::vector<Attempt> mitigations;
  std::size_t final_attempt = 0;  // 0 = initial, k = mitigations[k - 1]
  RigidTransform final_transform;
  double add_initial = 0.0;
  double add_final = 0.0;
  bool success = false;
  StageTimings timings;
};

struct Oracle {
  enum class Kind { TrueClass, Always };
  Kind kind = Kind::TrueClass;
  attribution::ErrorClass forced = attribution::ErrorClass::Noise;  // for Always
};

PipelineResult run(const sim::SceneSample& sample, const PipelineConfig& config);
PipelineResult oracle_run(const sim::SceneSample& sample, const PipelineConfig& config, const Oracle& oracle);

/// Initial ICP, features and ADD only (no models needed).
Attempt initial_attempt(const sim::SceneSample& sample, const IcpConfig& icp_config);

/// Failure-predictor training alignments for one scene: the initial estimate
/// plus ICP started from a perturbed ground-truth pose, so successful
/// estimates far from the hypothesis are represented.
std::vector<Attempt> training_attempts(const sim::SceneSample& sample, const IcpConfig& icp_config,
                                       std::uint64_t seed);

nlohmann::json to_json(const PipelineResult& r, bool include_timings = false);

struct CaseRow {
  sim::SceneCase scene_case = sim::SceneCase::Clean;
  std::size_t count = 0;
  std::size_t icp_success = 0;
  std::size_t pipeline_success = 0;
  std::size_t attribution_runs = 0;
  std::size_t attribution_correct = 0;

  double icp_rate() const;
  double pipeline_rate() const;
};

struct BenchmarkReport {
  std::vector<CaseRow> rows;  // one per case present, in enum order
  failure::ConfusionMatrix failure_confusion;
  attribution::ClassConfusion attribution_confusion;
  StageTimings mean_timings;
  std::vector<PipelineResult> results;

  std::string to_text() const;
  /// Deterministic twin of the text table; timings excluded.
  nlohmann::json to_json() const;
  nlohmann::json timings_json() const;
};

BenchmarkReport benchmark(const std::vector<sim::SceneSample>& dataset, const PipelineConfig& config,
                          std::size_t jobs = 1, const std::optional<Oracle>& oracle = std::nullopt);

}  // namespace icpguard::pipeline

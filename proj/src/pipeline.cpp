#include "icpguard/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <iomanip>
#include <numbers>
#include <sstream>
#include <thread>

#include "icpguard/errors.hpp"
#include "icpguard/metrics.hpp"
#include "icpguard/rng.hpp"

namespace icpguard::pipeline {

using attribution::ErrorClass;

namespace {
constexpr std::array<const char*, 4> kMitigationNames = {"none", "bo_icp", "reconstruct", "nbv"};

double ms_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

std::optional<ErrorClass> true_class(sim::SceneCase c) {
  switch (c) {
    case sim::SceneCase::Noise: return ErrorClass::Noise;
    case sim::SceneCase::BadInit: return ErrorClass::BadInit;
    case sim::SceneCase::Occlusion: return ErrorClass::Occlusion;
    case sim::SceneCase::Clean: break;
  }
  return std::nullopt;
}
}  // namespace

std::string to_string(Mitigation m) { return kMitigationNames[static_cast<std::size_t>(m)]; }

Mitigation mitigation_from_string(const std::string& s) {
  for (std::size_t i = 0; i < kMitigationNames.size(); ++i) {
    if (s == kMitigationNames[i]) return static_cast<Mitigation>(i);
  }
  throw InvalidInput("unknown mitigation '" + s + "'");
}

Mitigation mitigation_for(ErrorClass c) {
  switch (c) {
    case ErrorClass::Noise: return Mitigation::Reconstruct;
    case ErrorClass::BadInit: return Mitigation::BoIcp;
    case ErrorClass::Occlusion: return Mitigation::Nbv;
  }
  throw InvalidInput("mitigation_for: unknown class");
}

bo::SearchBounds PipelineConfig::default_bo_bounds() {
  // Objects rest upright on the table: roll, pitch and height stay near zero.
  bo::SearchBounds b;
  b.lo = {-0.5, -0.5, -0.05, -0.1, -0.1, -std::numbers::pi};
  b.hi = {0.5, 0.5, 0.05, 0.1, 0.1, std::numbers::pi};
  return b;
}

bo::BoConfig PipelineConfig::default_bo_config() {
  bo::BoConfig c;
  c.refine = IcpConfig{30, 0.01, 1e-6, 10};
  return c;
}

void PipelineConfig::validate() const {
  icp.validate();
  bo_scoring.validate();
  bo_bounds.validate();
  bo.validate();
  if (!(decision_threshold > 0.0 && decision_threshold < 1.0)) {
    throw InvalidInput("PipelineConfig: decision_threshold must lie in (0, 1)");
  }
  if (!(success_threshold > 0.0)) throw InvalidInput("PipelineConfig: success_threshold must be > 0");
  if (max_mitigation_rounds < 0) throw InvalidInput("PipelineConfig: max_mitigation_rounds must be >= 0");
  if (nbv_candidates.empty()) throw InvalidInput("PipelineConfig: empty NBV candidate set");
  for (const auto& v : nbv_candidates) v.validate();
  if (!models.failure || !models.attribution || !models.reconstruction) {
    throw InvalidInput("PipelineConfig: failure, attribution and reconstruction models are required");
  }
}

namespace {

Attempt attempt_from(const PointCloud& mesh, const PointCloud& cloud, const RigidTransform& gt,
                     IcpResult result) {
  Attempt a;
  const auto aligned = apply_transform(result.transform, mesh);
  const auto report = alignment_report(aligned, cloud);
  result.fitness = report.fitness_1cm;
  result.inlier_rmse = report.rmse_inlier;
  a.features = failure::extract_features(result, report);
  a.add = add_error(mesh, gt, result.transform);
  a.icp = std::move(result);
  return a;
}

Attempt icp_attempt(const sim::SceneSample& s, const PointCloud& cloud, const IcpConfig& cfg) {
  IcpResult r;
  std::string error;
  try {
    r = icp(s.mesh_cloud, cloud, s.hypothesis, cfg);
  } catch (const NoOverlap& e) {
    r.transform = e.last_estimate();
    error = e.what();
  }
  Attempt a = attempt_from(s.mesh_cloud, cloud, s.gt_pose, std::move(r));
  a.error = error;
  return a;
}

Attempt mitigate(const sim::SceneSample& s, const PointCloud& cloud, Mitigation m,
                 const PipelineConfig& cfg) {
  Attempt a;
  try {
    switch (m) {
      case Mitigation::Reconstruct: {
        const auto rec = recon::reconstruct(*cfg.models.reconstruction, cloud, s.mesh_cloud);
        a = icp_attempt(s, rec, cfg.icp);
        break;
      }
      case Mitigation::BoIcp: {
        auto bc = cfg.bo;
        bc.seed = mix_seed(cfg.bo.seed, s.seed);
        auto res = bo::bo_icp(s.mesh_cloud, cloud, cfg.bo_bounds, bc, cfg.bo_scoring);
        a = attempt_from(s.mesh_cloud, cloud, s.gt_pose, std::move(res.result));
        break;
      }
      case Mitigation::Nbv: {
        const auto geom = sim::scene_geometry(s);
        const auto choice = sim::next_best_view(geom, sim::kTargetTag, cfg.nbv_candidates,
                                                cfg.nbv_visibility_samples, cfg.render,
                                                mix_seed(s.seed, 20));
        a = icp_attempt(s, choice.cloud.cloud, cfg.icp);
        break;
      }
      case Mitigation::None: break;
    }
  } catch (const Error& e) {
    a = Attempt{};
    a.icp.transform = s.hypothesis;
    a.add = add_error(s.mesh_cloud, s.gt_pose, s.hypothesis);
    a.error = e.what();
    a.stage_failed = true;
    a.mitigation = m;
    return a;
  }
  a.mitigation = m;
  return a;
}

PipelineResult run_impl(const sim::SceneSample& s, const PipelineConfig& cfg, const Oracle* oracle) {
  cfg.validate();
  PipelineResult r;
  r.sample_label = sim::to_string(s.label);
  r.seed = s.seed;

  auto t0 = std::chrono::steady_clock::now();
  r.initial = initial_attempt(s, cfg.icp);
  r.timings.icp_ms = ms_since(t0);

  t0 = std::chrono::steady_clock::now();
  r.initial.prediction = failure::predict_success(*cfg.models.failure, r.initial.features, cfg.decision_threshold);
  r.timings.predict_ms = ms_since(t0);

  r.add_initial = r.initial.add;
  r.final_transform = r.initial.icp.transform;
  r.add_final = r.initial.add;
  bool done = r.initial.prediction.label;

  for (int round = 0; round < cfg.max_mitigation_rounds && !done; ++round) {
    t0 = std::chrono::steady_clock::now();
    std::optional<ErrorClass> cls;
    if (oracle) {
      cls = oracle->kind == Oracle::Kind::Always ? std::optional(oracle->forced) : true_class(s.label);
    } else {
      r.class_probabilities = attribution::classify(*cfg.models.attribution, s.observed);
      cls = attribution::argmax(r.class_probabilities);
    }
    r.timings.attribute_ms += ms_since(t0);
    if (!cls) break;
    if (round == 0) {
      r.attributed = cls;
      r.mitigation = mitigation_for(*cls);
    }

    t0 = std::chrono::steady_clock::now();
    Attempt a = mitigate(s, s.observed, mitigation_for(*cls), cfg);
    r.timings.mitigate_ms += ms_since(t0);
    t0 = std::chrono::steady_clock::now();
    if (!a.stage_failed) {
      a.prediction = failure::predict_success(*cfg.models.failure, a.features, cfg.decision_threshold);
    }
    r.timings.predict_ms += ms_since(t0);
    done = a.prediction.label;
    r.mitigations.push_back(std::move(a));
  }

  // Arbitration without ground truth: a predicted success wins, otherwise the
  // most probable attempt (earliest on ties).
  std::size_t pick = 0;
  if (!r.mitigations.empty()) {
    if (r.mitigations.back().prediction.label) {
      pick = r.mitigations.size();
    } else {
      double best = r.initial.prediction.probability;
      for (std::size_t k = 0; k < r.mitigations.size(); ++k) {
        if (r.mitigations[k].prediction.probability > best) {
          best = r.mitigations[k].prediction.probability;
          pick = k + 1;
        }
      }
    }
  }
  r.final_attempt = pick;
  const Attempt& fin = pick == 0 ? r.initial : r.mitigations[pick - 1];
  r.final_transform = fin.icp.transform;
  r.add_final = fin.add;
  r.success = r.add_final < cfg.success_threshold;
  return r;
}

nlohmann::json attempt_json(const Attempt& a) {
  nlohmann::json j;
  j["mitigation"] = to_string(a.mitigation);
  j["fitness"] = a.icp.fitness;
  j["inlier_rmse"] = a.icp.inlier_rmse;
  j["iterations"] = a.icp.iterations_used;
  j["converged"] = a.icp.converged;
  j["features"] = std::vector<double>(a.features.data(), a.features.data() + a.features.size());
  j["success_probability"] = a.prediction.probability;
  j["predicted_success"] = a.prediction.label;
  j["add"] = a.add;
  if (!a.error.empty()) j["error"] = a.error;
  if (a.stage_failed) j["stage_failed"] = true;
  return j;
}

nlohmann::json transform_json(const RigidTransform& T) {
  nlohmann::json rows = nlohmann::json::array();
  for (int r = 0; r < 3; ++r) {
    rows.push_back({T.rotation(r, 0), T.rotation(r, 1), T.rotation(r, 2), T.translation[r]});
  }
  return rows;
}

nlohmann::json timings_to_json(const StageTimings& t) {
  return {{"icp_ms", t.icp_ms}, {"predict_ms", t.predict_ms}, {"attribute_ms", t.attribute_ms},
          {"mitigate_ms", t.mitigate_ms}};
}

}  // namespace

Attempt initial_attempt(const sim::SceneSample& sample, const IcpConfig& icp_config) {
  return icp_attempt(sample, sample.observed, icp_config);
}

std::vector<Attempt> training_attempts(const sim::SceneSample& sample, const IcpConfig& icp_config,
                                       std::uint64_t seed) {
  std::vector<Attempt> out;
  out.push_back(initial_attempt(sample, icp_config));
  Rng rng(seed);
  Eigen::Vector3d dir(rng.normal(), rng.normal(), rng.normal());
  dir.normalize();
  const double r = 0.03 * std::cbrt(rng.uniform());
  const double yaw = rng.uniform(-0.25, 0.25);
  const RigidTransform start = compose(sample.gt_pose, from_euler(r * dir.x(), r * dir.y(), r * dir.z(), 0, 0, yaw));
  IcpResult res;
  std::string error;
  try {
    res = icp(sample.mesh_cloud, sample.observed, start, icp_config);
  } catch (const NoOverlap& e) {
    res.transform = e.last_estimate();
    error = e.what();
  }
  out.push_back(attempt_from(sample.mesh_cloud, sample.observed, sample.gt_pose, std::move(res)));
  out.back().error = error;
  return out;
}

PipelineResult run(const sim::SceneSample& sample, const PipelineConfig& config) {
  return run_impl(sample, config, nullptr);
}

PipelineResult oracle_run(const sim::SceneSample& sample, const PipelineConfig& config, const Oracle& oracle) {
  return run_impl(sample, config, &oracle);
}

nlohmann::json to_json(const PipelineResult& r, bool include_timings) {
  nlohmann::json j;
  j["sample_label"] = r.sample_label;
  j["seed"] = r.seed;
  j["initial"] = attempt_json(r.initial);
  j["attributed"] = r.attributed ? nlohmann::json(attribution::to_string(*r.attributed)) : nlohmann::json();
  if (r.attributed) j["class_probabilities"] = r.class_probabilities;
  j["mitigation"] = to_string(r.mitigation);
  j["mitigations"] = nlohmann::json::array();
  for (const auto& a : r.mitigations) j["mitigations"].push_back(attempt_json(a));
  j["final_attempt"] = r.final_attempt;
  j["final_transform"] = transform_json(r.final_transform);
  j["add_initial"] = r.add_initial;
  j["add_final"] = r.add_final;
  j["success"] = r.success;
  if (include_timings) j["timings"] = timings_to_json(r.timings);
  return j;
}

double CaseRow::icp_rate() const {
  return count == 0 ? 0.0 : static_cast<double>(icp_success) / static_cast<double>(count);
}

double CaseRow::pipeline_rate() const {
  return count == 0 ? 0.0 : static_cast<double>(pipeline_success) / static_cast<double>(count);
}

std::string BenchmarkReport::to_text() const {
  std::ostringstream os;
  os << std::left << std::setw(12) << "case" << std::setw(8) << "n" << std::setw(18) << "ICP success"
     << "ICP&Mitigation success\n";
  for (const auto& row : rows) {
    std::ostringstream a, b;
    a << row.icp_success << "/" << row.count << " (" << std::fixed << std::setprecision(1)
      << 100.0 * row.icp_rate() << "%)";
    b << row.pipeline_success << "/" << row.count << " (" << std::fixed << std::setprecision(1)
      << 100.0 * row.pipeline_rate() << "%)";
    os << std::setw(12) << sim::to_string(row.scene_case) << std::setw(8) << row.count << std::setw(18)
       << a.str() << b.str() << "\n";
  }
  os << "\nfailure predictor (initial estimates)\n" << failure_confusion.to_text();
  os << "\nattribution (rows actual, columns predicted)\n" << attribution_confusion.to_text();
  os << "\nfinal estimate: predicted-success attempt, else highest predicted probability\n";
  return os.str();
}

nlohmann::json BenchmarkReport::to_json() const {
  nlohmann::json j;
  j["cases"] = nlohmann::json::array();
  for (const auto& row : rows) {
    j["cases"].push_back({{"case", sim::to_string(row.scene_case)},
                          {"count", row.count},
                          {"icp_success", row.icp_success},
                          {"pipeline_success", row.pipeline_success},
                          {"icp_rate", row.icp_rate()},
                          {"pipeline_rate", row.pipeline_rate()},
                          {"attribution_runs", row.attribution_runs},
                          {"attribution_correct", row.attribution_correct}});
  }
  const auto& f = failure_confusion;
  j["failure_confusion"] = {{"tp", f.tp}, {"fp", f.fp}, {"fn", f.fn}, {"tn", f.tn}, {"accuracy", f.accuracy()}};
  j["attribution_confusion"] = attribution_confusion.counts;
  j["attribution_accuracy"] = attribution_confusion.accuracy();
  j["arbitration"] = "highest_predicted_probability";
  j["results"] = nlohmann::json::array();
  for (const auto& r : results) j["results"].push_back(pipeline::to_json(r, false));
  return j;
}

nlohmann::json BenchmarkReport::timings_json() const {
  nlohmann::json j;
  j["mean"] = timings_to_json(mean_timings);
  j["per_sample"] = nlohmann::json::array();
  for (const auto& r : results) j["per_sample"].push_back(timings_to_json(r.timings));
  return j;
}

BenchmarkReport benchmark(const std::vector<sim::SceneSample>& dataset, const PipelineConfig& config,
                          std::size_t jobs, const std::optional<Oracle>& oracle) {
  config.validate();
  BenchmarkReport rep;
  rep.results.resize(dataset.size());
  const std::size_t n_threads = std::max<std::size_t>(1, std::min(jobs, dataset.size()));
  auto work = [&](std::size_t begin) {
    for (std::size_t i = begin; i < dataset.size(); i += n_threads) {
      rep.results[i] = oracle ? oracle_run(dataset[i], config, *oracle) : run(dataset[i], config);
    }
  };
  if (n_threads == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(n_threads);
    for (std::size_t t = 0; t < n_threads; ++t) {
      pool.emplace_back([&, t] {
        try {
          work(t);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  std::array<CaseRow, 4> rows{};
  std::vector<bool> predicted, actual;
  std::vector<ErrorClass> attr_pred, attr_actual;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const auto& s = dataset[i];
    const auto& r = rep.results[i];
    auto& row = rows[static_cast<std::size_t>(s.label)];
    row.scene_case = s.label;
    ++row.count;
    row.icp_success += r.add_initial < config.success_threshold ? 1 : 0;
    row.pipeline_success += r.success ? 1 : 0;
    predicted.push_back(r.initial.prediction.label);
    actual.push_back(r.add_initial < config.success_threshold);
    const auto truth = true_class(s.label);
    if (r.attributed && truth && !oracle) {
      ++row.attribution_runs;
      row.attribution_correct += *r.attributed == *truth ? 1 : 0;
      attr_pred.push_back(*r.attributed);
      attr_actual.push_back(*truth);
    }
    rep.mean_timings.icp_ms += r.timings.icp_ms;
    rep.mean_timings.predict_ms += r.timings.predict_ms;
    rep.mean_timings.attribute_ms += r.timings.attribute_ms;
    rep.mean_timings.mitigate_ms += r.timings.mitigate_ms;
  }
  for (std::size_t c = 0; c < rows.size(); ++c) {
    if (rows[c].count > 0) rep.rows.push_back(rows[c]);
  }
  rep.failure_confusion = failure::confusion(predicted, actual);
  rep.attribution_confusion = attribution::confusion(attr_pred, attr_actual);
  if (!dataset.empty()) {
    const double n = static_cast<double>(dataset.size());
    rep.mean_timings.icp_ms /= n;
    rep.mean_timings.predict_ms /= n;
    rep.mean_timings.attribute_ms /= n;
    rep.mean_timings.mitigate_ms /= n;
  }
  return rep;
}

}  // namespace icpguard::pipeline

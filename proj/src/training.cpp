#include "icpguard/training.hpp"

#include <algorithm>
#include <exception>
#include <fstream>
#include <memory>
#include <thread>

#include "icpguard/errors.hpp"
#include "icpguard/io.hpp"
#include "icpguard/rng.hpp"

namespace icpguard::training {

failure::FailureDataset failure_set(const std::vector<sim::SceneSample>& scenes, const IcpConfig& icp,
                                    double success_threshold, std::uint64_t seed, std::size_t jobs) {
  std::vector<std::vector<pipeline::Attempt>> per_scene(scenes.size());
  const std::size_t n_threads = std::max<std::size_t>(1, std::min(jobs, scenes.size()));
  auto work = [&](std::size_t begin) {
    for (std::size_t i = begin; i < scenes.size(); i += n_threads) {
      per_scene[i] = pipeline::training_attempts(scenes[i], icp, mix_seed(seed, scenes[i].seed));
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
  failure::FailureDataset data;
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    for (const auto& a : per_scene[i]) {
      data.features.push_back(a.features);
      data.labels.push_back(failure::label_by_add(a.add, success_threshold));
      data.sources.push_back(0);
    }
  }
  return data;
}

attribution::ErrorClass error_class_of(sim::SceneCase c) {
  switch (c) {
    case sim::SceneCase::Noise:
      return attribution::ErrorClass::Noise;
    case sim::SceneCase::BadInit:
      return attribution::ErrorClass::BadInit;
    case sim::SceneCase::Occlusion:
      return attribution::ErrorClass::Occlusion;
    case sim::SceneCase::Clean:
      break;
  }
  throw InvalidInput("clean scenes have no error class");
}

attribution::AttributionDataset attribution_set(const std::vector<sim::SceneSample>& scenes) {
  attribution::AttributionDataset data;
  for (const auto& s : scenes) {
    if (s.label == sim::SceneCase::Clean) continue;
    data.clouds.push_back(s.observed);
    data.labels.push_back(error_class_of(s.label));
    data.sources.push_back(0);
  }
  return data;
}

std::vector<recon::ReconSample> reconstruction_set(const std::vector<sim::SceneSample>& scenes) {
  std::vector<recon::ReconSample> out;
  for (const auto& s : scenes) {
    if (s.label == sim::SceneCase::Noise) out.push_back({s.observed, s.clean, s.mesh_cloud});
  }
  return out;
}

nnet::Network failure_from_weight_file(const nnet::WeightFile& file) {
  if (file.model_kind != "failure") {
    throw FormatError("expected a failure weight file, got '" + file.model_kind + "'");
  }
  nnet::Network net = file.get("predictor");
  if (net.input_dim() != static_cast<std::size_t>(failure::kFeatureDim) || net.output_dim() != 1) {
    throw FormatError("failure predictor must map 17 features to 1 output");
  }
  return net;
}

namespace {

template <typename F>
auto load_named(const std::filesystem::path& path, F&& convert) {
  if (!std::filesystem::exists(path)) throw InvalidInput("model file not found: " + path.string());
  const auto file = nnet::load_weight_file(path);
  try {
    return convert(file);
  } catch (const Error& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace

pipeline::Models load_models(const std::filesystem::path& dir) {
  pipeline::Models m;
  m.failure = std::make_shared<nnet::Network>(load_named(dir / kFailureFile, failure_from_weight_file));
  m.attribution = std::make_shared<attribution::AttributionModel>(
      load_named(dir / kAttributionFile, [](const nnet::WeightFile& f) { return attribution::from_weight_file(f); }));
  m.reconstruction = std::make_shared<recon::ReconstructionModel>(
      load_named(dir / kReconstructionFile, [](const nnet::WeightFile& f) { return recon::from_weight_file(f); }));
  return m;
}

void write_loss_csv(const std::filesystem::path& path, const std::vector<double>& loss_curve) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidInput("cannot write " + path.string());
  out << "epoch,loss\n";
  for (std::size_t e = 0; e < loss_curve.size(); ++e) out << e << "," << format_double(loss_curve[e]) << "\n";
}

}  // namespace icpguard::training

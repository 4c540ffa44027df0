#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "icpguard/attribution.hpp"
#include "icpguard/config.hpp"
#include "icpguard/dataset.hpp"
#include "icpguard/errors.hpp"
#include "icpguard/failure.hpp"
#include "icpguard/pipeline.hpp"
#include "icpguard/reconstruct.hpp"
#include "icpguard/training.hpp"

namespace fs = std::filesystem;
using namespace icpguard;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitRuntime = 3;

struct Common {
  std::string config_path;
  std::optional<std::size_t> jobs;
};

config::RunConfig load_config(const Common& c) {
  config::RunConfig cfg = c.config_path.empty() ? config::RunConfig{} : config::load(c.config_path);
  if (c.jobs) cfg.jobs = *c.jobs;
  cfg.validate();
  return cfg;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidInput("cannot write " + path.string());
  out << text;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw InvalidInput("cannot create directory " + dir.string());
}

std::vector<sim::SceneCase> parse_cases(const std::string& list) {
  std::vector<sim::SceneCase> out;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(sim::scene_case_from_string(item));
  }
  if (out.empty()) throw InvalidInput("--cases: no case names given");
  return out;
}

std::optional<pipeline::Oracle> parse_oracle(const std::string& s) {
  if (s.empty()) return std::nullopt;
  pipeline::Oracle o;
  if (s == "true_class") return o;
  const std::string prefix = "always_";
  if (s.rfind(prefix, 0) != 0) throw InvalidInput("--oracle must be true_class or always_<mitigation>");
  o.kind = pipeline::Oracle::Kind::Always;
  switch (pipeline::mitigation_from_string(s.substr(prefix.size()))) {
    case pipeline::Mitigation::Reconstruct:
      o.forced = attribution::ErrorClass::Noise;
      break;
    case pipeline::Mitigation::BoIcp:
      o.forced = attribution::ErrorClass::BadInit;
      break;
    case pipeline::Mitigation::Nbv:
      o.forced = attribution::ErrorClass::Occlusion;
      break;
    case pipeline::Mitigation::None:
      throw InvalidInput("--oracle always_none is not a mitigation");
  }
  return o;
}

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "Run configuration (JSON); defaults apply when omitted")
      ->check(CLI::ExistingFile);
  cmd->add_option("--jobs", c.jobs, "Worker threads (default from config, which defaults to 1)")
      ->check(CLI::PositiveNumber);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"icpguard: ICP failure prediction, attribution and mitigation"};
  app.require_subcommand(1);

  // gen
  Common gen_common;
  std::string gen_cases, gen_out;
  std::optional<std::size_t> gen_per_case;
  std::optional<std::uint64_t> gen_seed;
  auto* gen = app.add_subcommand("gen", "Generate a synthetic scene dataset");
  add_common(gen, gen_common);
  gen->add_option("--cases", gen_cases, "Comma-separated cases: clean,noise,badinit,occlusion");
  gen->add_option("--per-case", gen_per_case, "Scenes per case");
  gen->add_option("--seed", gen_seed, "Generation seed (default seeds.generate)");
  gen->add_option("--out", gen_out, "Output dataset directory (default paths.dataset)");

  // train-*
  struct TrainArgs {
    Common common;
    std::string data, out;
    std::optional<std::uint64_t> seed;
  };
  TrainArgs tf, ta, tr;
  auto add_train = [&](const char* name, const char* help, TrainArgs& a) {
    auto* cmd = app.add_subcommand(name, help);
    add_common(cmd, a.common);
    cmd->add_option("--data", a.data, "Dataset directory (default paths.dataset)");
    cmd->add_option("--out", a.out, "Model directory (default paths.models)");
    cmd->add_option("--seed", a.seed, "Training seed (default seeds.train)");
    return cmd;
  };
  auto* train_failure = add_train("train-failure", "Train the failure predictor", tf);
  auto* train_attrib = add_train("train-attrib", "Train the error-attribution classifier", ta);
  auto* train_recon = add_train("train-recon", "Train the point-cloud reconstruction model", tr);

  // bench
  Common bench_common;
  std::string bench_data, bench_models, bench_out, bench_oracle;
  auto* bench = app.add_subcommand("bench", "Run the per-case benchmark and write reports");
  add_common(bench, bench_common);
  bench->add_option("--data", bench_data, "Dataset directory (default paths.dataset)");
  bench->add_option("--models", bench_models, "Model directory (default paths.models)");
  bench->add_option("--out", bench_out, "Report directory (default paths.reports)");
  bench->add_option("--oracle", bench_oracle, "Replace attribution: true_class or always_<bo_icp|reconstruct|nbv>");

  // run
  Common run_common;
  std::string run_sample, run_models;
  bool run_timings = false;
  auto* run = app.add_subcommand("run", "Run the pipeline on one sample and print the result as JSON");
  add_common(run, run_common);
  run->add_option("--sample", run_sample, "sample.json inside a dataset sample folder")->required();
  run->add_option("--models", run_models, "Model directory (default paths.models)");
  run->add_flag("--timings", run_timings, "Include per-stage timings in the output");

  // audit
  Common audit_common;
  std::string audit_data;
  std::size_t audit_per_case = 0;
  auto* aud = app.add_subcommand("audit", "Recount a dataset manifest and check BadInit offsets");
  add_common(aud, audit_common);
  aud->add_option("--data", audit_data, "Dataset directory (default paths.dataset)");
  aud->add_option("--per-case", audit_per_case, "Expected scenes per case (0 skips the check)");

  // config
  std::string config_out;
  auto* cfg_cmd = app.add_subcommand("config", "Write the default run configuration");
  cfg_cmd->add_option("--out", config_out, "Output path (stdout when omitted)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInput;
  }

  try {
    if (*gen) {
      auto cfg = load_config(gen_common);
      dataset::GenerateRequest req;
      req.cases = gen_cases.empty() ? cfg.generate.cases : parse_cases(gen_cases);
      req.per_case = gen_per_case.value_or(cfg.generate.per_case);
      req.objects = cfg.generate.objects;
      req.seed = gen_seed.value_or(cfg.seeds.generate);
      req.scene = cfg.generate.scene;
      const fs::path out = gen_out.empty() ? fs::path(cfg.paths.dataset) : fs::path(gen_out);
      ensure_dir(out);
      const auto entries = dataset::generate(req, cfg.jobs);
      dataset::write_dataset(out, entries);
      std::cout << "wrote " << entries.size() << " samples to " << out.string() << "\n";
      return kExitOk;
    }

    for (auto* cmd : {train_failure, train_attrib, train_recon}) {
      if (!*cmd) continue;
      TrainArgs& a = cmd == train_failure ? tf : cmd == train_attrib ? ta : tr;
      auto cfg = load_config(a.common);
      const std::uint64_t seed = a.seed.value_or(cfg.seeds.train);
      const fs::path data_dir = a.data.empty() ? fs::path(cfg.paths.dataset) : fs::path(a.data);
      const fs::path out = a.out.empty() ? fs::path(cfg.paths.models) : fs::path(a.out);
      const auto scenes = dataset::samples(dataset::read_dataset(data_dir));
      ensure_dir(out);
      std::vector<double> curve;
      std::string stem;
      if (cmd == train_failure) {
        stem = "failure";
        const auto data = training::failure_set(scenes, cfg.pipeline.icp, cfg.pipeline.success_threshold, seed,
                                                cfg.jobs);
        auto fc = cfg.failure;
        fc.train.seed = seed;
        const auto res = failure::train_failure_model(data, fc);
        nnet::save_weight_file(out / training::kFailureFile,
                               failure::to_weight_file(res.model, cfg.pipeline.decision_threshold));
        curve = res.report.loss_curve;
        std::cout << "training accuracy " << failure::evaluate(res.model, data, cfg.pipeline.decision_threshold).accuracy()
                  << " on " << data.size() << " alignments\n";
      } else if (cmd == train_attrib) {
        stem = "attribution";
        const auto data = training::attribution_set(scenes);
        auto ac = cfg.attribution;
        ac.train.seed = seed;
        const auto res = attribution::train_attribution(data, ac);
        nnet::save_weight_file(out / training::kAttributionFile, attribution::to_weight_file(res.model));
        curve = res.report.loss_curve;
        std::cout << "training accuracy " << attribution::evaluate(res.model, data).accuracy() << " on "
                  << data.size() << " scenes\n";
      } else {
        stem = "reconstruction";
        const auto data = training::reconstruction_set(scenes);
        if (data.empty()) throw InvalidDataset("train-recon: the dataset has no noise scenes");
        auto rc = cfg.reconstruction;
        rc.train.seed = seed;
        const auto res = recon::train_reconstruction(data, rc);
        nnet::save_weight_file(out / training::kReconstructionFile, recon::to_weight_file(res.model));
        curve = res.report.loss_curve;
      }
      training::write_loss_csv(out / (stem + "_loss.csv"), curve);
      std::cout << "wrote " << (out / (stem + ".json")).string() << " (" << curve.size() << " epochs, final loss "
                << (curve.empty() ? 0.0 : curve.back()) << ")\n";
      return kExitOk;
    }

    if (*bench) {
      auto cfg = load_config(bench_common);
      const fs::path data_dir = bench_data.empty() ? fs::path(cfg.paths.dataset) : fs::path(bench_data);
      const fs::path models = bench_models.empty() ? fs::path(cfg.paths.models) : fs::path(bench_models);
      const fs::path out = bench_out.empty() ? fs::path(cfg.paths.reports) : fs::path(bench_out);
      const auto oracle = parse_oracle(bench_oracle);
      const auto scenes = dataset::samples(dataset::read_dataset(data_dir));
      auto pc = cfg.pipeline_config();
      pc.models = training::load_models(models);
      const auto rep = pipeline::benchmark(scenes, pc, cfg.jobs, oracle);
      ensure_dir(out);
      const std::string text = rep.to_text();
      write_file(out / "report.txt", text);
      write_file(out / "report.json", rep.to_json().dump(2) + "\n");
      write_file(out / "timings.json", rep.timings_json().dump(2) + "\n");
      std::cout << text;
      return kExitOk;
    }

    if (*run) {
      auto cfg = load_config(run_common);
      const fs::path models = run_models.empty() ? fs::path(cfg.paths.models) : fs::path(run_models);
      const auto sample = dataset::read_sample(run_sample);
      auto pc = cfg.pipeline_config();
      pc.models = training::load_models(models);
      const auto res = pipeline::run(sample, pc);
      std::cout << pipeline::to_json(res, run_timings).dump(2) << "\n";
      return kExitOk;
    }

    if (*aud) {
      auto cfg = load_config(audit_common);
      const fs::path data_dir = audit_data.empty() ? fs::path(cfg.paths.dataset) : fs::path(audit_data);
      const auto entries = dataset::read_dataset(data_dir);
      const auto rep = dataset::audit(entries, cfg.generate.scene, audit_per_case);
      std::cout << rep.to_text();
      return rep.ok() ? kExitOk : kExitRuntime;
    }

    if (*cfg_cmd) {
      const std::string text = config::to_json(config::RunConfig{}).dump(2) + "\n";
      if (config_out.empty()) {
        std::cout << text;
      } else {
        write_file(config_out, text);
      }
      return kExitOk;
    }
  } catch (const InvalidInput& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const InvalidDataset& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const TrainingDiverged& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}

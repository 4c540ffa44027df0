// Acceptance runner: one PASS/FAIL line per criterion, nonzero exit on any failure.
#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "icpguard/attribution.hpp"
#include "icpguard/dataset.hpp"
#include "icpguard/errors.hpp"
#include "icpguard/failure.hpp"
#include "icpguard/kdtree.hpp"
#include "icpguard/metrics.hpp"
#include "icpguard/pipeline.hpp"
#include "icpguard/reconstruct.hpp"
#include "icpguard/registration.hpp"
#include "icpguard/rng.hpp"
#include "icpguard/training.hpp"

using namespace icpguard;
namespace fs = std::filesystem;
using clk = std::chrono::steady_clock;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

double seconds_since(clk::time_point t) { return std::chrono::duration<double>(clk::now() - t).count(); }

int failures = 0;

void verdict(int id, bool pass, const std::string& detail) {
  std::printf("%s criterion %d: %s\n", pass ? "PASS" : "FAIL", id, detail.c_str());
  std::fflush(stdout);
  if (!pass) ++failures;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::vector<sim::SceneSample> scenes(std::vector<sim::SceneCase> cases, std::size_t per_case, std::uint64_t seed) {
  dataset::GenerateRequest req;
  req.cases = std::move(cases);
  req.per_case = per_case;
  req.seed = seed;
  return dataset::samples(dataset::generate(req));
}

std::vector<sim::SceneSample> only(const std::vector<sim::SceneSample>& all, sim::SceneCase c) {
  std::vector<sim::SceneSample> out;
  for (const auto& s : all) {
    if (s.label == c) out.push_back(s);
  }
  return out;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

PointCloud random_cloud(std::size_t n, std::uint64_t seed, double extent = 1.0) {
  Rng rng(seed);
  PointCloud c;
  for (std::size_t i = 0; i < n; ++i) {
    c.points.emplace_back(rng.uniform(-extent, extent), rng.uniform(-extent, extent), rng.uniform(-extent, extent));
  }
  return c;
}

RigidTransform random_transform(Rng& rng, double max_shift = 0.5) {
  const double pi = 3.141592653589793;
  return from_euler(rng.uniform(-max_shift, max_shift), rng.uniform(-max_shift, max_shift),
                    rng.uniform(-max_shift, max_shift), rng.uniform(-pi, pi), rng.uniform(-pi / 2, pi / 2),
                    rng.uniform(-pi, pi));
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max({1e-6, std::abs(a), std::abs(b)}); }

// ---- criterion 1 ------------------------------------------------------------

void exact_recovery() {
  const auto objects = sim::object_names();
  std::vector<PointCloud> meshes;
  for (std::size_t i = 0; i < objects.size(); ++i) {
    meshes.push_back(sample_mesh(sim::object_mesh(objects[i]), 500, 7 + i));
  }
  Rng rng(2024);
  std::vector<std::pair<std::size_t, RigidTransform>> poses;
  for (int i = 0; i < 100; ++i) poses.emplace_back(static_cast<std::size_t>(i) % meshes.size(), random_transform(rng));

  const IcpConfig cfg{100, 0.05, 1e-12, 10};
  const auto t0 = clk::now();
  double worst_kabsch = 0.0, worst_icp = 0.0;
  for (std::size_t i = 0; i < poses.size(); ++i) {
    const auto& PM = meshes[poses[i].first];
    const auto& gt = poses[i].second;
    const auto P = apply_transform(gt, PM);
    worst_kabsch = std::max(worst_kabsch, add_error(PM, gt, kabsch(PM.span(), P.span())));
    Rng prng(i);
    const auto init = compose(gt, from_euler(prng.uniform(-0.01, 0.01), prng.uniform(-0.01, 0.01),
                                             prng.uniform(-0.01, 0.01), 0, 0, prng.uniform(-0.05, 0.05)));
    worst_icp = std::max(worst_icp, add_error(PM, gt, icp(PM, P, init, cfg).transform));
  }
  const double secs = seconds_since(t0);
  verdict(1, worst_kabsch < 1e-6 && worst_icp < 1e-6 && secs < 1.0,
          fmt("100 scenes, max ADD kabsch %.2e, icp %.2e (< 1e-6); %.3f s (< 1 s)", worst_kabsch, worst_icp, secs));
}

// ---- criterion 7 ------------------------------------------------------------

struct GradCheck {
  std::size_t checked = 0;
  double worst = 0.0;
};

template <typename Loss>
void fd_check(nnet::Network& net, const nnet::Gradients& g, Loss loss, GradCheck& out) {
  constexpr double h = 1e-6;
  auto one = [&](double& p, double analytic) {
    const double p0 = p;
    p = p0 + h;
    const double up = loss();
    p = p0 - h;
    const double down = loss();
    p = p0;
    out.worst = std::max(out.worst, rel_err((up - down) / (2 * h), analytic));
    ++out.checked;
  };
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    auto& layer = net.layers[l];
    for (Eigen::Index i = 0; i < layer.weight.size(); ++i) one(layer.weight.data()[i], g.weight[l].data()[i]);
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) one(layer.bias[i], g.bias[l][i]);
  }
}

void randomize_biases(nnet::Network& net, Rng& rng, double scale) {
  for (auto& layer : net.layers) {
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) layer.bias[i] = rng.uniform(-scale, scale);
  }
}

GradCheck gradient_suite() {
  GradCheck gc;
  Rng rng(77);
  // Failure predictor shape with its binary cross-entropy loss.
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    auto net = nnet::Network::create({17, 12, 1}, {nnet::Activation::ReLU, nnet::Activation::Sigmoid}, seed);
    randomize_biases(net, rng, 0.3);
    MatrixXd X = MatrixXd::NullaryExpr(17, 6, [&] { return rng.uniform(-1, 1); });
    MatrixXd Y(1, 6);
    for (Eigen::Index c = 0; c < 6; ++c) Y(0, c) = static_cast<double>(rng.index(2));
    nnet::ForwardCache cache;
    const MatrixXd P = nnet::forward_batch(net, X, cache);
    auto g = nnet::Gradients::zeros_like(net);
    nnet::backward_from_logits(net, cache, (P - Y) / 6.0, g);
    fd_check(net, g, [&] { return nnet::binary_cross_entropy(nnet::forward_batch(net, X), Y); }, gc);
  }
  // Every activation through the generic reverse pass.
  for (const auto act : {nnet::Activation::Identity, nnet::Activation::ReLU, nnet::Activation::Sigmoid,
                         nnet::Activation::Softmax}) {
    auto net = nnet::Network::create({5, 7, 4}, {nnet::Activation::Sigmoid, act}, 3);
    randomize_biases(net, rng, 0.3);
    VectorXd x = VectorXd::NullaryExpr(5, [&] { return rng.uniform(-1, 1); });
    VectorXd u = VectorXd::NullaryExpr(4, [&] { return rng.uniform(-1, 1); });
    const auto g = nnet::backward(net, x, u);
    fd_check(net, g, [&] { return u.dot(nnet::forward(net, x)); }, gc);
  }
  // Attribution encoder, max pooling and head with cross-entropy.
  for (std::uint64_t seed = 0; seed < 2; ++seed) {
    attribution::AttributionModel m;
    m.encoder = nnet::Network::create({3, 12, 16}, {nnet::Activation::ReLU, nnet::Activation::ReLU}, seed);
    m.head = nnet::Network::create({16, 8, 3}, {nnet::Activation::ReLU, nnet::Activation::Softmax}, seed + 1);
    m.n_points = 50;
    randomize_biases(m.encoder, rng, 0.2);
    randomize_biases(m.head, rng, 0.2);
    const auto pts = attribution::normalize_cloud(random_cloud(50, seed), 50, seed);
    const auto label = static_cast<attribution::ErrorClass>(seed % 3);
    const auto g = attribution::sample_gradient(m, pts, label);
    auto loss = [&] { return attribution::sample_gradient(m, pts, label).loss; };
    fd_check(m.encoder, g.grads[0], loss, gc);
    fd_check(m.head, g.grads[1], loss, gc);
  }
  // Reconstruction: every network through the full reverse pass.
  {
    recon::ReconHyper h;
    h.n_centers = 8;
    h.n_proxies = 6;
    h.patch_size = 8;
    h.n_interp = 3;
    h.feature_dim = 5;
    h.edge_k = 4;
    h.hidden = 7;
    auto m = recon::ReconstructionModel::create(h, 31);
    for (nnet::Network* net : recon::networks_of(m)) randomize_biases(*net, rng, 0.1);
    m.head.layers.back().weight *= 50.0;
    recon::ReconSample s;
    const auto mesh = sim::make_box(0.12, 0.08, 0.05);
    s.mesh = sample_mesh(mesh, 200, 1);
    s.clean = apply_transform(from_euler(0.01, 0, 0, 0, 0, 0.2), sample_mesh(mesh, 60, 2));
    s.corrupted = sim::apply_patches(s.clean, {{5, 0.035, Eigen::Vector3d(0, 0, 0.02)}});
    const auto g = recon::sample_gradient(m, s);
    const auto nets = recon::networks_of(m);
    auto loss = [&] { return recon::sample_gradient(m, s).loss; };
    for (std::size_t k = 0; k < nets.size(); ++k) fd_check(*nets[k], g.grads[k], loss, gc);
  }
  return gc;
}

std::vector<std::size_t> knn_oracle(const PointCloud& c, const Point3& q, std::size_t k) {
  std::vector<std::size_t> idx(c.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(),
                   [&](std::size_t a, std::size_t b) { return (c[a] - q).squaredNorm() < (c[b] - q).squaredNorm(); });
  idx.resize(k);
  return idx;
}

std::vector<std::size_t> fps_oracle(const PointCloud& c, std::size_t k) {
  std::vector<std::size_t> sel = {0};
  while (sel.size() < k) {
    double best = -1.0;
    std::size_t arg = 0;
    for (std::size_t i = 0; i < c.size(); ++i) {
      double d = std::numeric_limits<double>::infinity();
      for (std::size_t s : sel) d = std::min(d, (c[i] - c[s]).squaredNorm());
      if (d > best) {
        best = d;
        arg = i;
      }
    }
    sel.push_back(arg);
  }
  return sel;
}

double directed_oracle(const PointCloud& a, const PointCloud& b) {
  double sum = 0.0;
  for (const auto& p : a.points) {
    double d = std::numeric_limits<double>::infinity();
    for (const auto& q : b.points) d = std::min(d, (p - q).norm());
    sum += d;
  }
  return sum / static_cast<double>(a.size());
}

std::string oracle_suite(bool& ok) {
  std::ostringstream notes;
  // Fusion weighted sum against a double loop.
  double fuse_err = 0.0;
  {
    recon::ReconHyper h;
    h.n_centers = 8;
    h.n_proxies = 6;
    h.patch_size = 8;
    h.feature_dim = 5;
    h.hidden = 7;
    Rng rng(5);
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      auto m = recon::ReconstructionModel::create(h, seed);
      for (nnet::Network* net : recon::networks_of(m)) randomize_biases(*net, rng, 0.1);
      recon::TokenSet V;
      V.tokens = MatrixXd::NullaryExpr(5, 8, [&] { return rng.uniform(-1, 1); });
      recon::ProxySet O;
      O.features = MatrixXd::NullaryExpr(5, 6, [&] { return rng.uniform(-1, 1); });
      const auto f = recon::fuse(m, V, O, false);
      for (Eigen::Index i = 0; i < 8; ++i) {
        VectorXd sum = VectorXd::Zero(5);
        for (Eigen::Index j = 0; j < 6; ++j) {
          VectorXd x(10);
          x << V.tokens.col(i), O.features.col(j);
          const double w = nnet::forward(m.fusion_scorer, x)[0];
          fuse_err = std::max(fuse_err, std::abs(f.weights(i, j) - w));
          sum += w * O.features.col(j);
        }
        VectorXd xc(10);
        xc << V.tokens.col(i), sum;
        fuse_err = std::max(fuse_err, (f.tokens.col(i) - nnet::forward(m.fusion_combiner, xc)).cwiseAbs().maxCoeff());
      }
    }
  }
  // Inverse-distance propagation against a sorted brute force.
  double prop_err = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto P = random_cloud(100, 20 + seed, 0.1);
    const auto C = random_cloud(12, 40 + seed, 0.1);
    Rng rng(seed);
    recon::DisplacementField field;
    for (int i = 0; i < 12; ++i) {
      field.vectors.emplace_back(rng.uniform(-0.01, 0.01), rng.uniform(-0.01, 0.01), rng.uniform(-0.01, 0.01));
    }
    const std::size_t K = 1 + seed % 4;
    const auto out = recon::propagate(P, C, field, K);
    for (std::size_t n = 0; n < P.size(); ++n) {
      const auto near = knn_oracle(C, P[n], K);
      Eigen::Vector3d num = Eigen::Vector3d::Zero();
      double den = 0.0;
      for (std::size_t c : near) {
        const double w = 1.0 / (P[n] - C[c]).norm();
        num += w * field.vectors[c];
        den += w;
      }
      prop_err = std::max(prop_err, (out[n] - P[n] - num / den).cwiseAbs().maxCoeff());
    }
  }
  double dir_err = 0.0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto x = random_cloud(150, s), y = random_cloud(120, s + 77);
    dir_err = std::max(dir_err, std::abs(directed_distance(x, y) - directed_oracle(x, y)));
  }
  std::size_t knn_mismatch = 0, fps_mismatch = 0;
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto c = random_cloud(800, 300 + s);
    const KdTree tree(c);
    Rng rng(s);
    for (int q = 0; q < 20; ++q) {
      const Point3 query(rng.uniform(-1.2, 1.2), rng.uniform(-1.2, 1.2), rng.uniform(-1.2, 1.2));
      const auto want = knn_oracle(c, query, 8);
      const auto nn = tree.knn(query, 8);
      for (std::size_t i = 0; i < 8; ++i) knn_mismatch += nn[i].index != want[i];
      knn_mismatch += k_nearest(c, query, 8) != want;
    }
    const auto small = random_cloud(200, 500 + s);
    fps_mismatch += farthest_point_sample(small, 20, 0) != fps_oracle(small, 20);
  }
  ok = fuse_err <= 1e-12 && prop_err <= 1e-12 && dir_err <= 1e-12 && knn_mismatch == 0 && fps_mismatch == 0;
  notes << fmt("fusion %.1e, propagation %.1e, directed %.1e, kNN mismatches %zu, FPS mismatches %zu", fuse_err,
               prop_err, dir_err, knn_mismatch, fps_mismatch);
  return notes.str();
}

std::string invariant_suite(bool& ok) {
  std::size_t fit_bad = 0, chamfer_bad = 0, add_bad = 0;
  Rng rng(8);
  for (std::uint64_t s = 0; s < 100; ++s) {
    const auto a = random_cloud(60, s, 0.1), b = random_cloud(60, s + 1000, 0.1);
    double prev = 0.0;
    for (double tau : {0.005, 0.01, 0.02, 0.04, 0.08}) {
      const double f = fitness(a, b, tau);
      fit_bad += f < prev;
      prev = f;
    }
    const auto x = random_cloud(40, s + 2000), y = random_cloud(25, s + 3000);
    chamfer_bad += std::abs(chamfer(x, y) - chamfer(y, x)) > 1e-15;
    const auto c = random_cloud(30, s + 4000, 0.2);
    const auto gt = random_transform(rng, 1.0), est = random_transform(rng, 1.0), G = random_transform(rng, 1.0);
    add_bad += std::abs(add_error(c, compose(G, gt), compose(G, est)) - add_error(c, gt, est)) > 1e-12;
  }
  ok = fit_bad == 0 && chamfer_bad == 0 && add_bad == 0;
  return fmt("violations over 100 instances: fitness-in-tau %zu, chamfer symmetry %zu, ADD left composition %zu",
             fit_bad, chamfer_bad, add_bad);
}

// ---- criterion 8 ------------------------------------------------------------

int run_cli(const std::string& cli, const std::string& args, const fs::path& log) {
  const std::string cmd = cli + " " + args + " >" + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

// Every file under dir except timing outputs, keyed by relative path.
std::vector<std::pair<std::string, std::string>> tree_bytes(const fs::path& dir) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (!e.is_regular_file() || e.path().filename() == "timings.json") continue;
    out.emplace_back(fs::relative(e.path(), dir).string(), slurp(e.path()));
  }
  std::sort(out.begin(), out.end());
  return out;
}

void determinism(const std::string& cli, const fs::path& work) {
  fs::remove_all(work);
  fs::create_directories(work);
  const auto log = work / "log.txt";
  if (run_cli(cli, "config --out " + (work / "default.json").string(), log) != 0) {
    verdict(8, false, "config command failed");
    return;
  }
  auto j = nlohmann::json::parse(slurp(work / "default.json"));
  j["failure"]["train"]["epochs"] = 40;
  j["attribution"]["train"]["epochs"] = 3;
  j["attribution"]["n_points"] = 256;
  j["reconstruction"]["train"]["epochs"] = 2;
  j["pipeline"]["bo"]["n_initial_random"] = 5;
  j["pipeline"]["bo"]["n_iterations"] = 10;
  std::ofstream(work / "config.json") << j.dump(2);
  const std::string cfg = "--config " + (work / "config.json").string();

  bool ran = true;
  for (const std::string run : {"a", "b"}) {
    const auto root = work / run;
    const auto data = (root / "data").string(), models = (root / "models").string(),
               reports = (root / "reports").string();
    const std::string jobs = run == "a" ? " --jobs 1" : " --jobs 2";
    ran = ran && run_cli(cli, "gen " + cfg + jobs + " --per-case 4 --seed 3 --out " + data, log) == 0;
    for (const char* t : {"train-failure", "train-attrib", "train-recon"}) {
      ran = ran && run_cli(cli, std::string(t) + " " + cfg + jobs + " --data " + data + " --out " + models + " --seed 9", log) == 0;
    }
    ran = ran && run_cli(cli, "bench " + cfg + jobs + " --data " + data + " --models " + models + " --out " + reports, log) == 0;
  }
  if (!ran) {
    verdict(8, false, "a CLI command failed: " + slurp(log));
    return;
  }
  std::size_t files = 0, differing = 0;
  for (const char* sub : {"data", "models", "reports"}) {
    const auto a = tree_bytes(work / "a" / sub), b = tree_bytes(work / "b" / sub);
    files += a.size();
    if (a.size() != b.size()) {
      differing += std::max(a.size(), b.size());
      continue;
    }
    for (std::size_t i = 0; i < a.size(); ++i) differing += a[i] != b[i];
  }
  verdict(8, differing == 0 && files > 0,
          fmt("gen, train-failure, train-attrib, train-recon, bench rerun (jobs 1 vs 2): %zu of %zu artifacts differ",
              differing, files));
  fs::remove_all(work);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria runner"};
  std::string cli;
  std::string work = (fs::temp_directory_path() / "icpguard_acceptance").string();
  std::size_t jobs = 1;
  app.add_option("--cli", cli, "Path to the icpguard executable")->required();
  app.add_option("--work", work, "Scratch directory");
  app.add_option("--jobs", jobs, "Worker threads for generation and benchmarking");
  CLI11_PARSE(app, argc, argv);

  const auto start = clk::now();
  exact_recovery();

  {
    const auto t = clk::now();
    const auto gc = gradient_suite();
    bool oracles_ok = false, inv_ok = false;
    const auto oracle_notes = oracle_suite(oracles_ok);
    const auto inv_notes = invariant_suite(inv_ok);
    verdict(7, gc.worst < 1e-4 && oracles_ok && inv_ok,
            fmt("(a) %zu parameters, worst FD relative error %.2e (< 1e-4); (b) ", gc.checked, gc.worst) +
                oracle_notes + "; (c) " + inv_notes + fmt(" [%.1f s]", seconds_since(t)));
  }

  // Shared training: distinct seeds from every evaluation set.
  auto t = clk::now();
  const std::vector<sim::SceneCase> all = {sim::SceneCase::Clean, sim::SceneCase::Noise, sim::SceneCase::BadInit,
                                           sim::SceneCase::Occlusion};
  const auto train = scenes(all, 60, 101);
  pipeline::PipelineConfig pcfg;
  const auto fd = training::failure_set(train, pcfg.icp, pcfg.success_threshold, 0, jobs);
  const auto fm = failure::train_failure_model(fd, failure::FailureTrainConfig{});
  const auto am = attribution::train_attribution(training::attribution_set(train), attribution::AttributionTrainConfig{});
  const auto rm = recon::train_reconstruction(training::reconstruction_set(train), recon::ReconTrainConfig{});
  pcfg.models.failure = std::make_shared<nnet::Network>(fm.model);
  pcfg.models.attribution = std::make_shared<attribution::AttributionModel>(am.model);
  pcfg.models.reconstruction = std::make_shared<recon::ReconstructionModel>(rm.model);
  std::printf("info: trained on %zu scenes (%zu alignments) in %.1f s\n", train.size(), fd.size(), seconds_since(t));

  // Twenty held-out scenes per case for the transition criteria.
  const auto test = scenes(all, 20, 202);
  std::vector<pipeline::BenchmarkReport> reports;
  std::vector<double> bench_secs;
  for (const auto c : all) {
    t = clk::now();
    reports.push_back(pipeline::benchmark(only(test, c), pcfg, jobs));
    bench_secs.push_back(seconds_since(t));
    std::printf("info: %s benchmark %.1f s\n%s", sim::to_string(c).c_str(), bench_secs.back(),
                reports.back().to_text().c_str());
  }

  {
    const auto& row = reports[2].rows.at(0);
    verdict(2, row.count == 20 && row.icp_rate() <= 0.2 && row.pipeline_rate() >= 0.7 && bench_secs[2] < 300,
            fmt("BadInit: ICP %zu/%zu (<= 20%%), pipeline %zu/%zu (>= 70%%), %.1f s (< 300 s)", row.icp_success,
                row.count, row.pipeline_success, row.count, bench_secs[2]));
  }

  {
    const auto noise = only(test, sim::SceneCase::Noise);
    std::size_t improved = 0;
    std::vector<double> ratios;
    for (const auto& s : noise) {
      const auto rec = recon::reconstruct(*pcfg.models.reconstruction, s.observed, s.mesh_cloud);
      ratios.push_back(chamfer(rec, s.clean) / chamfer(s.observed, s.clean));
      const auto before = pipeline::initial_attempt(s, pcfg.icp).add;
      auto s_rec = s;
      s_rec.observed = rec;
      const auto after = pipeline::initial_attempt(s_rec, pcfg.icp).add;
      improved += after < before;
    }
    const double med = median(ratios);
    verdict(3, noise.size() == 20 && improved * 10 >= noise.size() * 7 && med <= 0.6,
            fmt("Noise: reconstruction improves ADD on %zu/%zu (>= 70%%); median chamfer ratio %.3f (drop %.1f%%, >= 40%%)",
                improved, noise.size(), med, 100.0 * (1.0 - med)));
  }

  {
    const auto occ = only(test, sim::SceneCase::Occlusion);
    std::size_t better = 0;
    for (const auto& s : occ) {
      const auto geom = sim::scene_geometry(s);
      const auto seed = mix_seed(s.seed, 20);
      const double here = sim::visibility(geom, sim::kTargetTag, s.camera, pcfg.nbv_visibility_samples, seed);
      const auto choice = sim::next_best_view(geom, sim::kTargetTag, pcfg.nbv_candidates,
                                              pcfg.nbv_visibility_samples, pcfg.render, seed);
      better += choice.scores[choice.index] > here;
    }
    const auto& row = reports[3].rows.at(0);
    verdict(4, occ.size() == 20 && better == occ.size() && row.pipeline_rate() >= 0.7,
            fmt("Occlusion: NBV improves visibility on %zu/%zu (100%%); pipeline %zu/%zu (>= 70%%), ICP %zu/%zu",
                better, occ.size(), row.pipeline_success, row.count, row.icp_success, row.count));
  }

  {
    const auto& row = reports[0].rows.at(0);
    std::size_t tagged = 0, successes = 0;
    for (const auto& r : reports[0].results) {
      if (!r.success) continue;
      ++successes;
      tagged += r.mitigation == pipeline::Mitigation::None;
    }
    verdict(9, row.count == 20 && row.pipeline_rate() >= 0.95 && tagged == successes,
            fmt("Clean: pipeline %zu/%zu (>= 95%%); mitigation none on %zu/%zu successes", row.pipeline_success,
                row.count, tagged, successes));
  }

  {
    t = clk::now();
    const auto held = scenes(all, 40, 303);
    const auto data = training::failure_set(held, pcfg.icp, pcfg.success_threshold, 1, jobs);
    const auto cm = failure::evaluate(fm.model, data);
    std::printf("info: failure predictor confusion on held-out alignments\n%s", cm.to_text().c_str());
    verdict(5, data.size() >= 300 && cm.accuracy() >= 0.85,
            fmt("failure predictor held-out accuracy %.3f (>= 0.85) on %zu alignments (TP %zu FP %zu FN %zu TN %zu) [%.1f s]",
                cm.accuracy(), data.size(), cm.tp, cm.fp, cm.fn, cm.tn, seconds_since(t)));
  }

  {
    t = clk::now();
    const auto held = scenes({sim::SceneCase::Noise, sim::SceneCase::BadInit, sim::SceneCase::Occlusion}, 100, 404);
    const auto data = training::attribution_set(held);
    const auto cm = attribution::evaluate(am.model, data);
    using E = attribution::ErrorClass;
    std::printf("info: attribution confusion on held-out scenes\n%s", cm.to_text().c_str());
    verdict(6, data.size() >= 300 && cm.accuracy() >= 0.9,
            fmt("attribution held-out accuracy %.3f (>= 0.90) on %zu scenes; BadInit->Occlusion %.3f, "
                "Occlusion->BadInit %.3f [%.1f s]",
                cm.accuracy(), data.size(), cm.rate(E::BadInit, E::Occlusion), cm.rate(E::Occlusion, E::BadInit),
                seconds_since(t)));
  }

  determinism(cli, work);

  std::printf("info: total %.1f s, %d criteria failed\n", seconds_since(start), failures);
  return failures == 0 ? 0 : 1;
}

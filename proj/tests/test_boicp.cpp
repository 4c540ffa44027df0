#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <numbers>
#include <sstream>

#include <gtest/gtest.h>
#include <json.hpp>

#include "icpguard/boicp.hpp"
#include "icpguard/metrics.hpp"
#include "icpguard/rng.hpp"
#include "test_support.hpp"

using namespace icpguard;
using namespace icpguard::bo;

namespace {

const IcpConfig kIcp{30, 0.05, 1e-6, 10};

SearchBounds small_bounds() {
  SearchBounds b;
  b.lo = {-0.15, -0.15, -0.02, -0.1, -0.1, -std::numbers::pi};
  b.hi = {0.15, 0.15, 0.02, 0.1, 0.1, std::numbers::pi};
  return b;
}

BoConfig quick_config(std::uint64_t seed) {
  BoConfig c;
  c.n_initial_random = 6;
  c.n_iterations = 6;
  c.n_acquisition_candidates = 256;
  c.n_refine_steps = 16;
  c.seed = seed;
  return c;
}

}  // namespace

TEST(Objective, PerfectAlignmentIsOne) {
  const auto P = testutil::asymmetric_cloud(400, 1);
  const auto v = objective(P, P, RigidTransform::identity(), kIcp);
  EXPECT_TRUE(v.overlap_branch);
  EXPECT_DOUBLE_EQ(v.fitness, 1.0);
  EXPECT_NEAR(v.value, 1.0, 1e-9);
}

TEST(Objective, DisjointCloudsUseCentroidBranch) {
  const auto PM = testutil::asymmetric_cloud(300, 2);
  auto P = PM;
  for (auto& p : P.points) p += Point3(1.0, 0.0, 0.0);
  Rng rng(3);
  for (int i = 0; i < 10; ++i) {
    const auto T = from_euler(rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2), 0, 0, 0, rng.uniform(-3, 3));
    const auto v = objective(PM, P, T, kIcp);
    EXPECT_FALSE(v.overlap_branch);
    EXPECT_EQ(v.fitness, 0.0);
    const double want = -(apply_transform(v.icp.transform, PM).centroid() - P.centroid()).norm();
    EXPECT_DOUBLE_EQ(v.value, want);
    EXPECT_LT(v.value, 0.0);
  }
}

TEST(Objective, OverlappingCandidateScoresHigher) {
  const auto PM = testutil::asymmetric_cloud(300, 4);
  const auto P = apply_transform(from_euler(0.004, -0.003, 0, 0, 0, 0.05), PM);
  const auto near = objective(PM, P, RigidTransform::identity(), kIcp);
  const auto far = objective(PM, P, RigidTransform::from_translation({0.8, 0, 0}), kIcp);
  EXPECT_TRUE(near.overlap_branch);
  EXPECT_FALSE(far.overlap_branch);
  EXPECT_GE(near.value, 0.0);
  EXPECT_GT(near.value, far.value);
}

TEST(Objective, RmseNormalizationFlag) {
  const auto PM = testutil::asymmetric_cloud(300, 5);
  Rng rng(6);
  auto P = PM;
  for (auto& p : P.points) p += Point3(rng.normal(0, 0.002), rng.normal(0, 0.002), rng.normal(0, 0.002));
  const auto a = objective(PM, P, RigidTransform::identity(), kIcp, true);
  const auto b = objective(PM, P, RigidTransform::identity(), kIcp, false);
  EXPECT_DOUBLE_EQ(a.value, a.fitness - a.inlier_rmse / 0.01);
  EXPECT_DOUBLE_EQ(b.value, b.fitness - b.inlier_rmse);
  EXPECT_THROW(objective(PointCloud{}, P, RigidTransform::identity(), kIcp), InvalidInput);
}

TEST(ExpectedImprovement, ClosedFormValues) {
  EXPECT_NEAR(expected_improvement(0.0, 1.0, 0.0, 0.0), 1.0 / std::sqrt(2 * std::numbers::pi), 1e-15);
  EXPECT_DOUBLE_EQ(expected_improvement(2.0, 0.0, 1.0, 0.5), 0.5);
  EXPECT_DOUBLE_EQ(expected_improvement(0.0, 0.0, 1.0, 0.0), 0.0);
  // z = 1: imp * Phi(1) + sd * phi(1)
  const double phi1 = std::exp(-0.5) / std::sqrt(2 * std::numbers::pi);
  const double Phi1 = 0.5 * std::erfc(-1.0 / std::numbers::sqrt2);
  EXPECT_NEAR(expected_improvement(1.5, 0.5, 1.0, 0.0), 0.5 * Phi1 + 0.5 * phi1, 1e-15);
  for (double m = -2; m <= 2; m += 0.25) {
    for (double s = 0.01; s < 2; s *= 2) EXPECT_GE(expected_improvement(m, s, 0.3, 0.01), 0.0);
  }
}

TEST(GaussianProcessTest, InterpolatesAndRevertsToMean) {
  Rng rng(7);
  std::vector<Params> x;
  std::vector<double> y;
  for (int i = 0; i < 12; ++i) {
    Params p;
    for (double& v : p) v = rng.uniform();
    x.push_back(p);
    y.push_back(std::sin(3 * p[0]) + p[1]);
  }
  GaussianProcess gp({0.3, 0.3, 0.3, 0.3, 0.3, 0.3}, 1e-10);
  gp.fit(x, y);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const auto [m, s] = gp.predict(x[i]);
    EXPECT_NEAR(m, y[i], 1e-4);
    EXPECT_LT(s, 1e-3);
  }
  const double mean = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
  const auto [m_far, s_far] = gp.predict({50, 50, 50, 50, 50, 50});
  EXPECT_NEAR(m_far, mean, 1e-9);
  EXPECT_GT(s_far, 0.0);
}

TEST(GaussianProcessTest, DuplicatesAndPersistentFailure) {
  const Params p = {0.5, 0.5, 0.5, 0.5, 0.5, 0.5};
  GaussianProcess gp({0.2, 0.2, 0.2, 0.2, 0.2, 0.2}, 0.0);
  gp.fit({p, p, p}, {1.0, 1.0, 1.0});
  const auto [m, s] = gp.predict(p);
  EXPECT_TRUE(std::isfinite(m));
  EXPECT_TRUE(std::isfinite(s));
  EXPECT_NEAR(m, 1.0, 1e-6);
  EXPECT_GE(gp.jitter_used(), 0.0);

  Params bad = p;
  bad[0] = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(gp.fit({bad, p}, {0.0, 1.0}), SurrogateFailure);
}

TEST(BoIcp, TraceInvariants) {
  const auto PM = testutil::asymmetric_cloud(300, 8);
  const auto gt = from_euler(0.1, -0.08, 0.0, 0, 0, 2.0);
  const auto P = apply_transform(gt, PM);
  const auto bounds = small_bounds();
  const auto cfg = quick_config(3);
  const auto r = bo_icp(PM, P, bounds, cfg, kIcp);
  const auto& tr = r.trace;
  ASSERT_EQ(tr.entries.size(), cfg.n_initial_random + cfg.n_iterations);
  double running = -std::numeric_limits<double>::infinity();
  double best_value = running;
  std::size_t best_index = 0;
  for (std::size_t i = 0; i < tr.entries.size(); ++i) {
    const auto& e = tr.entries[i];
    EXPECT_TRUE(bounds.contains(e.params));
    EXPECT_EQ(e.random_phase, i < cfg.n_initial_random);
    EXPECT_EQ(e.result.overlap_branch, e.result.fitness > 0.0);
    if (e.result.value > best_value) {
      best_value = e.result.value;
      best_index = i;
    }
    const double next = std::max(running, e.result.value);
    EXPECT_GE(next, running);
    running = next;
  }
  EXPECT_EQ(tr.best, best_index);
  EXPECT_EQ(tr.entries[tr.best].result.value, best_value);
  EXPECT_EQ(r.result.transform.rotation, tr.entries[tr.best].result.icp.transform.rotation);
  EXPECT_EQ(r.result.transform.translation, tr.entries[tr.best].result.icp.transform.translation);

  std::ostringstream os;
  tr.write_jsonl(os);
  std::istringstream is(os.str());
  std::string line;
  std::size_t lines = 0, flagged = 0;
  while (std::getline(is, line)) {
    const auto j = nlohmann::json::parse(line);
    flagged += j.at("best").get<bool>() ? 1 : 0;
    EXPECT_TRUE(j.at("rmse_normalized").get<bool>());
    ++lines;
  }
  EXPECT_EQ(lines, tr.entries.size());
  EXPECT_EQ(flagged, 1u);
}

TEST(BoIcp, RecoversFarPose) {
  const auto PM = testutil::asymmetric_cloud(400, 9);
  const auto gt = from_euler(0.12, 0.1, 0.0, 0, 0, 2.5);
  const auto P = apply_transform(gt, PM);
  const IcpConfig tight{50, 0.02, 1e-8, 10};
  const auto plain = icp(PM, P, RigidTransform::identity(), tight);
  EXPECT_GT(add_error(PM, gt, plain.transform), 0.05);
  auto cfg = quick_config(1);
  cfg.n_initial_random = 10;
  cfg.n_iterations = 30;
  const auto r = bo_icp(PM, P, small_bounds(), cfg, IcpConfig{50, 0.06, 1e-8, 10});
  EXPECT_LT(add_error(PM, gt, r.result.transform), 0.01);
}

TEST(BoIcp, SeededDeterminism) {
  const auto PM = testutil::asymmetric_cloud(250, 10);
  const auto P = apply_transform(from_euler(-0.1, 0.05, 0, 0, 0, -1.0), PM);
  auto dump = [&](std::uint64_t seed) {
    std::ostringstream os;
    bo_icp(PM, P, small_bounds(), quick_config(seed), kIcp).trace.write_jsonl(os);
    return os.str();
  };
  const auto a = dump(4);
  EXPECT_EQ(a, dump(4));
  EXPECT_NE(a, dump(5));
}

TEST(BoIcp, InvalidInputs) {
  const auto P = testutil::asymmetric_cloud(50, 11);
  auto b = small_bounds();
  b.lo[0] = b.hi[0];
  EXPECT_THROW(bo_icp(P, P, b, quick_config(0), kIcp), InvalidInput);
  auto c = quick_config(0);
  c.length_scales[2] = 0.0;
  EXPECT_THROW(bo_icp(P, P, small_bounds(), c, kIcp), InvalidInput);
  c = quick_config(0);
  c.n_iterations = 0;
  EXPECT_THROW(bo_icp(P, P, small_bounds(), c, kIcp), InvalidInput);
}

TEST(ToTransform, MatchesEulerConvention) {
  const Params p = {0.1, -0.2, 0.3, 0.4, -0.5, 0.6};
  const auto T = to_transform(p);
  const auto E = from_euler(0.1, -0.2, 0.3, 0.4, -0.5, 0.6);
  EXPECT_EQ(T.rotation, E.rotation);
  EXPECT_EQ(T.translation, E.translation);
}

#include <algorithm>
#include <cmath>
#include <filesystem>

#include <gtest/gtest.h>

#include "icpguard/errors.hpp"
#include "icpguard/nnet.hpp"
#include "icpguard/rng.hpp"

using namespace icpguard;
using namespace icpguard::nnet;

namespace {

constexpr double kH = 1e-5;

double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({1e-6, std::abs(a), std::abs(b)});
}

Eigen::VectorXd random_vec(Rng& rng, Eigen::Index n, double scale = 1.0) {
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = rng.uniform(-scale, scale);
  return v;
}

// Perturb each parameter and compare the numeric derivative of the scalar
// objective against the analytic gradient.
template <typename Objective>
void check_gradients(Network& net, const Gradients& analytic, Objective objective) {
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    auto& W = net.layers[l].weight;
    for (Eigen::Index i = 0; i < W.size(); ++i) {
      const double w0 = W.data()[i];
      W.data()[i] = w0 + kH;
      const double up = objective(net);
      W.data()[i] = w0 - kH;
      const double down = objective(net);
      W.data()[i] = w0;
      const double numeric = (up - down) / (2 * kH);
      EXPECT_LT(rel_err(numeric, analytic.weight[l].data()[i]), 1e-4)
          << "layer " << l << " weight " << i << " numeric " << numeric << " analytic "
          << analytic.weight[l].data()[i];
    }
    auto& b = net.layers[l].bias;
    for (Eigen::Index i = 0; i < b.size(); ++i) {
      const double b0 = b[i];
      b[i] = b0 + kH;
      const double up = objective(net);
      b[i] = b0 - kH;
      const double down = objective(net);
      b[i] = b0;
      EXPECT_LT(rel_err((up - down) / (2 * kH), analytic.bias[l][i]), 1e-4);
    }
  }
}

}  // namespace

TEST(Forward, Examples) {
  Network zero = Network::create({3, 4, 2}, {Activation::Identity, Activation::Identity}, 1);
  for (auto& layer : zero.layers) {
    layer.weight.setZero();
    layer.bias.setZero();
  }
  EXPECT_EQ(forward(zero, Eigen::Vector3d(1, 2, 3)), Eigen::VectorXd::Zero(2));

  Network relu;
  relu.layers.push_back({Eigen::MatrixXd::Identity(2, 2), Eigen::VectorXd::Zero(2), Activation::ReLU});
  EXPECT_EQ(forward(relu, Eigen::Vector2d(-1, 2)), Eigen::Vector2d(0, 2));

  const auto a = Network::create({4, 8, 3}, {Activation::ReLU, Activation::Softmax}, 42);
  const auto b = Network::create({4, 8, 3}, {Activation::ReLU, Activation::Softmax}, 42);
  const Eigen::Vector4d x(0.1, -0.2, 0.3, 0.4);
  EXPECT_EQ(forward(a, x), forward(b, x));
  EXPECT_THROW(forward(a, Eigen::Vector3d(1, 2, 3)), InvalidInput);
}

TEST(Forward, InitRange) {
  const auto net = Network::create({10, 30, 5}, {Activation::ReLU, Activation::Identity}, 3);
  EXPECT_EQ(net.parameter_count(), 10u * 30 + 30 + 30 * 5 + 5);
  const double bound0 = std::sqrt(6.0 / 40.0);
  EXPECT_LE(net.layers[0].weight.cwiseAbs().maxCoeff(), bound0);
  EXPECT_TRUE(net.layers[0].bias.isZero());
}

TEST(Forward, BoundedAndFinite) {
  Rng rng(17);
  const auto net = Network::create({6, 16, 16, 4},
                                   {Activation::ReLU, Activation::Sigmoid, Activation::Softmax}, 9);
  const auto logistic = Network::create({6, 8, 1}, {Activation::ReLU, Activation::Sigmoid}, 10);
  for (int i = 0; i < 10000; ++i) {
    const auto x = random_vec(rng, 6, 100.0);
    const auto y = forward(net, x);
    ASSERT_TRUE(y.allFinite());
    EXPECT_NEAR(y.sum(), 1.0, 1e-9);
    const auto p = forward(logistic, x);
    ASSERT_TRUE(p.allFinite());
    EXPECT_GE(p[0], 0.0);
    EXPECT_LE(p[0], 1.0);
  }
}

TEST(Backward, FiniteDifferencesPerActivation) {
  for (const Activation act :
       {Activation::Identity, Activation::ReLU, Activation::Sigmoid, Activation::Softmax}) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      Rng rng(seed + 1000);
      Network net = Network::create({5, 7, 6, 4}, {Activation::Sigmoid, act, act}, seed);
      for (auto& layer : net.layers) layer.bias = random_vec(rng, layer.bias.size(), 0.3);
      const auto x = random_vec(rng, 5);
      const auto u = random_vec(rng, 4);
      const Gradients g = backward(net, x, u);
      check_gradients(net, g, [&](const Network& n) { return u.dot(forward(n, x)); });
    }
  }
}

TEST(Backward, FiniteDifferencesBinaryCrossEntropy) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed + 2000);
    Network net = Network::create({4, 6, 1}, {Activation::ReLU, Activation::Sigmoid}, seed);
    for (auto& layer : net.layers) layer.bias = random_vec(rng, layer.bias.size(), 0.5);
    Eigen::MatrixXd X(4, 5);
    for (Eigen::Index c = 0; c < X.cols(); ++c) X.col(c) = random_vec(rng, 4);
    Eigen::MatrixXd Y(1, 5);
    for (Eigen::Index c = 0; c < 5; ++c) Y(0, c) = static_cast<double>(rng.index(2));

    ForwardCache cache;
    const auto P = forward_batch(net, X, cache);
    auto g = Gradients::zeros_like(net);
    backward_from_logits(net, cache, (P - Y) / 5.0, g);
    check_gradients(net, g, [&](const Network& n) {
      return binary_cross_entropy(forward_batch(n, X), Y);
    });
  }
}

TEST(Backward, FiniteDifferencesCrossEntropy) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed + 3000);
    Network net = Network::create({4, 6, 3}, {Activation::ReLU, Activation::Softmax}, seed);
    for (auto& layer : net.layers) layer.bias = random_vec(rng, layer.bias.size(), 0.5);
    Eigen::MatrixXd X(4, 6);
    for (Eigen::Index c = 0; c < X.cols(); ++c) X.col(c) = random_vec(rng, 4);
    Eigen::MatrixXd Y = Eigen::MatrixXd::Zero(3, 6);
    for (Eigen::Index c = 0; c < 6; ++c) Y(static_cast<Eigen::Index>(rng.index(3)), c) = 1.0;

    ForwardCache cache;
    const auto P = forward_batch(net, X, cache);
    auto g = Gradients::zeros_like(net);
    backward_from_logits(net, cache, (P - Y) / 6.0, g);
    check_gradients(net, g, [&](const Network& n) { return cross_entropy(forward_batch(n, X), Y); });

    // The unfused path through the softmax Jacobian agrees with the fused one.
    Eigen::MatrixXd dP = -Y.cwiseQuotient(P) / 6.0;
    auto g2 = Gradients::zeros_like(net);
    backward(net, cache, dP, g2);
    for (std::size_t l = 0; l < g.weight.size(); ++l) {
      EXPECT_LT((g.weight[l] - g2.weight[l]).norm(), 1e-9);
    }
  }
}

TEST(Backward, FiniteDifferencesChamfer) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed + 4000);
    PointCloud target;
    for (int i = 0; i < 25; ++i) target.points.emplace_back(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
    KdTree index(target);
    Eigen::MatrixXd pred(3, 12);
    for (Eigen::Index c = 0; c < pred.cols(); ++c) pred.col(c) = random_vec(rng, 3);
    const auto v = chamfer_loss(pred, target, index);
    for (Eigen::Index i = 0; i < pred.size(); ++i) {
      Eigen::MatrixXd p = pred;
      p.data()[i] += kH;
      const double up = chamfer_loss(p, target, index).loss;
      p.data()[i] -= 2 * kH;
      const double down = chamfer_loss(p, target, index).loss;
      EXPECT_LT(rel_err((up - down) / (2 * kH), v.gradient.data()[i]), 1e-4);
    }
  }
}

TEST(Backward, ZeroUpstreamAndLinearClosedForm) {
  const auto net = Network::create({3, 5, 2}, {Activation::ReLU, Activation::Identity}, 1);
  const Eigen::Vector3d x(0.3, -0.1, 0.7);
  EXPECT_TRUE(backward(net, x, Eigen::Vector2d::Zero()).all_zero());

  const auto lin = Network::create({3, 2}, {Activation::Identity}, 2);
  const Eigen::Vector2d u(0.5, -2.0);
  const auto g = backward(lin, x, u);
  EXPECT_LT((g.weight[0] - u * x.transpose()).norm(), 1e-15);
  EXPECT_EQ(g.bias[0], Eigen::VectorXd(u));
  EXPECT_THROW(backward(lin, Eigen::Vector2d(1, 2), u), InvalidInput);
}

TEST(Pooling, Examples) {
  Eigen::MatrixXd s(2, 2);
  s << 1, 3, 5, 2;
  EXPECT_EQ(pool_max(s), Eigen::Vector2d(3, 5));
  EXPECT_EQ(pool_mean(s), Eigen::Vector2d(2, 3.5));
  Eigen::MatrixXd one(2, 1);
  one << 4, -1;
  EXPECT_EQ(pool_max(one), Eigen::VectorXd(one.col(0)));
  EXPECT_EQ(pool_mean(one), Eigen::VectorXd(one.col(0)));
  EXPECT_THROW(pool_max(Eigen::MatrixXd(2, 0)), InvalidInput);
  EXPECT_THROW(pool_mean(std::span<const Eigen::VectorXd>{}), InvalidInput);
}

TEST(Pooling, PermutationInvariant) {
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<Eigen::VectorXd> set;
    for (int i = 0; i < 9; ++i) set.push_back(random_vec(rng, 4));
    const auto mx = pool_max(set);
    const auto mn = pool_mean(set);
    for (std::size_t i = set.size() - 1; i > 0; --i) std::swap(set[i], set[rng.index(i + 1)]);
    EXPECT_EQ(pool_max(set), mx);
    EXPECT_LT((pool_mean(set) - mn).norm(), 1e-14);
  }
}

namespace {

VectorDataset separable_dataset(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  VectorDataset d;
  d.inputs.resize(2, static_cast<Eigen::Index>(n));
  d.targets.resize(1, static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(n); ++i) {
    double x, y;
    do {
      x = rng.uniform(-1, 1);
      y = rng.uniform(-1, 1);
    } while (std::abs(x + 0.5 * y - 0.1) < 0.05);
    d.inputs.col(i) << x, y;
    d.targets(0, i) = x + 0.5 * y - 0.1 > 0 ? 1.0 : 0.0;
  }
  return d;
}

}  // namespace

TEST(Train, SeparableDataReachesHighAccuracy) {
  const auto data = separable_dataset(300, 5);
  const auto net = Network::create({2, 1}, {Activation::Sigmoid}, 1);
  TrainConfig cfg;
  cfg.epochs = 200;
  cfg.learning_rate = 0.5;
  const auto out = train(net, data, cfg);
  const auto P = forward_batch(out.network, data.inputs);
  int correct = 0;
  for (Eigen::Index i = 0; i < P.cols(); ++i) correct += (P(0, i) > 0.5) == (data.targets(0, i) > 0.5);
  EXPECT_GE(static_cast<double>(correct) / static_cast<double>(P.cols()), 0.99);
  EXPECT_EQ(out.report.loss_curve.size(), 200u);
  EXPECT_LT(out.report.loss_curve.back(), out.report.loss_curve.front());
}

TEST(Train, ZeroLearningRateLeavesParameters) {
  const auto data = separable_dataset(50, 6);
  const auto net = Network::create({2, 4, 1}, {Activation::ReLU, Activation::Sigmoid}, 2);
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.learning_rate = 0.0;
  const auto out = train(net, data, cfg);
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    EXPECT_EQ(out.network.layers[l].weight, net.layers[l].weight);
    EXPECT_EQ(out.network.layers[l].bias, net.layers[l].bias);
  }
  cfg.learning_rate = -1.0;
  EXPECT_THROW(cfg.validate(), InvalidInput);
}

TEST(Train, Deterministic) {
  const auto data = separable_dataset(80, 7);
  const auto net = Network::create({2, 6, 1}, {Activation::ReLU, Activation::Sigmoid}, 3);
  TrainConfig cfg;
  cfg.epochs = 10;
  cfg.seed = 99;
  const auto a = train(net, data, cfg);
  const auto b = train(net, data, cfg);
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    EXPECT_EQ(a.network.layers[l].weight, b.network.layers[l].weight);
  }
  EXPECT_EQ(a.report.loss_curve, b.report.loss_curve);
}

TEST(Train, MixingScheduleSelectsSources) {
  auto data = separable_dataset(100, 8);
  data.sources.resize(100);
  for (std::size_t i = 0; i < 100; ++i) data.sources[i] = i < 60 ? 0 : 1;
  const auto net = Network::create({2, 1}, {Activation::Sigmoid}, 4);
  TrainConfig cfg;
  cfg.epochs = 4;
  MixingSchedule only_first{{{0, {1.0, 0.0}}}};
  const auto a = train(net, data, cfg, &only_first);
  ASSERT_EQ(a.report.source_draws.size(), 2u);
  EXPECT_GT(a.report.source_draws[0], 0u);
  EXPECT_EQ(a.report.source_draws[1], 0u);

  MixingSchedule ramp{{{0, {1.0, 0.0}}, {2, {1.0, 1.0}}}};
  const auto b = train(net, data, cfg, &ramp);
  EXPECT_GT(b.report.source_draws[1], 0u);

  MixingSchedule bad{{{1, {1.0, 0.0}}}};
  EXPECT_THROW(bad.validate(2), InvalidInput);
  MixingSchedule zero{{{0, {0.0, 0.0}}}};
  EXPECT_THROW(zero.validate(2), InvalidInput);
  MixingSchedule negative{{{0, {1.0, -1.0}}}};
  EXPECT_THROW(negative.validate(2), InvalidInput);
}

TEST(Train, DivergenceReportsEpoch) {
  const auto data = separable_dataset(20, 9);
  Network net = Network::create({2, 1}, {Activation::Sigmoid}, 5);
  std::vector<std::size_t> sources(20, 0);
  Network* nets[] = {&net};
  TrainConfig cfg;
  cfg.epochs = 5;
  int calls = 0;
  try {
    train_networks(nets, sources,
                   [&](std::span<const std::size_t>, std::vector<Gradients>&) {
                     return ++calls > 2 ? std::nan("") : 1.0;
                   },
                   cfg);
    FAIL() << "expected divergence";
  } catch (const TrainingDiverged& e) {
    EXPECT_GE(e.epoch(), 0);
  }
}

TEST(Persistence, RoundTripAndVersionCheck) {
  WeightFile f;
  f.model_kind = "test";
  f.networks.emplace_back("a", Network::create({3, 4, 2}, {Activation::ReLU, Activation::Softmax}, 11));
  f.metadata["note"] = 1;
  const auto path = std::filesystem::temp_directory_path() / "icpguard_nnet_roundtrip.json";
  save_weight_file(path, f);
  const auto g = load_weight_file(path);
  EXPECT_EQ(g.model_kind, "test");
  const Eigen::Vector3d x(0.2, 0.4, -0.6);
  EXPECT_EQ(forward(g.get("a"), x), forward(f.get("a"), x));
  EXPECT_THROW(g.get("missing"), FormatError);

  auto j = weight_file_to_json(f);
  j["format_version"] = 99;
  EXPECT_THROW(weight_file_from_json(j), FormatError);
  std::filesystem::remove(path);
}

#include "icpguard/attribution.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <sstream>

#include "icpguard/errors.hpp"
#include "icpguard/rng.hpp"

namespace icpguard::attribution {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {
constexpr std::array<const char*, kNumClasses> kClassNames = {"noise", "bad_init", "occlusion"};
}

std::string to_string(ErrorClass c) { return kClassNames[static_cast<std::size_t>(c)]; }

ErrorClass error_class_from_string(const std::string& s) {
  for (std::size_t i = 0; i < kNumClasses; ++i) {
    if (s == kClassNames[i]) return static_cast<ErrorClass>(i);
  }
  throw InvalidInput("unknown error class '" + s + "'");
}

ErrorClass argmax(const ClassProbabilities& p) {
  return static_cast<ErrorClass>(std::max_element(p.begin(), p.end()) - p.begin());
}

Eigen::Matrix3Xd normalize_cloud(const PointCloud& cloud, std::size_t n_points, std::uint64_t seed) {
  if (cloud.empty()) throw InvalidInput("normalize_cloud: empty cloud");
  if (n_points == 0) throw InvalidInput("normalize_cloud: n_points must be positive");

  std::vector<std::size_t> order(cloud.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& p = cloud[a];
    const auto& q = cloud[b];
    return std::tie(p.x(), p.y(), p.z()) < std::tie(q.x(), q.y(), q.z());
  });
  PointCloud sorted;
  sorted.points.reserve(cloud.size());
  for (std::size_t i : order) sorted.points.push_back(cloud[i]);

  Eigen::Matrix3Xd out(3, static_cast<Eigen::Index>(n_points));
  if (sorted.size() > n_points) {
    const Point3 c = sorted.centroid();
    std::size_t start = 0;
    double best = -1.0;
    for (std::size_t i = 0; i < sorted.size(); ++i) {
      const double d = (sorted[i] - c).squaredNorm();
      if (d > best) {
        best = d;
        start = i;
      }
    }
    const auto idx = farthest_point_sample(sorted, n_points, start);
    for (std::size_t i = 0; i < n_points; ++i) out.col(static_cast<Eigen::Index>(i)) = sorted[idx[i]];
  } else {
    for (std::size_t i = 0; i < sorted.size(); ++i) out.col(static_cast<Eigen::Index>(i)) = sorted[i];
    Rng rng(seed);
    for (std::size_t i = sorted.size(); i < n_points; ++i) {
      out.col(static_cast<Eigen::Index>(i)) = sorted[rng.index(sorted.size())];
    }
  }
  const Eigen::Vector3d mean = out.rowwise().mean();
  out.colwise() -= mean;
  const double radius = out.colwise().norm().maxCoeff();
  if (radius < 1e-9) {
    out.setZero();
  } else {
    out /= radius;
  }
  return out;
}

void AttributionModel::validate() const {
  encoder.validate();
  head.validate();
  if (encoder.input_dim() != 3) throw InvalidInput("attribution: encoder must take 3-D points");
  if (encoder.output_dim() != head.input_dim()) {
    throw InvalidInput("attribution: encoder output does not match head input");
  }
  if (head.output_dim() != kNumClasses || head.layers.back().activation != nnet::Activation::Softmax) {
    throw InvalidInput("attribution: head must end in a 3-way softmax");
  }
  if (n_points == 0) throw InvalidInput("attribution: n_points must be positive");
}

ClassProbabilities classify_normalized(const AttributionModel& model, const Eigen::Matrix3Xd& points) {
  const MatrixXd features = nnet::forward_batch(model.encoder, points);
  const VectorXd probs = nnet::forward(model.head, nnet::pool_max(features));
  ClassProbabilities p{};
  double sum = 0.0;
  for (std::size_t i = 0; i < kNumClasses; ++i) {
    p[i] = std::max(probs[static_cast<Eigen::Index>(i)], std::numeric_limits<double>::min());
    sum += p[i];
  }
  for (auto& v : p) v /= sum;
  return p;
}

ClassProbabilities classify(const AttributionModel& model, const PointCloud& cloud) {
  model.validate();
  return classify_normalized(model, normalize_cloud(cloud, model.n_points, model.sample_seed));
}

namespace {

double accumulate(const AttributionModel& model, const Eigen::Matrix3Xd& pts, ErrorClass label,
                  std::vector<nnet::Gradients>& grads, nnet::ForwardCache& enc_cache,
                  nnet::ForwardCache& head_cache) {
  const auto h = static_cast<Eigen::Index>(model.encoder.output_dim());
  std::vector<Eigen::Index> am;
  const MatrixXd pooled = nnet::pool_max(nnet::forward_batch(model.encoder, pts), &am);
  const MatrixXd probs = nnet::forward_batch(model.head, pooled, head_cache);
  MatrixXd y = MatrixXd::Zero(static_cast<Eigen::Index>(kNumClasses), 1);
  y(static_cast<Eigen::Index>(label), 0) = 1.0;
  const double loss = nnet::cross_entropy(probs, y);
  const MatrixXd d_pooled = nnet::backward_from_logits(model.head, head_cache, probs - y, grads[1]);

  // Max pooling routes each channel's gradient to one point, so only the
  // arg-max points need a reverse pass through the encoder.
  std::vector<Eigen::Index> unique(am.begin(), am.end());
  std::sort(unique.begin(), unique.end());
  unique.erase(std::unique(unique.begin(), unique.end()), unique.end());
  MatrixXd sub(3, static_cast<Eigen::Index>(unique.size()));
  for (std::size_t u = 0; u < unique.size(); ++u) sub.col(static_cast<Eigen::Index>(u)) = pts.col(unique[u]);
  nnet::forward_batch(model.encoder, sub, enc_cache);
  MatrixXd up = MatrixXd::Zero(h, sub.cols());
  for (Eigen::Index ch = 0; ch < h; ++ch) {
    const auto pos = std::lower_bound(unique.begin(), unique.end(), am[static_cast<std::size_t>(ch)]) - unique.begin();
    up(ch, pos) += d_pooled(ch, 0);
  }
  nnet::backward(model.encoder, enc_cache, up, grads[0]);
  return loss;
}

}  // namespace

SampleGradient sample_gradient(const AttributionModel& model, const Eigen::Matrix3Xd& points, ErrorClass label) {
  model.validate();
  SampleGradient g;
  g.grads = {nnet::Gradients::zeros_like(model.encoder), nnet::Gradients::zeros_like(model.head)};
  nnet::ForwardCache enc_cache, head_cache;
  g.loss = accumulate(model, points, label, g.grads, enc_cache, head_cache);
  return g;
}

AttributionTrainResult train_attribution(const AttributionDataset& data,
                                         const AttributionTrainConfig& config,
                                         const nnet::MixingSchedule* schedule) {
  const std::size_t n = data.size();
  if (n == 0 || data.labels.size() != n) throw InvalidDataset("attribution: empty or ragged dataset");
  std::array<std::size_t, kNumClasses> per_class{};
  for (auto c : data.labels) ++per_class[static_cast<std::size_t>(c)];
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    if (per_class[c] == 0) {
      throw InvalidDataset("attribution: class '" + std::string(kClassNames[c]) +
                           "' missing from training data");
    }
  }
  if (config.encoder_dims.empty()) throw InvalidInput("attribution: encoder needs a layer");

  auto cfg = config.train;
  cfg.loss = nnet::LossKind::CrossEntropy;
  AttributionModel model;
  model.n_points = config.n_points;
  model.sample_seed = cfg.seed;
  std::vector<std::size_t> enc_dims = {3};
  enc_dims.insert(enc_dims.end(), config.encoder_dims.begin(), config.encoder_dims.end());
  model.encoder = nnet::Network::create(
      enc_dims, std::vector<nnet::Activation>(config.encoder_dims.size(), nnet::Activation::ReLU),
      mix_seed(cfg.seed, 1));
  std::vector<std::size_t> head_dims = {config.encoder_dims.back()};
  std::vector<nnet::Activation> head_acts;
  for (std::size_t h : config.head_hidden) {
    head_dims.push_back(h);
    head_acts.push_back(nnet::Activation::ReLU);
  }
  head_dims.push_back(kNumClasses);
  head_acts.push_back(nnet::Activation::Softmax);
  model.head = nnet::Network::create(head_dims, head_acts, mix_seed(cfg.seed, 2));

  std::vector<Eigen::Matrix3Xd> inputs;
  inputs.reserve(n);
  for (const auto& c : data.clouds) inputs.push_back(normalize_cloud(c, model.n_points, model.sample_seed));

  std::vector<std::size_t> sources = data.sources;
  if (sources.empty()) sources.assign(n, 0);
  if (sources.size() != n) throw InvalidInput("attribution: sources length mismatch");

  nnet::Network* nets[] = {&model.encoder, &model.head};
  nnet::ForwardCache enc_cache, head_cache;
  auto loss_fn = [&](std::span<const std::size_t> batch, std::vector<nnet::Gradients>& grads) {
    double total = 0.0;
    for (const std::size_t i : batch) {
      total += accumulate(model, inputs[i], data.labels[i], grads, enc_cache, head_cache);
    }
    return total;
  };
  auto report = nnet::train_networks(nets, sources, loss_fn, cfg, schedule);
  return {std::move(model), std::move(report)};
}

std::size_t ClassConfusion::total() const {
  std::size_t t = 0;
  for (const auto& row : counts) t += std::accumulate(row.begin(), row.end(), std::size_t{0});
  return t;
}

double ClassConfusion::accuracy() const {
  std::size_t diag = 0;
  for (std::size_t i = 0; i < kNumClasses; ++i) diag += counts[i][i];
  return total() == 0 ? 0.0 : static_cast<double>(diag) / static_cast<double>(total());
}

double ClassConfusion::rate(ErrorClass actual, ErrorClass predicted) const {
  const auto& row = counts[static_cast<std::size_t>(actual)];
  const std::size_t n = std::accumulate(row.begin(), row.end(), std::size_t{0});
  return n == 0 ? 0.0 : static_cast<double>(row[static_cast<std::size_t>(predicted)]) / static_cast<double>(n);
}

std::string ClassConfusion::to_text() const {
  std::ostringstream os;
  os << std::left << std::setw(12) << "actual\\pred";
  for (auto name : kClassNames) os << std::setw(12) << name;
  os << "\n";
  for (std::size_t r = 0; r < kNumClasses; ++r) {
    os << std::setw(12) << kClassNames[r];
    for (std::size_t c = 0; c < kNumClasses; ++c) os << std::setw(12) << counts[r][c];
    os << "\n";
  }
  os << "accuracy " << accuracy() << "\n"
     << "bad_init->occlusion " << rate(ErrorClass::BadInit, ErrorClass::Occlusion) << "\n"
     << "occlusion->bad_init " << rate(ErrorClass::Occlusion, ErrorClass::BadInit) << "\n";
  return os.str();
}

ClassConfusion confusion(const std::vector<ErrorClass>& predicted,
                         const std::vector<ErrorClass>& actual) {
  if (predicted.size() != actual.size()) throw InvalidInput("confusion: length mismatch");
  ClassConfusion m;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    ++m.counts[static_cast<std::size_t>(actual[i])][static_cast<std::size_t>(predicted[i])];
  }
  return m;
}

ClassConfusion evaluate(const AttributionModel& model, const AttributionDataset& data) {
  std::vector<ErrorClass> predicted;
  predicted.reserve(data.size());
  for (const auto& c : data.clouds) predicted.push_back(argmax(classify(model, c)));
  return confusion(predicted, data.labels);
}

nnet::WeightFile to_weight_file(const AttributionModel& model) {
  nnet::WeightFile f;
  f.model_kind = "attribution";
  f.networks.emplace_back("encoder", model.encoder);
  f.networks.emplace_back("head", model.head);
  f.metadata["class_order"] = {kClassNames[0], kClassNames[1], kClassNames[2]};
  f.metadata["n_points"] = model.n_points;
  f.metadata["sample_seed"] = model.sample_seed;
  return f;
}

AttributionModel from_weight_file(const nnet::WeightFile& file) {
  if (file.model_kind != "attribution") {
    throw FormatError("expected an attribution weight file, got '" + file.model_kind + "'");
  }
  AttributionModel m;
  m.encoder = file.get("encoder");
  m.head = file.get("head");
  try {
    const auto& order = file.metadata.at("class_order");
    for (std::size_t i = 0; i < kNumClasses; ++i) {
      if (order.at(i).get<std::string>() != kClassNames[i]) throw FormatError("class order mismatch");
    }
    m.n_points = file.metadata.at("n_points").get<std::size_t>();
    m.sample_seed = file.metadata.at("sample_seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("attribution metadata: ") + e.what());
  }
  try {
    m.validate();
  } catch (const InvalidInput& e) {
    throw FormatError(e.what());
  }
  return m;
}

}  // namespace icpguard::attribution

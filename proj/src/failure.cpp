#include "icpguard/failure.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "icpguard/errors.hpp"

namespace icpguard::failure {

FeatureVector extract_features(const IcpResult& icp_result, const AlignmentReport& report) {
  FeatureVector f;
  f[0] = report.fitness_1cm;
  f[1] = report.fitness_2cm;
  f[2] = report.rmse_inlier;
  f[3] = report.dist_mesh_to_scene;
  f[4] = report.dist_scene_to_mesh;
  const auto& R = icp_result.transform.rotation;
  const auto& t = icp_result.transform.translation;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) f[5 + 4 * r + c] = R(r, c);
    f[5 + 4 * r + 3] = t[r];
  }
  return f;
}

SuccessPrediction predict_success(const nnet::Network& model, const FeatureVector& features,
                                  double threshold) {
  if (model.input_dim() != static_cast<std::size_t>(kFeatureDim) || model.output_dim() != 1) {
    throw InvalidInput("predict_success: model must map 17 features to 1 probability");
  }
  if (!(threshold >= 0.0 && threshold <= 1.0)) {
    throw InvalidInput("predict_success: threshold must lie in [0, 1]");
  }
  SuccessPrediction p;
  p.probability = std::clamp(nnet::forward(model, features)[0], 0.0, 1.0);
  p.label = p.probability >= threshold;
  return p;
}

bool label_by_add(double add, double success_threshold) {
  if (!(add >= 0.0)) throw InvalidInput("label_by_add: ADD must be non-negative");
  return add < success_threshold;
}

FailureTrainResult train_failure_model(const FailureDataset& data, const FailureTrainConfig& config,
                                       const nnet::MixingSchedule* schedule) {
  const std::size_t n = data.size();
  if (n == 0 || data.labels.size() != n) throw InvalidDataset("failure: empty or ragged dataset");
  std::size_t positives = 0;
  for (bool b : data.labels) positives += b ? 1 : 0;
  if (positives == 0 || positives == n) {
    throw InvalidDataset("failure: training data must contain both success and failure labels");
  }

  Eigen::VectorXd mean = Eigen::VectorXd::Zero(kFeatureDim);
  for (const auto& f : data.features) mean += f;
  mean /= static_cast<double>(n);
  Eigen::VectorXd stdev = Eigen::VectorXd::Zero(kFeatureDim);
  for (const auto& f : data.features) stdev += (f - mean).cwiseAbs2();
  stdev = (stdev / static_cast<double>(n)).cwiseSqrt();
  for (Eigen::Index i = 0; i < kFeatureDim; ++i) {
    if (stdev[i] < 1e-9) stdev[i] = 1.0;
  }

  nnet::VectorDataset vd;
  vd.inputs.resize(kFeatureDim, static_cast<Eigen::Index>(n));
  vd.targets.resize(1, static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    const auto c = static_cast<Eigen::Index>(i);
    vd.inputs.col(c) = (data.features[i] - mean).cwiseQuotient(stdev);
    vd.targets(0, c) = data.labels[i] ? 1.0 : 0.0;
  }
  vd.sources = data.sources;

  std::vector<std::size_t> dims = {static_cast<std::size_t>(kFeatureDim)};
  std::vector<nnet::Activation> acts;
  for (std::size_t h : config.hidden) {
    dims.push_back(h);
    acts.push_back(nnet::Activation::ReLU);
  }
  dims.push_back(1);
  acts.push_back(nnet::Activation::Sigmoid);
  auto cfg = config.train;
  cfg.loss = nnet::LossKind::BinaryCrossEntropy;
  const auto net = nnet::Network::create(dims, acts, cfg.seed);
  auto outcome = nnet::train(net, vd, cfg, schedule);

  // W (x - mu) / s + b  ==  (W diag(1/s)) x + (b - W diag(1/s) mu)
  auto& first = outcome.network.layers.front();
  first.weight = first.weight * stdev.cwiseInverse().asDiagonal();
  first.bias -= first.weight * mean;
  return {std::move(outcome.network), std::move(outcome.report)};
}

double ConfusionMatrix::accuracy() const {
  return total() == 0 ? 0.0 : static_cast<double>(tp + tn) / static_cast<double>(total());
}

std::string ConfusionMatrix::to_text() const {
  std::ostringstream os;
  os << "                 actual_success  actual_failure\n"
     << "pred_success     TP=" << tp << "  FP=" << fp << "\n"
     << "pred_failure     FN=" << fn << "  TN=" << tn << "\n"
     << "accuracy " << accuracy() << " (" << (tp + tn) << "/" << total() << ")\n";
  return os.str();
}

ConfusionMatrix confusion(const std::vector<bool>& predicted, const std::vector<bool>& actual) {
  if (predicted.size() != actual.size()) throw InvalidInput("confusion: length mismatch");
  ConfusionMatrix m;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    if (predicted[i] && actual[i]) ++m.tp;
    else if (predicted[i]) ++m.fp;
    else if (actual[i]) ++m.fn;
    else ++m.tn;
  }
  return m;
}

ConfusionMatrix evaluate(const nnet::Network& model, const FailureDataset& data, double threshold) {
  std::vector<bool> predicted;
  predicted.reserve(data.size());
  for (const auto& f : data.features) predicted.push_back(predict_success(model, f, threshold).label);
  return confusion(predicted, data.labels);
}

nnet::WeightFile to_weight_file(const nnet::Network& model, double decision_threshold) {
  nnet::WeightFile f;
  f.model_kind = "failure";
  f.networks.emplace_back("predictor", model);
  f.metadata["decision_threshold"] = decision_threshold;
  f.metadata["features"] = {"fitness_1cm", "fitness_2cm", "rmse_inlier", "dist_mesh_to_scene",
                            "dist_scene_to_mesh", "r00", "r01", "r02", "t0", "r10", "r11",
                            "r12", "t1", "r20", "r21", "r22", "t2"};
  return f;
}

}  // namespace icpguard::failure

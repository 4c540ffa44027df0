#include "icpguard/nnet.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "icpguard/errors.hpp"
#include "icpguard/rng.hpp"

namespace icpguard::nnet {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using json = nlohmann::json;

std::string to_string(Activation a) {
  switch (a) {
    case Activation::Identity: return "identity";
    case Activation::ReLU: return "relu";
    case Activation::Sigmoid: return "sigmoid";
    case Activation::Softmax: return "softmax";
  }
  return "identity";
}

Activation activation_from_string(const std::string& s) {
  if (s == "identity") return Activation::Identity;
  if (s == "relu") return Activation::ReLU;
  if (s == "sigmoid") return Activation::Sigmoid;
  if (s == "softmax") return Activation::Softmax;
  throw FormatError("unknown activation tag '" + s + "'");
}

std::string to_string(LossKind k) {
  switch (k) {
    case LossKind::BinaryCrossEntropy: return "binary-cross-entropy";
    case LossKind::CrossEntropy: return "cross-entropy";
    case LossKind::Chamfer: return "chamfer";
  }
  return "binary-cross-entropy";
}

LossKind loss_from_string(const std::string& s) {
  if (s == "binary-cross-entropy") return LossKind::BinaryCrossEntropy;
  if (s == "cross-entropy") return LossKind::CrossEntropy;
  if (s == "chamfer") return LossKind::Chamfer;
  throw FormatError("unknown loss tag '" + s + "'");
}

// ---------------------------------------------------------------------------

Network Network::create(const std::vector<std::size_t>& dims,
                        const std::vector<Activation>& activations, std::uint64_t seed) {
  if (dims.size() < 2) throw InvalidInput("Network::create: need at least input and output dims");
  if (activations.size() != dims.size() - 1) {
    throw InvalidInput("Network::create: one activation per layer required");
  }
  Network net;
  net.init_seed = seed;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const std::size_t in = dims[l];
    const std::size_t out = dims[l + 1];
    if (in == 0 || out == 0) throw InvalidInput("Network::create: zero-width layer");
    Rng rng(mix_seed(seed, l));
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    DenseLayer layer;
    layer.weight.resize(static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in));
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) {
        layer.weight(r, c) = rng.uniform(-limit, limit);
      }
    }
    layer.bias = VectorXd::Zero(static_cast<Eigen::Index>(out));
    layer.activation = activations[l];
    net.layers.push_back(std::move(layer));
  }
  return net;
}

std::size_t Network::input_dim() const {
  return layers.empty() ? 0 : static_cast<std::size_t>(layers.front().weight.cols());
}

std::size_t Network::output_dim() const {
  return layers.empty() ? 0 : static_cast<std::size_t>(layers.back().weight.rows());
}

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  return n;
}

void Network::validate() const {
  if (layers.empty()) throw InvalidInput("network has no layers");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& layer = layers[l];
    if (layer.bias.size() != layer.weight.rows()) {
      throw InvalidInput("layer " + std::to_string(l) + ": bias size does not match rows");
    }
    if (l > 0 && layer.weight.cols() != layers[l - 1].weight.rows()) {
      throw InvalidInput("layer " + std::to_string(l) + ": input dim does not chain");
    }
    if (!layer.weight.allFinite() || !layer.bias.allFinite()) {
      throw InvalidInput("layer " + std::to_string(l) + ": non-finite parameters");
    }
  }
}

// ---------------------------------------------------------------------------

namespace {

void activate(Activation a, MatrixXd& z) {
  switch (a) {
    case Activation::Identity:
      break;
    case Activation::ReLU:
      z = z.cwiseMax(0.0);
      break;
    case Activation::Sigmoid:
      z = z.unaryExpr([](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      });
      break;
    case Activation::Softmax:
      for (Eigen::Index c = 0; c < z.cols(); ++c) {
        auto col = z.col(c);
        const double m = col.maxCoeff();
        col = (col.array() - m).exp().matrix();
        col /= col.sum();
      }
      break;
  }
}

// dL/dz from dL/dy given y = act(z).
MatrixXd activation_backward(Activation a, const MatrixXd& y, const MatrixXd& g) {
  switch (a) {
    case Activation::Identity:
      return g;
    case Activation::ReLU:
      return (y.array() > 0.0).select(g, 0.0);
    case Activation::Sigmoid:
      return (g.array() * y.array() * (1.0 - y.array())).matrix();
    case Activation::Softmax: {
      MatrixXd out(g.rows(), g.cols());
      for (Eigen::Index c = 0; c < g.cols(); ++c) {
        const double dot = g.col(c).dot(y.col(c));
        out.col(c) = (y.col(c).array() * (g.col(c).array() - dot)).matrix();
      }
      return out;
    }
  }
  return g;
}

void check_input(const Network& net, const MatrixXd& inputs) {
  if (net.layers.empty()) throw InvalidInput("forward: network has no layers");
  if (static_cast<std::size_t>(inputs.rows()) != net.input_dim()) {
    throw InvalidInput("forward: input dim " + std::to_string(inputs.rows()) + " != network " +
                       std::to_string(net.input_dim()));
  }
}

MatrixXd backward_impl(const Network& net, const ForwardCache& cache, const MatrixXd& upstream,
                       Gradients& grads, bool from_logits) {
  const std::size_t L = net.layers.size();
  if (cache.outputs.size() != L || cache.inputs.size() != L) {
    throw InvalidInput("backward: cache does not match network");
  }
  if (upstream.rows() != cache.outputs.back().rows() ||
      upstream.cols() != cache.outputs.back().cols()) {
    throw InvalidInput("backward: upstream gradient shape mismatch");
  }
  if (grads.weight.size() != L) grads = Gradients::zeros_like(net);
  MatrixXd g = upstream;
  for (std::size_t li = L; li-- > 0;) {
    const auto& layer = net.layers[li];
    const MatrixXd dz = (from_logits && li == L - 1)
                            ? g
                            : activation_backward(layer.activation, cache.outputs[li], g);
    grads.weight[li].noalias() += dz * cache.inputs[li].transpose();
    grads.bias[li] += dz.rowwise().sum();
    g = layer.weight.transpose() * dz;
  }
  return g;
}

}  // namespace

MatrixXd forward_batch(const Network& net, const MatrixXd& inputs, ForwardCache& cache) {
  check_input(net, inputs);
  cache.inputs.clear();
  cache.outputs.clear();
  MatrixXd x = inputs;
  for (const auto& layer : net.layers) {
    cache.inputs.push_back(x);
    MatrixXd z = layer.weight * x;
    z.colwise() += layer.bias;
    activate(layer.activation, z);
    cache.outputs.push_back(z);
    x = std::move(z);
  }
  return x;
}

MatrixXd forward_batch(const Network& net, const MatrixXd& inputs) {
  check_input(net, inputs);
  MatrixXd x = inputs;
  for (const auto& layer : net.layers) {
    MatrixXd z = layer.weight * x;
    z.colwise() += layer.bias;
    activate(layer.activation, z);
    x = std::move(z);
  }
  return x;
}

VectorXd forward(const Network& net, const VectorXd& input) {
  return forward_batch(net, MatrixXd(input)).col(0);
}

Gradients Gradients::zeros_like(const Network& net) {
  Gradients g;
  for (const auto& l : net.layers) {
    g.weight.push_back(MatrixXd::Zero(l.weight.rows(), l.weight.cols()));
    g.bias.push_back(VectorXd::Zero(l.bias.size()));
  }
  return g;
}

void Gradients::set_zero() {
  for (auto& w : weight) w.setZero();
  for (auto& b : bias) b.setZero();
}

void Gradients::add_scaled(const Gradients& other, double s) {
  for (std::size_t i = 0; i < weight.size(); ++i) {
    weight[i] += s * other.weight[i];
    bias[i] += s * other.bias[i];
  }
}

void Gradients::scale(double s) {
  for (auto& w : weight) w *= s;
  for (auto& b : bias) b *= s;
}

double Gradients::squared_norm() const {
  double n = 0.0;
  for (const auto& w : weight) n += w.squaredNorm();
  for (const auto& b : bias) n += b.squaredNorm();
  return n;
}

bool Gradients::all_zero() const {
  for (const auto& w : weight) {
    if (!w.isZero(0.0)) return false;
  }
  for (const auto& b : bias) {
    if (!b.isZero(0.0)) return false;
  }
  return true;
}

MatrixXd backward(const Network& net, const ForwardCache& cache, const MatrixXd& upstream,
                  Gradients& grads) {
  return backward_impl(net, cache, upstream, grads, false);
}

MatrixXd backward_from_logits(const Network& net, const ForwardCache& cache,
                              const MatrixXd& upstream_logits, Gradients& grads) {
  return backward_impl(net, cache, upstream_logits, grads, true);
}

Gradients backward(const Network& net, const VectorXd& input, const VectorXd& upstream) {
  ForwardCache cache;
  forward_batch(net, MatrixXd(input), cache);
  if (static_cast<std::size_t>(upstream.size()) != net.output_dim()) {
    throw InvalidInput("backward: upstream gradient dim mismatch");
  }
  Gradients grads = Gradients::zeros_like(net);
  backward(net, cache, MatrixXd(upstream), grads);
  return grads;
}

// ---------------------------------------------------------------------------

VectorXd pool_max(const MatrixXd& set, std::vector<Eigen::Index>* argmax) {
  if (set.cols() == 0) throw InvalidInput("pool_max: empty set");
  VectorXd out(set.rows());
  if (argmax) argmax->assign(static_cast<std::size_t>(set.rows()), 0);
  for (Eigen::Index r = 0; r < set.rows(); ++r) {
    Eigen::Index best = 0;
    double v = set(r, 0);
    for (Eigen::Index c = 1; c < set.cols(); ++c) {
      if (set(r, c) > v) {
        v = set(r, c);
        best = c;
      }
    }
    out(r) = v;
    if (argmax) (*argmax)[static_cast<std::size_t>(r)] = best;
  }
  return out;
}

VectorXd pool_mean(const MatrixXd& set) {
  if (set.cols() == 0) throw InvalidInput("pool_mean: empty set");
  return set.rowwise().mean();
}

namespace {
MatrixXd stack_columns(std::span<const VectorXd> set) {
  if (set.empty()) throw InvalidInput("pooling over an empty set");
  MatrixXd m(set.front().size(), static_cast<Eigen::Index>(set.size()));
  for (std::size_t i = 0; i < set.size(); ++i) {
    if (set[i].size() != m.rows()) throw InvalidInput("pooling: vectors differ in dimension");
    m.col(static_cast<Eigen::Index>(i)) = set[i];
  }
  return m;
}
}  // namespace

VectorXd pool_max(std::span<const VectorXd> set) { return pool_max(stack_columns(set)); }
VectorXd pool_mean(std::span<const VectorXd> set) { return pool_mean(stack_columns(set)); }

double binary_cross_entropy(const MatrixXd& probs, const MatrixXd& targets) {
  if (probs.rows() != targets.rows() || probs.cols() != targets.cols() || probs.size() == 0) {
    throw InvalidInput("binary_cross_entropy: shape mismatch");
  }
  double sum = 0.0;
  for (Eigen::Index i = 0; i < probs.size(); ++i) {
    const double p = std::clamp(probs(i), kProbEps, 1.0 - kProbEps);
    const double y = targets(i);
    sum -= y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
  }
  return sum / static_cast<double>(probs.cols());
}

double cross_entropy(const MatrixXd& probs, const MatrixXd& targets) {
  if (probs.rows() != targets.rows() || probs.cols() != targets.cols() || probs.size() == 0) {
    throw InvalidInput("cross_entropy: shape mismatch");
  }
  double sum = 0.0;
  for (Eigen::Index i = 0; i < probs.size(); ++i) {
    if (targets(i) != 0.0) sum -= targets(i) * std::log(std::max(probs(i), kProbEps));
  }
  return sum / static_cast<double>(probs.cols());
}

ChamferValue chamfer_loss(const MatrixXd& predicted, const PointCloud& target,
                          const KdTree& target_index) {
  if (predicted.rows() != 3 || predicted.cols() == 0 || target.empty()) {
    throw InvalidInput("chamfer_loss: need non-empty 3 x n predictions and target");
  }
  const std::size_t n = static_cast<std::size_t>(predicted.cols());
  const std::size_t m = target.size();
  std::vector<Point3> pred(n);
  for (std::size_t i = 0; i < n; ++i) pred[i] = predicted.col(static_cast<Eigen::Index>(i));

  ChamferValue out;
  out.gradient = MatrixXd::Zero(3, predicted.cols());
  double forward_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto nn = target_index.nearest(pred[i]);
    const double d = std::sqrt(nn->dist2);
    forward_sum += d;
    if (d > 0.0) {
      out.gradient.col(static_cast<Eigen::Index>(i)) +=
          (pred[i] - target_index.point(nn->index)) / (d * static_cast<double>(n));
    }
  }
  const KdTree pred_index(pred);
  double backward_sum = 0.0;
  for (std::size_t j = 0; j < m; ++j) {
    const auto nn = pred_index.nearest(target[j]);
    const double d = std::sqrt(nn->dist2);
    backward_sum += d;
    if (d > 0.0) {
      out.gradient.col(static_cast<Eigen::Index>(nn->index)) +=
          (pred[nn->index] - target[j]) / (d * static_cast<double>(m));
    }
  }
  out.loss = forward_sum / static_cast<double>(n) + backward_sum / static_cast<double>(m);
  return out;
}

// ---------------------------------------------------------------------------

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw InvalidInput("TrainConfig: learning_rate must be finite and >= 0");
  }
  if (epochs < 1) throw InvalidInput("TrainConfig: epochs must be >= 1");
  if (batch_size < 1) throw InvalidInput("TrainConfig: batch_size must be >= 1");
  if (momentum < 0.0 || momentum >= 1.0) throw InvalidInput("TrainConfig: momentum in [0, 1)");
}

void MixingSchedule::validate(std::size_t n_sources) const {
  if (stages.empty()) throw InvalidInput("MixingSchedule: no stages");
  for (std::size_t s = 0; s < stages.size(); ++s) {
    const auto& st = stages[s];
    if (st.weights.size() != n_sources) {
      throw InvalidInput("MixingSchedule: stage " + std::to_string(s) + " has " +
                         std::to_string(st.weights.size()) + " weights, expected " +
                         std::to_string(n_sources));
    }
    double sum = 0.0;
    for (double w : st.weights) {
      if (!(w >= 0.0) || !std::isfinite(w)) throw InvalidInput("MixingSchedule: negative weight");
      sum += w;
    }
    if (!(sum > 0.0)) throw InvalidInput("MixingSchedule: stage weights sum to zero");
    if (s > 0 && st.epoch_start <= stages[s - 1].epoch_start) {
      throw InvalidInput("MixingSchedule: stage epochs must increase");
    }
  }
  if (stages.front().epoch_start != 0) {
    throw InvalidInput("MixingSchedule: first stage must start at epoch 0");
  }
}

const MixingStage& MixingSchedule::stage_for(int epoch) const {
  const MixingStage* current = &stages.front();
  for (const auto& st : stages) {
    if (st.epoch_start <= epoch) current = &st;
  }
  return *current;
}

namespace {

template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::swap(v[i - 1], v[rng.index(i)]);
  }
}

// Cycles through a source's samples in seeded random order.
struct SourcePool {
  std::vector<std::size_t> members;
  std::vector<std::size_t> order;
  std::size_t pos = 0;

  std::size_t draw(Rng& rng) {
    if (pos >= order.size()) {
      order = members;
      shuffle(order, rng);
      pos = 0;
    }
    return order[pos++];
  }
};

}  // namespace

TrainReport train_networks(std::span<Network* const> nets, std::span<const std::size_t> sources,
                           const BatchLossFn& batch_loss, const TrainConfig& config,
                           const MixingSchedule* schedule) {
  config.validate();
  const std::size_t n = sources.size();
  if (n == 0) throw InvalidDataset("train: empty dataset");
  for (auto* net : nets) net->validate();

  std::size_t n_sources = *std::max_element(sources.begin(), sources.end()) + 1;
  if (schedule) {
    if (schedule->stages.empty()) throw InvalidInput("MixingSchedule: no stages");
    if (schedule->stages.front().weights.size() < n_sources) {
      throw InvalidInput("MixingSchedule: dataset has more sources than the schedule");
    }
    n_sources = schedule->stages.front().weights.size();
    schedule->validate(n_sources);
  }
  std::vector<SourcePool> pools(n_sources);
  for (std::size_t i = 0; i < n; ++i) pools[sources[i]].members.push_back(i);

  Rng rng(config.seed);
  std::vector<Gradients> velocity;
  std::vector<Gradients> grads;
  for (auto* net : nets) {
    velocity.push_back(Gradients::zeros_like(*net));
    grads.push_back(Gradients::zeros_like(*net));
  }

  TrainReport report;
  report.source_draws.assign(n_sources, 0);
  std::vector<std::size_t> order;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    order.clear();
    if (!schedule) {
      order.resize(n);
      std::iota(order.begin(), order.end(), std::size_t{0});
    } else {
      const auto& w = schedule->stage_for(epoch).weights;
      const double total = std::accumulate(w.begin(), w.end(), 0.0);
      // Largest-remainder apportionment of n draws across sources.
      std::vector<std::size_t> counts(n_sources, 0);
      std::vector<std::pair<double, std::size_t>> remainders;
      std::size_t assigned = 0;
      for (std::size_t s = 0; s < n_sources; ++s) {
        const double share = static_cast<double>(n) * w[s] / total;
        counts[s] = static_cast<std::size_t>(std::floor(share));
        assigned += counts[s];
        remainders.push_back({share - std::floor(share), s});
      }
      std::stable_sort(remainders.begin(), remainders.end(),
                       [](const auto& a, const auto& b) { return a.first > b.first; });
      for (std::size_t r = 0; assigned < n && r < remainders.size(); ++r) {
        if (w[remainders[r].second] > 0.0) {
          ++counts[remainders[r].second];
          ++assigned;
        }
      }
      for (std::size_t s = 0; s < n_sources; ++s) {
        if (counts[s] > 0 && pools[s].members.empty()) {
          throw InvalidDataset("train: schedule draws from source " + std::to_string(s) +
                               " which has no samples");
        }
        for (std::size_t c = 0; c < counts[s]; ++c) order.push_back(pools[s].draw(rng));
      }
    }
    shuffle(order, rng);
    for (std::size_t i : order) ++report.source_draws[sources[i]];

    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t len = std::min(config.batch_size, order.size() - start);
      const std::span<const std::size_t> batch(order.data() + start, len);
      for (auto& g : grads) g.set_zero();
      const double loss = batch_loss(batch, grads);
      if (!std::isfinite(loss)) throw TrainingDiverged(epoch);
      epoch_loss += loss;

      const double inv = 1.0 / static_cast<double>(len);
      double norm2 = 0.0;
      for (std::size_t k = 0; k < nets.size(); ++k) {
        grads[k].scale(inv);
        if (config.weight_decay > 0.0) {
          for (std::size_t l = 0; l < nets[k]->layers.size(); ++l) {
            grads[k].weight[l] += config.weight_decay * nets[k]->layers[l].weight;
          }
        }
        norm2 += grads[k].squared_norm();
      }
      if (!std::isfinite(norm2)) throw TrainingDiverged(epoch);
      const double clip = (config.grad_clip > 0.0 && norm2 > config.grad_clip * config.grad_clip)
                              ? config.grad_clip / std::sqrt(norm2)
                              : 1.0;
      for (std::size_t k = 0; k < nets.size(); ++k) {
        velocity[k].scale(config.momentum);
        velocity[k].add_scaled(grads[k], clip);
        auto& layers = nets[k]->layers;
        for (std::size_t l = 0; l < layers.size(); ++l) {
          layers[l].weight -= config.learning_rate * velocity[k].weight[l];
          layers[l].bias -= config.learning_rate * velocity[k].bias[l];
        }
      }
    }
    const double mean_loss = epoch_loss / static_cast<double>(order.size());
    if (!std::isfinite(mean_loss)) throw TrainingDiverged(epoch);
    report.loss_curve.push_back(mean_loss);
  }
  return report;
}

TrainOutcome train(const Network& net, const VectorDataset& data, const TrainConfig& config,
                   const MixingSchedule* schedule) {
  if (data.size() == 0) throw InvalidDataset("train: empty dataset");
  if (static_cast<std::size_t>(data.inputs.rows()) != net.input_dim() ||
      static_cast<std::size_t>(data.targets.rows()) != net.output_dim() ||
      data.targets.cols() != data.inputs.cols()) {
    throw InvalidInput("train: dataset shape does not match network");
  }
  const Activation last = net.layers.back().activation;
  if (config.loss == LossKind::BinaryCrossEntropy &&
      (last != Activation::Sigmoid || net.output_dim() != 1)) {
    throw InvalidInput("train: binary-cross-entropy needs a single sigmoid output");
  }
  if (config.loss == LossKind::CrossEntropy && last != Activation::Softmax) {
    throw InvalidInput("train: cross-entropy needs a softmax output");
  }
  if (config.loss == LossKind::Chamfer) {
    throw InvalidInput("train: chamfer loss applies to point-set models, not vector datasets");
  }

  std::vector<std::size_t> sources = data.sources;
  if (sources.empty()) sources.assign(data.size(), 0);
  if (sources.size() != data.size()) throw InvalidInput("train: sources length mismatch");

  TrainOutcome out{net, {}};
  Network* nets[] = {&out.network};
  ForwardCache cache;
  const bool binary = config.loss == LossKind::BinaryCrossEntropy;
  auto loss_fn = [&](std::span<const std::size_t> batch, std::vector<Gradients>& grads) {
    MatrixXd x(data.inputs.rows(), static_cast<Eigen::Index>(batch.size()));
    MatrixXd y(data.targets.rows(), static_cast<Eigen::Index>(batch.size()));
    for (std::size_t b = 0; b < batch.size(); ++b) {
      x.col(static_cast<Eigen::Index>(b)) = data.inputs.col(static_cast<Eigen::Index>(batch[b]));
      y.col(static_cast<Eigen::Index>(b)) = data.targets.col(static_cast<Eigen::Index>(batch[b]));
    }
    const MatrixXd p = forward_batch(out.network, x, cache);
    const double mean = binary ? binary_cross_entropy(p, y) : cross_entropy(p, y);
    backward_from_logits(out.network, cache, p - y, grads[0]);
    return mean * static_cast<double>(batch.size());
  };
  out.report = train_networks(nets, sources, loss_fn, config, schedule);
  return out;
}

// ---------------------------------------------------------------------------

json network_to_json(const Network& net) {
  json layers = json::array();
  for (const auto& l : net.layers) {
    std::vector<double> w;
    w.reserve(static_cast<std::size_t>(l.weight.size()));
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) w.push_back(l.weight(r, c));
    }
    std::vector<double> b(l.bias.data(), l.bias.data() + l.bias.size());
    layers.push_back({{"rows", l.weight.rows()},
                      {"cols", l.weight.cols()},
                      {"activation", to_string(l.activation)},
                      {"weights", w},
                      {"bias", b}});
  }
  return {{"input_dim", net.input_dim()}, {"init_seed", net.init_seed}, {"layers", layers}};
}

Network network_from_json(const json& j) {
  try {
    Network net;
    net.init_seed = j.at("init_seed").get<std::uint64_t>();
    for (const auto& lj : j.at("layers")) {
      DenseLayer layer;
      const auto rows = lj.at("rows").get<Eigen::Index>();
      const auto cols = lj.at("cols").get<Eigen::Index>();
      const auto w = lj.at("weights").get<std::vector<double>>();
      const auto b = lj.at("bias").get<std::vector<double>>();
      if (rows <= 0 || cols <= 0 || static_cast<Eigen::Index>(w.size()) != rows * cols ||
          static_cast<Eigen::Index>(b.size()) != rows) {
        throw FormatError("layer array sizes do not match rows/cols");
      }
      layer.weight.resize(rows, cols);
      for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index c = 0; c < cols; ++c) {
          layer.weight(r, c) = w[static_cast<std::size_t>(r * cols + c)];
        }
      }
      layer.bias = Eigen::Map<const VectorXd>(b.data(), rows);
      layer.activation = activation_from_string(lj.at("activation").get<std::string>());
      net.layers.push_back(std::move(layer));
    }
    if (net.input_dim() != j.at("input_dim").get<std::size_t>()) {
      throw FormatError("input_dim does not match first layer");
    }
    net.validate();
    return net;
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed network: ") + e.what());
  } catch (const InvalidInput& e) {
    throw FormatError(std::string("invalid network: ") + e.what());
  }
}

const Network& WeightFile::get(const std::string& name) const {
  for (const auto& [n, net] : networks) {
    if (n == name) return net;
  }
  throw FormatError("weight file has no network named '" + name + "'");
}

json weight_file_to_json(const WeightFile& file) {
  json nets = json::array();
  for (const auto& [name, net] : file.networks) {
    json entry = network_to_json(net);
    entry["name"] = name;
    nets.push_back(entry);
  }
  return {{"format_version", kWeightFormatVersion},
          {"model_kind", file.model_kind},
          {"networks", nets},
          {"metadata", file.metadata}};
}

WeightFile weight_file_from_json(const json& j) {
  if (!j.is_object() || !j.contains("format_version")) {
    throw FormatError("weight file: missing format_version");
  }
  if (!j.at("format_version").is_number_integer() ||
      j.at("format_version").get<int>() != kWeightFormatVersion) {
    throw FormatError("weight file: unsupported format_version " + j.at("format_version").dump());
  }
  try {
    WeightFile file;
    file.model_kind = j.at("model_kind").get<std::string>();
    for (const auto& entry : j.at("networks")) {
      file.networks.emplace_back(entry.at("name").get<std::string>(), network_from_json(entry));
    }
    file.metadata = j.value("metadata", json::object());
    return file;
  } catch (const json::exception& e) {
    throw FormatError(std::string("weight file: ") + e.what());
  }
}

void save_weight_file(const std::filesystem::path& path, const WeightFile& file) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidInput("cannot write " + path.string());
  out << weight_file_to_json(file).dump() << '\n';
}

WeightFile load_weight_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  try {
    return weight_file_from_json(j);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace icpguard::nnet

#include "icpguard/reconstruct.hpp"

#include <cmath>
#include <span>

#include "icpguard/errors.hpp"
#include "icpguard/kdtree.hpp"
#include "icpguard/rng.hpp"

namespace icpguard::recon {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using nnet::Activation;
using nnet::Network;

void ReconHyper::validate() const {
  if (n_centers < 1 || n_proxies < 1 || patch_size < 1 || n_interp < 1 || feature_dim < 1 ||
      edge_k < 1 || hidden < 1) {
    throw InvalidInput("reconstruction hyperparameters must be >= 1");
  }
  if (n_interp > n_centers) throw InvalidInput("reconstruction: K must not exceed I");
  if (!(coord_scale > 0.0) || !std::isfinite(coord_scale)) {
    throw InvalidInput("reconstruction: coord_scale must be positive");
  }
}

ReconstructionModel ReconstructionModel::create(const ReconHyper& hyper, std::uint64_t seed) {
  hyper.validate();
  const std::size_t d = hyper.feature_dim, h = hyper.hidden;
  ReconstructionModel m;
  m.hyper = hyper;
  m.patch_encoder = Network::create({3, h, d}, {Activation::ReLU, Activation::ReLU}, mix_seed(seed, 1));
  m.pos_encoder = Network::create({3, h, d}, {Activation::ReLU, Activation::Identity}, mix_seed(seed, 2));
  m.enc_mixer =
      Network::create({2 * d, h, d}, {Activation::ReLU, Activation::Identity}, mix_seed(seed, 3));
  m.edge_net = Network::create({6, h, d}, {Activation::ReLU, Activation::ReLU}, mix_seed(seed, 4));
  m.fusion_scorer = Network::create({2 * d, 1}, {Activation::Identity}, mix_seed(seed, 5));
  m.fusion_combiner = Network::create({2 * d, d}, {Activation::Identity}, mix_seed(seed, 6));
  m.dec_mixer =
      Network::create({2 * d, h, d}, {Activation::ReLU, Activation::Identity}, mix_seed(seed, 7));
  m.head = Network::create({3 + d, h, h, 3}, {Activation::ReLU, Activation::ReLU, Activation::Identity},
                           mix_seed(seed, 8));
  // Start close to the identity map: small residuals, small weighted sums,
  // near-zero displacements.
  m.enc_mixer.layers.back().weight *= 0.1;
  m.dec_mixer.layers.back().weight *= 0.1;
  m.fusion_scorer.layers.back().weight /= static_cast<double>(hyper.n_proxies);
  m.head.layers.back().weight *= 0.01;
  return m;
}

void ReconstructionModel::validate() const {
  hyper.validate();
  const std::size_t d = hyper.feature_dim;
  auto check = [](const Network& net, std::size_t in, std::size_t out, const char* name) {
    net.validate();
    if (net.input_dim() != in || net.output_dim() != out) {
      throw InvalidInput(std::string("reconstruction: network '") + name + "' has wrong dimensions");
    }
  };
  check(patch_encoder, 3, d, "patch_encoder");
  check(pos_encoder, 3, d, "pos_encoder");
  check(enc_mixer, 2 * d, d, "enc_mixer");
  check(edge_net, 6, d, "edge_net");
  check(fusion_scorer, 2 * d, 1, "fusion_scorer");
  check(fusion_combiner, 2 * d, d, "fusion_combiner");
  check(dec_mixer, 2 * d, d, "dec_mixer");
  check(head, 3 + d, 3, "head");
}

PatchSet patchify(const PointCloud& P, std::size_t n_centers, std::size_t patch_size) {
  if (n_centers == 0 || patch_size == 0) throw InvalidInput("patchify: I and m must be >= 1");
  if (P.size() < n_centers) throw InvalidInput("patchify: cloud has fewer points than centers");
  PatchSet ps;
  const auto idx = farthest_point_sample(P, n_centers, 0);
  const KdTree tree(P);
  const std::size_t m = std::min(patch_size, P.size());
  ps.members.reserve(n_centers);
  for (std::size_t i : idx) {
    ps.centers.points.push_back(P[i]);
    std::vector<std::size_t> members;
    members.reserve(m);
    for (const auto& nb : tree.knn(P[i], m)) members.push_back(nb.index);
    ps.members.push_back(std::move(members));
  }
  return ps;
}

namespace {

// Everything that depends only on the inputs, not on the weights.
struct Prepared {
  PatchSet patches;
  MatrixXd rel;       // 3 x (I*m), scaled offsets from the patch center
  MatrixXd centers;   // 3 x I, scaled
  std::vector<std::size_t> proxy_index;
  MatrixXd edge_in;   // 6 x (J*k), scaled
  std::size_t I = 0, m = 0, J = 0, k = 0;
};

MatrixXd edge_inputs(const PointCloud& P_M, const std::vector<std::size_t>& proxy_index,
                     std::size_t k, double scale) {
  const KdTree tree(P_M);
  MatrixXd in(6, static_cast<Index>(proxy_index.size() * k));
  Index col = 0;
  for (std::size_t i : proxy_index) {
    const auto nbs = tree.knn(P_M[i], k);
    for (const auto& nb : nbs) {
      in.col(col).head<3>() = P_M[i] * scale;
      in.col(col).tail<3>() = (P_M[nb.index] - P_M[i]) * scale;
      ++col;
    }
  }
  return in;
}

Prepared prepare(const ReconHyper& hp, const PointCloud& P, const PointCloud& P_M) {
  if (P_M.size() < hp.n_proxies) throw InvalidInput("reconstruction: mesh cloud has fewer points than J");
  Prepared pr;
  pr.patches = patchify(P, hp.n_centers, hp.patch_size);
  pr.I = hp.n_centers;
  pr.m = pr.patches.members.front().size();
  pr.rel.resize(3, static_cast<Index>(pr.I * pr.m));
  pr.centers.resize(3, static_cast<Index>(pr.I));
  for (std::size_t i = 0; i < pr.I; ++i) {
    const Point3& c = pr.patches.centers[i];
    pr.centers.col(static_cast<Index>(i)) = c * hp.coord_scale;
    for (std::size_t a = 0; a < pr.m; ++a) {
      pr.rel.col(static_cast<Index>(i * pr.m + a)) = (P[pr.patches.members[i][a]] - c) * hp.coord_scale;
    }
  }
  pr.J = hp.n_proxies;
  pr.k = std::min(hp.edge_k, P_M.size());
  pr.proxy_index = farthest_point_sample(P_M, pr.J, 0);
  pr.edge_in = edge_inputs(P_M, pr.proxy_index, pr.k, hp.coord_scale);
  return pr;
}

// Column-block max pool: block b spans columns [b*w, (b+1)*w).
MatrixXd block_max(const MatrixXd& x, std::size_t blocks, std::size_t w, std::vector<Index>& arg) {
  MatrixXd out(x.rows(), static_cast<Index>(blocks));
  arg.assign(static_cast<std::size_t>(x.rows()) * blocks, 0);
  for (std::size_t b = 0; b < blocks; ++b) {
    for (Index r = 0; r < x.rows(); ++r) {
      Index best = static_cast<Index>(b * w);
      double v = x(r, best);
      for (std::size_t a = 1; a < w; ++a) {
        const Index c = static_cast<Index>(b * w + a);
        if (x(r, c) > v) {
          v = x(r, c);
          best = c;
        }
      }
      out(r, static_cast<Index>(b)) = v;
      arg[b * static_cast<std::size_t>(x.rows()) + static_cast<std::size_t>(r)] = best;
    }
  }
  return out;
}

MatrixXd block_max_back(const MatrixXd& g, Index cols, const std::vector<Index>& arg) {
  MatrixXd out = MatrixXd::Zero(g.rows(), cols);
  for (Index b = 0; b < g.cols(); ++b) {
    for (Index r = 0; r < g.rows(); ++r) {
      out(r, arg[static_cast<std::size_t>(b * g.rows() + r)]) += g(r, b);
    }
  }
  return out;
}

MatrixXd with_context(const MatrixXd& t) {
  MatrixXd x(2 * t.rows(), t.cols());
  x.topRows(t.rows()) = t;
  x.bottomRows(t.rows()) = t.rowwise().mean().replicate(1, t.cols());
  return x;
}

// Gradient w.r.t. t of a loss through with_context, given the gradient w.r.t. its output.
MatrixXd with_context_back(const MatrixXd& gx, Index d) {
  MatrixXd g = gx.topRows(d);
  g.colwise() += gx.bottomRows(d).rowwise().sum() / static_cast<double>(gx.cols());
  return g;
}

MatrixXd pair_inputs(const MatrixXd& V, const MatrixXd& O) {
  const Index d = V.rows(), I = V.cols(), J = O.cols();
  MatrixXd x(2 * d, I * J);
  for (Index i = 0; i < I; ++i) {
    for (Index j = 0; j < J; ++j) {
      x.col(i * J + j).head(d) = V.col(i);
      x.col(i * J + j).tail(d) = O.col(j);
    }
  }
  return x;
}

struct Trace {
  nnet::ForwardCache patch, pos, emix, edge, score, comb, dmix, head;
  std::vector<Index> patch_arg, edge_arg;
  MatrixXd T, V, O, W, S, Uc, H, disp;  // disp: 3 x I, meters
};

void run_forward(const ReconstructionModel& model, const Prepared& pr, Trace& tr) {
  const double scale = model.hyper.coord_scale;
  const MatrixXd E = nnet::forward_batch(model.patch_encoder, pr.rel, tr.patch);
  tr.T = block_max(E, pr.I, pr.m, tr.patch_arg) + nnet::forward_batch(model.pos_encoder, pr.centers, tr.pos);
  tr.V = tr.T + nnet::forward_batch(model.enc_mixer, with_context(tr.T), tr.emix);

  const MatrixXd Ee = nnet::forward_batch(model.edge_net, pr.edge_in, tr.edge);
  tr.O = block_max(Ee, pr.J, pr.k, tr.edge_arg);

  const MatrixXd w = nnet::forward_batch(model.fusion_scorer, pair_inputs(tr.V, tr.O), tr.score);
  tr.W = Eigen::Map<const MatrixXd>(w.data(), static_cast<Index>(pr.J), static_cast<Index>(pr.I))
             .transpose();  // I x J
  tr.S = tr.O * tr.W.transpose();
  MatrixXd xc(2 * tr.V.rows(), tr.V.cols());
  xc << tr.V, tr.S;
  tr.Uc = nnet::forward_batch(model.fusion_combiner, xc, tr.comb);
  tr.H = tr.Uc + nnet::forward_batch(model.dec_mixer, with_context(tr.Uc), tr.dmix);

  MatrixXd xh(3 + tr.H.rows(), tr.H.cols());
  xh << pr.centers, tr.H;
  tr.disp = nnet::forward_batch(model.head, xh, tr.head) / scale;
}

// grads are ordered as in networks_of().
void run_backward(const ReconstructionModel& model, const Prepared& pr, const Trace& tr,
                  const MatrixXd& g_disp, std::vector<nnet::Gradients>& grads) {
  const Index d = static_cast<Index>(model.hyper.feature_dim);
  const MatrixXd g_xh = nnet::backward(model.head, tr.head, g_disp / model.hyper.coord_scale, grads[7]);
  const MatrixXd g_H = g_xh.bottomRows(d);
  const MatrixXd g_Uc = g_H + with_context_back(nnet::backward(model.dec_mixer, tr.dmix, g_H, grads[6]), d);
  const MatrixXd g_xc = nnet::backward(model.fusion_combiner, tr.comb, g_Uc, grads[5]);
  MatrixXd g_V = g_xc.topRows(d);
  const MatrixXd g_S = g_xc.bottomRows(d);

  const MatrixXd g_W = g_S.transpose() * tr.O;  // I x J
  MatrixXd g_O = g_S * tr.W;
  MatrixXd g_w(1, g_W.size());
  const Index I = g_W.rows(), J = g_W.cols();
  for (Index i = 0; i < I; ++i) {
    for (Index j = 0; j < J; ++j) g_w(0, i * J + j) = g_W(i, j);
  }
  const MatrixXd g_pairs = nnet::backward(model.fusion_scorer, tr.score, g_w, grads[4]);
  for (Index i = 0; i < I; ++i) {
    for (Index j = 0; j < J; ++j) {
      g_V.col(i) += g_pairs.col(i * J + j).head(d);
      g_O.col(j) += g_pairs.col(i * J + j).tail(d);
    }
  }
  nnet::backward(model.edge_net, tr.edge, block_max_back(g_O, pr.edge_in.cols(), tr.edge_arg), grads[3]);

  const MatrixXd g_T = g_V + with_context_back(nnet::backward(model.enc_mixer, tr.emix, g_V, grads[2]), d);
  nnet::backward(model.pos_encoder, tr.pos, g_T, grads[1]);
  nnet::backward(model.patch_encoder, tr.patch, block_max_back(g_T, pr.rel.cols(), tr.patch_arg), grads[0]);
}

const std::vector<const char*>& network_names() {
  static const std::vector<const char*> names = {"patch_encoder", "pos_encoder",     "enc_mixer",
                                                 "edge_net",      "fusion_scorer",   "fusion_combiner",
                                                 "dec_mixer",     "head"};
  return names;
}

PointCloud apply_field(const PointCloud& P, const PropagationWeights& pw, const MatrixXd& disp) {
  PointCloud out = P;
  for (std::size_t n = 0; n < P.size(); ++n) {
    for (const auto& [c, w] : pw.rows[n]) out.points[n] += w * disp.col(static_cast<Index>(c));
  }
  return out;
}

struct Item {
  Prepared pr;
  PropagationWeights pw;
  KdTree clean_index;
};

Item make_item(const ReconHyper& hp, const ReconSample& s) {
  if (s.clean.empty()) throw InvalidDataset("reconstruction: empty clean cloud");
  Item it{prepare(hp, s.corrupted, s.mesh), {}, KdTree(s.clean)};
  it.pw = propagation_weights(s.corrupted, it.pr.patches.centers, hp.n_interp);
  return it;
}

// Adds this sample's parameter gradients to grads and returns its loss.
double accumulate(const ReconstructionModel& model, const Item& it, const ReconSample& s, Trace& tr,
                  std::vector<nnet::Gradients>& grads) {
  run_forward(model, it.pr, tr);
  const PointCloud out = apply_field(s.corrupted, it.pw, tr.disp);
  MatrixXd pred(3, static_cast<Index>(out.size()));
  for (std::size_t n = 0; n < out.size(); ++n) pred.col(static_cast<Index>(n)) = out[n];
  const auto cv = nnet::chamfer_loss(pred, s.clean, it.clean_index);
  MatrixXd g_disp = MatrixXd::Zero(3, static_cast<Index>(it.pr.I));
  for (std::size_t n = 0; n < out.size(); ++n) {
    for (const auto& [c, w] : it.pw.rows[n]) {
      g_disp.col(static_cast<Index>(c)) += w * cv.gradient.col(static_cast<Index>(n));
    }
  }
  run_backward(model, it.pr, tr, g_disp, grads);
  return cv.loss;
}

}  // namespace

std::vector<Network*> networks_of(ReconstructionModel& m) {
  return {&m.patch_encoder, &m.pos_encoder,     &m.enc_mixer, &m.edge_net,
          &m.fusion_scorer, &m.fusion_combiner, &m.dec_mixer, &m.head};
}

SampleGradient sample_gradient(const ReconstructionModel& model, const ReconSample& sample) {
  model.validate();
  const Item it = make_item(model.hyper, sample);
  SampleGradient out;
  auto& m = const_cast<ReconstructionModel&>(model);
  for (const Network* net : networks_of(m)) out.grads.push_back(nnet::Gradients::zeros_like(*net));
  Trace tr;
  out.loss = accumulate(model, it, sample, tr, out.grads);
  return out;
}

TokenSet encode_patches(const ReconstructionModel& model, const PatchSet& patches, const PointCloud& P,
                        bool use_mixer) {
  if (patches.members.size() != patches.centers.size() || patches.members.empty()) {
    throw InvalidInput("encode_patches: malformed patch set");
  }
  const std::size_t d = model.hyper.feature_dim;
  if (model.patch_encoder.output_dim() != d || model.pos_encoder.output_dim() != d ||
      model.patch_encoder.input_dim() != 3 || model.pos_encoder.input_dim() != 3) {
    throw InvalidInput("encode_patches: encoder dimensions do not match d");
  }
  const double s = model.hyper.coord_scale;
  const std::size_t I = patches.centers.size();
  TokenSet out;
  out.tokens.resize(static_cast<Index>(d), static_cast<Index>(I));
  for (std::size_t i = 0; i < I; ++i) {
    const auto& mem = patches.members[i];
    if (mem.empty()) throw InvalidInput("encode_patches: empty patch");
    MatrixXd rel(3, static_cast<Index>(mem.size()));
    for (std::size_t a = 0; a < mem.size(); ++a) {
      rel.col(static_cast<Index>(a)) = (P[mem[a]] - patches.centers[i]) * s;
    }
    out.tokens.col(static_cast<Index>(i)) =
        nnet::pool_max(nnet::forward_batch(model.patch_encoder, rel)) +
        nnet::forward(model.pos_encoder, patches.centers[i] * s);
  }
  if (use_mixer) {
    if (model.enc_mixer.input_dim() != 2 * d || model.enc_mixer.output_dim() != d) {
      throw InvalidInput("encode_patches: mixer dimensions do not match d");
    }
    out.tokens += nnet::forward_batch(model.enc_mixer, with_context(out.tokens));
  }
  return out;
}

ProxySet mesh_proxies(const ReconstructionModel& model, const PointCloud& P_M, std::size_t n_proxies) {
  if (n_proxies == 0 || P_M.size() < n_proxies) {
    throw InvalidInput("mesh_proxies: need 1 <= J <= |P_M|");
  }
  if (model.edge_net.input_dim() != 6) throw InvalidInput("mesh_proxies: edge network must take 6 inputs");
  ProxySet ps;
  ps.source_index = farthest_point_sample(P_M, n_proxies, 0);
  const std::size_t k = std::min(model.hyper.edge_k, P_M.size());
  const MatrixXd e = nnet::forward_batch(model.edge_net, edge_inputs(P_M, ps.source_index, k,
                                                                     model.hyper.coord_scale));
  std::vector<Index> arg;
  ps.features = block_max(e, n_proxies, k, arg);
  return ps;
}

FusedTokens fuse(const ReconstructionModel& model, const TokenSet& V, const ProxySet& O, bool use_mixer) {
  const Index d = V.tokens.rows();
  if (O.features.rows() != d || model.fusion_scorer.input_dim() != static_cast<std::size_t>(2 * d) ||
      model.fusion_scorer.output_dim() != 1 ||
      model.fusion_combiner.input_dim() != static_cast<std::size_t>(2 * d) ||
      model.fusion_combiner.output_dim() != static_cast<std::size_t>(d)) {
    throw InvalidInput("fuse: dimension mismatch");
  }
  const Index I = V.tokens.cols(), J = O.features.cols();
  FusedTokens f;
  const MatrixXd w = nnet::forward_batch(model.fusion_scorer, pair_inputs(V.tokens, O.features));
  f.weights = Eigen::Map<const MatrixXd>(w.data(), J, I).transpose();
  MatrixXd xc(2 * d, I);
  xc << V.tokens, O.features * f.weights.transpose();
  f.tokens = nnet::forward_batch(model.fusion_combiner, xc);
  if (use_mixer) f.tokens += nnet::forward_batch(model.dec_mixer, with_context(f.tokens));
  return f;
}

DisplacementField predict_displacements(const ReconstructionModel& model, const FusedTokens& fused,
                                        const PointCloud& centers) {
  if (static_cast<std::size_t>(fused.tokens.cols()) != centers.size()) {
    throw InvalidInput("predict_displacements: token count differs from center count");
  }
  if (model.head.input_dim() != static_cast<std::size_t>(3 + fused.tokens.rows())) {
    throw InvalidInput("predict_displacements: head dimension mismatch");
  }
  const double s = model.hyper.coord_scale;
  MatrixXd xh(3 + fused.tokens.rows(), fused.tokens.cols());
  for (std::size_t i = 0; i < centers.size(); ++i) {
    xh.col(static_cast<Index>(i)).head<3>() = centers[i] * s;
  }
  xh.bottomRows(fused.tokens.rows()) = fused.tokens;
  const MatrixXd out = nnet::forward_batch(model.head, xh) / s;
  DisplacementField field;
  for (Index i = 0; i < out.cols(); ++i) field.vectors.emplace_back(out.col(i));
  return field;
}

PropagationWeights propagation_weights(const PointCloud& P, const PointCloud& centers, std::size_t K) {
  if (K == 0 || K > centers.size()) throw InvalidInput("propagate: need 1 <= K <= number of centers");
  const KdTree tree(centers);
  PropagationWeights pw;
  pw.rows.resize(P.size());
  for (std::size_t n = 0; n < P.size(); ++n) {
    const auto nbs = tree.knn(P[n], K);
    auto& row = pw.rows[n];
    if (std::sqrt(nbs.front().dist2) < 1e-9) {
      row.emplace_back(nbs.front().index, 1.0);
      continue;
    }
    double total = 0.0;
    for (const auto& nb : nbs) {
      const double a = 1.0 / std::sqrt(nb.dist2);
      row.emplace_back(nb.index, a);
      total += a;
    }
    for (auto& e : row) e.second /= total;
  }
  return pw;
}

PointCloud propagate(const PointCloud& P, const PointCloud& centers, const DisplacementField& field,
                     std::size_t K) {
  if (field.vectors.size() != centers.size()) {
    throw InvalidInput("propagate: field length differs from center count");
  }
  MatrixXd disp(3, static_cast<Index>(centers.size()));
  for (std::size_t i = 0; i < centers.size(); ++i) disp.col(static_cast<Index>(i)) = field.vectors[i];
  return apply_field(P, propagation_weights(P, centers, K), disp);
}

PointCloud reconstruct(const ReconstructionModel& model, const PointCloud& P, const PointCloud& P_M) {
  const auto& hp = model.hyper;
  const PatchSet patches = patchify(P, hp.n_centers, hp.patch_size);
  const TokenSet V = encode_patches(model, patches, P);
  const ProxySet O = mesh_proxies(model, P_M, hp.n_proxies);
  const FusedTokens U = fuse(model, V, O);
  const DisplacementField field = predict_displacements(model, U, patches.centers);
  return propagate(P, patches.centers, field, hp.n_interp);
}

ReconTrainResult train_reconstruction(const std::vector<ReconSample>& data, const ReconTrainConfig& config,
                                      const nnet::MixingSchedule* schedule,
                                      const std::vector<std::size_t>& sources) {
  if (data.empty()) throw InvalidDataset("reconstruction: empty training set");
  if (!sources.empty() && sources.size() != data.size()) {
    throw InvalidDataset("reconstruction: sources length differs from dataset size");
  }
  config.hyper.validate();
  std::vector<Item> items;
  items.reserve(data.size());
  for (const auto& s : data) items.push_back(make_item(config.hyper, s));

  ReconstructionModel model = ReconstructionModel::create(config.hyper, config.train.seed);
  auto nets = networks_of(model);
  const std::vector<std::size_t> src = sources.empty() ? std::vector<std::size_t>(data.size(), 0) : sources;

  auto batch_loss = [&](std::span<const std::size_t> batch, std::vector<nnet::Gradients>& grads) {
    double total = 0.0;
    Trace tr;
    for (std::size_t idx : batch) total += accumulate(model, items[idx], data[idx], tr, grads);
    return total;
  };

  auto cfg = config.train;
  cfg.loss = nnet::LossKind::Chamfer;
  auto report = nnet::train_networks(nets, src, batch_loss, cfg, schedule);
  return {std::move(model), std::move(report)};
}

nnet::WeightFile to_weight_file(const ReconstructionModel& model) {
  nnet::WeightFile f;
  f.model_kind = "reconstruction";
  auto& m = const_cast<ReconstructionModel&>(model);
  const auto nets = networks_of(m);
  for (std::size_t i = 0; i < nets.size(); ++i) f.networks.emplace_back(network_names()[i], *nets[i]);
  const auto& hp = model.hyper;
  f.metadata["I"] = hp.n_centers;
  f.metadata["J"] = hp.n_proxies;
  f.metadata["m"] = hp.patch_size;
  f.metadata["K"] = hp.n_interp;
  f.metadata["d"] = hp.feature_dim;
  f.metadata["edge_k"] = hp.edge_k;
  f.metadata["hidden"] = hp.hidden;
  f.metadata["coord_scale"] = hp.coord_scale;
  return f;
}

ReconstructionModel from_weight_file(const nnet::WeightFile& file) {
  if (file.model_kind != "reconstruction") {
    throw FormatError("expected a reconstruction weight file, got '" + file.model_kind + "'");
  }
  ReconstructionModel m;
  try {
    const auto& md = file.metadata;
    m.hyper.n_centers = md.at("I").get<std::size_t>();
    m.hyper.n_proxies = md.at("J").get<std::size_t>();
    m.hyper.patch_size = md.at("m").get<std::size_t>();
    m.hyper.n_interp = md.at("K").get<std::size_t>();
    m.hyper.feature_dim = md.at("d").get<std::size_t>();
    m.hyper.edge_k = md.at("edge_k").get<std::size_t>();
    m.hyper.hidden = md.at("hidden").get<std::size_t>();
    m.hyper.coord_scale = md.at("coord_scale").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("reconstruction metadata: ") + e.what());
  }
  const auto nets = networks_of(m);
  for (std::size_t i = 0; i < nets.size(); ++i) *nets[i] = file.get(network_names()[i]);
  try {
    m.validate();
  } catch (const InvalidInput& e) {
    throw FormatError(e.what());
  }
  return m;
}

}  // namespace icpguard::recon

#include "icpguard/boicp.hpp"

#include <cmath>
#include <numbers>
#include <ostream>

#include <Eigen/Cholesky>
#include <json.hpp>

#include "icpguard/metrics.hpp"
#include "icpguard/rng.hpp"

namespace icpguard::bo {

RigidTransform to_transform(const Params& p) { return from_euler(p[0], p[1], p[2], p[3], p[4], p[5]); }

void SearchBounds::validate() const {
  for (std::size_t i = 0; i < kDims; ++i) {
    if (!std::isfinite(lo[i]) || !std::isfinite(hi[i]) || !(lo[i] < hi[i])) {
      throw InvalidInput("SearchBounds: need finite min < max in every dimension");
    }
  }
}

bool SearchBounds::contains(const Params& p) const {
  for (std::size_t i = 0; i < kDims; ++i) {
    if (p[i] < lo[i] || p[i] > hi[i]) return false;
  }
  return true;
}

void BoConfig::validate() const {
  if (n_initial_random < 1 || n_iterations < 1) throw InvalidInput("BoConfig: counts must be >= 1");
  if (n_acquisition_candidates < 1) throw InvalidInput("BoConfig: need >= 1 acquisition candidate");
  for (double l : length_scales) {
    if (!(l > 0.0) || !std::isfinite(l)) throw InvalidInput("BoConfig: length-scales must be > 0");
  }
  if (!(noise >= 0.0) || !std::isfinite(noise)) throw InvalidInput("BoConfig: noise must be >= 0");
  if (refine) refine->validate();
}

ObjectiveValue objective(const PointCloud& P_M, const PointCloud& P, const KdTree& P_index,
                         const RigidTransform& T, const IcpConfig& icp_config, bool normalize_rmse,
                         const std::optional<IcpConfig>& refine) {
  if (P_M.empty() || P.empty()) throw InvalidInput("objective: clouds must be non-empty");
  ObjectiveValue out;
  try {
    out.icp = icp(P_M, P_index, T, icp_config);
    if (refine) out.icp = icp(P_M, P_index, out.icp.transform, *refine);
  } catch (const NoOverlap& e) {
    out.icp.transform = e.last_estimate();
  }
  const PointCloud aligned = apply_transform(out.icp.transform, P_M);
  out.fitness = fitness(aligned, P_index, kFitnessTau1);
  const auto rm = rmse_inlier(aligned, P_index, kRmseTau3);
  out.inlier_rmse = rm.value;
  out.icp.fitness = out.fitness;
  out.icp.inlier_rmse = rm.value;
  if (out.fitness > 0.0) {
    out.overlap_branch = true;
    out.value = out.fitness - (normalize_rmse ? rm.value / kRmseTau3 : rm.value);
  } else {
    out.value = -(aligned.centroid() - P.centroid()).norm();
  }
  return out;
}

ObjectiveValue objective(const PointCloud& P_M, const PointCloud& P, const RigidTransform& T,
                         const IcpConfig& icp_config, bool normalize_rmse) {
  if (P.empty()) throw InvalidInput("objective: clouds must be non-empty");
  const KdTree index(P);
  return objective(P_M, P, index, T, icp_config, normalize_rmse);
}

void BoTrace::write_jsonl(std::ostream& os) const {
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto& e = entries[i];
    nlohmann::json j;
    j["index"] = i;
    j["params"] = e.params;
    j["value"] = e.result.value;
    j["branch"] = e.result.overlap_branch ? "omega" : "centroid";
    j["fitness"] = e.result.fitness;
    j["inlier_rmse"] = e.result.inlier_rmse;
    j["icp_iterations"] = e.result.icp.iterations_used;
    j["phase"] = e.random_phase ? "random" : "acquisition";
    j["best"] = i == best;
    j["rmse_normalized"] = normalize_rmse;
    os << j.dump() << '\n';
  }
}

GaussianProcess::GaussianProcess(const Params& length_scales, double noise)
    : length_scales_(length_scales), noise_(noise) {}

double GaussianProcess::kernel(const Params& a, const Params& b) const {
  double s = 0.0;
  for (std::size_t i = 0; i < kDims; ++i) {
    const double d = (a[i] - b[i]) / length_scales_[i];
    s += d * d;
  }
  return std::exp(-0.5 * s);
}

void GaussianProcess::fit(const std::vector<Params>& x, const std::vector<double>& y) {
  if (x.empty() || x.size() != y.size()) throw InvalidInput("GaussianProcess: need matching non-empty data");
  const auto n = static_cast<Eigen::Index>(x.size());
  x_ = x;
  Eigen::VectorXd yv(n);
  for (Eigen::Index i = 0; i < n; ++i) yv[i] = y[static_cast<std::size_t>(i)];
  y_mean_ = yv.mean();
  const double var = (yv.array() - y_mean_).square().mean();
  y_scale_ = var > 1e-24 ? std::sqrt(var) : 1.0;
  yv = (yv.array() - y_mean_) / y_scale_;

  Eigen::MatrixXd K(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j <= i; ++j) {
      K(i, j) = K(j, i) = kernel(x[static_cast<std::size_t>(i)], x[static_cast<std::size_t>(j)]);
    }
  }
  jitter_ = 0.0;
  double extra = 1e-10;
  for (int attempt = 0; attempt < 8; ++attempt) {
    Eigen::MatrixXd Kn = K;
    Kn.diagonal().array() += noise_ + jitter_;
    Eigen::LLT<Eigen::MatrixXd> llt(Kn);
    if (llt.info() == Eigen::Success) {
      chol_l_ = llt.matrixL();
      alpha_ = llt.solve(yv);
      if (alpha_.allFinite()) return;
    }
    jitter_ = extra;
    extra *= 100.0;
  }
  throw SurrogateFailure("GaussianProcess: kernel matrix is not positive definite after jitter retries",
                         BoTrace{});
}

std::pair<double, double> GaussianProcess::predict(const Params& x) const {
  const auto n = static_cast<Eigen::Index>(x_.size());
  Eigen::VectorXd k(n);
  for (Eigen::Index i = 0; i < n; ++i) k[i] = kernel(x, x_[static_cast<std::size_t>(i)]);
  const double mean = k.dot(alpha_);
  const Eigen::VectorXd v = chol_l_.triangularView<Eigen::Lower>().solve(k);
  const double var = std::max(1.0 - v.squaredNorm(), 0.0);
  return {y_mean_ + y_scale_ * mean, y_scale_ * std::sqrt(var)};
}

double expected_improvement(double mean, double sd, double best, double xi) {
  const double imp = mean - best - xi;
  if (sd <= 1e-12) return std::max(imp, 0.0);
  const double z = imp / sd;
  const double cdf = 0.5 * std::erfc(-z / std::numbers::sqrt2);
  const double pdf = std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
  return imp * cdf + sd * pdf;
}

namespace {

Params denormalize(const Params& u, const SearchBounds& b) {
  Params p;
  for (std::size_t i = 0; i < kDims; ++i) p[i] = b.lo[i] + u[i] * (b.hi[i] - b.lo[i]);
  return p;
}

Params random_unit(Rng& rng) {
  Params u;
  for (double& v : u) v = rng.uniform();
  return u;
}

}  // namespace

BoResult bo_icp(const PointCloud& P_M, const PointCloud& P, const SearchBounds& bounds,
                const BoConfig& bo_config, const IcpConfig& icp_config) {
  bounds.validate();
  bo_config.validate();
  icp_config.validate();
  if (P_M.empty() || P.empty()) throw InvalidInput("bo_icp: clouds must be non-empty");

  const KdTree index(P);
  Rng rng(bo_config.seed);
  BoTrace trace;
  trace.normalize_rmse = bo_config.normalize_rmse;
  std::vector<Params> xs;  // normalized
  std::vector<double> ys;

  auto evaluate = [&](const Params& u, bool random_phase) {
    TraceEntry e;
    e.params = denormalize(u, bounds);
    e.result = objective(P_M, P, index, to_transform(e.params), icp_config, bo_config.normalize_rmse,
                         bo_config.refine);
    e.random_phase = random_phase;
    if (trace.entries.empty() || e.result.value > trace.entries[trace.best].result.value) {
      trace.best = trace.entries.size();
    }
    trace.entries.push_back(std::move(e));
    xs.push_back(u);
    ys.push_back(trace.entries.back().result.value);
  };

  for (std::size_t i = 0; i < bo_config.n_initial_random; ++i) evaluate(random_unit(rng), true);

  GaussianProcess gp(bo_config.length_scales, bo_config.noise);
  for (std::size_t it = 0; it < bo_config.n_iterations; ++it) {
    try {
      gp.fit(xs, ys);
    } catch (const SurrogateFailure& e) {
      throw SurrogateFailure(e.what(), trace);
    }
    const double best = trace.entries[trace.best].result.value;
    auto acquisition = [&](const Params& u) {
      const auto [m, s] = gp.predict(u);
      return expected_improvement(m, s, best, bo_config.xi);
    };
    Params cand = random_unit(rng);
    double cand_ei = acquisition(cand);
    for (std::size_t c = 1; c < bo_config.n_acquisition_candidates; ++c) {
      const Params u = random_unit(rng);
      const double ei = acquisition(u);
      if (ei > cand_ei) {
        cand = u;
        cand_ei = ei;
      }
    }
    double step = 0.05;
    for (std::size_t r = 0; r < bo_config.n_refine_steps; ++r) {
      Params u = cand;
      for (double& v : u) v = std::clamp(v + step * rng.normal(), 0.0, 1.0);
      const double ei = acquisition(u);
      if (ei > cand_ei) {
        cand = u;
        cand_ei = ei;
      } else {
        step = std::max(step * 0.9, 1e-3);
      }
    }
    evaluate(cand, false);
  }

  BoResult out;
  out.result = trace.entries[trace.best].result.icp;
  out.trace = std::move(trace);
  return out;
}

}  // namespace icpguard::bo

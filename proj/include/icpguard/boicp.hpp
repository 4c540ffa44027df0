#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <vector>

#include "icpguard/errors.hpp"
#include "icpguard/geometry.hpp"
#include "icpguard/kdtree.hpp"
#include "icpguard/registration.hpp"

namespace icpguard::bo {

inline constexpr std::size_t kDims = 6;
using Params = std::array<double, kDims>;  // x, y, z, roll, pitch, yaw

RigidTransform to_transform(const Params& p);

struct SearchBounds {
  Params lo = {-0.5, -0.5, -0.25, -3.141592653589793, -3.141592653589793, -3.141592653589793};
  Params hi = {0.5, 0.5, 0.25, 3.141592653589793, 3.141592653589793, 3.141592653589793};

  void validate() const;
  bool contains(const Params& p) const;
};

struct BoConfig {
  std::size_t n_initial_random = 15;
  std::size_t n_iterations = 45;
  Params length_scales = {0.2, 0.2, 0.2, 0.2, 0.2, 0.2};  // on [0, 1]-normalized parameters
  double noise = 1e-6;
  std::size_t n_acquisition_candidates = 1024;
  std::size_t n_refine_steps = 64;
  double xi = 0.01;
  /// Omega = F - RMSE / tau3 when set, otherwise F - RMSE (meters).
  bool normalize_rmse = true;
  /// Second ICP stage run from the first stage's result before scoring.
  std::optional<IcpConfig> refine;
  std::uint64_t seed = 0;

  void validate() const;
};

struct ObjectiveValue {
  double value = 0.0;
  bool overlap_branch = false;  // Omega when true, Omega_D- otherwise
  double fitness = 0.0;
  double inlier_rmse = 0.0;
  IcpResult icp;
};

ObjectiveValue objective(const PointCloud& P_M, const PointCloud& P, const RigidTransform& T,
                         const IcpConfig& icp_config, bool normalize_rmse = true);
ObjectiveValue objective(const PointCloud& P_M, const PointCloud& P, const KdTree& P_index,
                         const RigidTransform& T, const IcpConfig& icp_config, bool normalize_rmse = true,
                         const std::optional<IcpConfig>& refine = std::nullopt);

struct TraceEntry {
  Params params{};
  ObjectiveValue result;
  bool random_phase = true;
};

struct BoTrace {
  std::vector<TraceEntry> entries;
  std::size_t best = 0;
  bool normalize_rmse = true;

  /// One JSON object per line, one line per candidate.
  void write_jsonl(std::ostream& os) const;
};

struct BoResult {
  IcpResult result;
  BoTrace trace;
};

class SurrogateFailure : public Error {
 public:
  SurrogateFailure(const std::string& what, BoTrace trace) : Error(what), trace_(std::move(trace)) {}
  const BoTrace& trace() const { return trace_; }

 private:
  BoTrace trace_;
};

/// Gaussian-process regression with a squared-exponential kernel over
/// [0, 1]-normalized inputs. Targets are standardized internally.
class GaussianProcess {
 public:
  GaussianProcess(const Params& length_scales, double noise);

  /// Throws SurrogateFailure (with an empty trace) when the kernel matrix
  /// stays non-positive-definite after jitter retries.
  void fit(const std::vector<Params>& x, const std::vector<double>& y);
  /// Posterior mean and standard deviation in the original target units.
  std::pair<double, double> predict(const Params& x) const;
  double jitter_used() const { return jitter_; }

 private:
  double kernel(const Params& a, const Params& b) const;

  Params length_scales_;
  double noise_;
  double jitter_ = 0.0;
  double y_mean_ = 0.0, y_scale_ = 1.0;
  std::vector<Params> x_;
  Eigen::VectorXd alpha_;
  Eigen::MatrixXd chol_l_;
};

double expected_improvement(double mean, double sd, double best, double xi);

BoResult bo_icp(const PointCloud& P_M, const PointCloud& P, const SearchBounds& bounds,
                const BoConfig& bo_config, const IcpConfig& icp_config);

}  // namespace icpguard::bo

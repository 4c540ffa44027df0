#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "icpguard/errors.hpp"
#include "icpguard/geometry.hpp"
#include "icpguard/kdtree.hpp"

namespace icpguard {

class DegenerateCorrespondence : public Error {
 public:
  using Error::Error;
};

/// Too few correspondences; carries the estimate reached before the failure.
class NoOverlap : public Error {
 public:
  NoOverlap(const std::string& what, RigidTransform last)
      : Error(what), last_estimate_(std::move(last)) {}
  const RigidTransform& last_estimate() const { return last_estimate_; }

 private:
  RigidTransform last_estimate_;
};

struct IcpConfig {
  int max_iterations = 50;
  double correspondence_max_dist = 0.02;  // meters
  double convergence_tol = 1e-6;          // meters, change in inlier RMSE
  std::size_t min_correspondences = 10;

  void validate() const;
};

struct IcpResult {
  RigidTransform transform;  // source (mesh) frame -> target (scene) frame
  double fitness = 0.0;
  double inlier_rmse = 0.0;
  int iterations_used = 0;
  bool converged = false;

  // Per-iteration correspondence RMSE and a fingerprint of the matched pairs.
  std::vector<double> rmse_history;
  std::vector<std::uint64_t> correspondence_hash;
};

/// Least-squares rigid transform mapping source_pts onto target_pts (SVD,
/// reflection excluded).
RigidTransform kabsch(std::span<const Point3> source_pts, std::span<const Point3> target_pts);

/// Point-to-point ICP, matching source -> target with a hard distance cutoff.
IcpResult icp(const PointCloud& source, const PointCloud& target, const RigidTransform& init,
              const IcpConfig& config = {});
IcpResult icp(const PointCloud& source, const KdTree& target_index, const RigidTransform& init,
              const IcpConfig& config = {});

}  // namespace icpguard

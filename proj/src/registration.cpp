#include "icpguard/registration.hpp"

#include <cmath>
#include <limits>

#include <Eigen/SVD>

#include "icpguard/metrics.hpp"

namespace icpguard {

void IcpConfig::validate() const {
  if (max_iterations < 1) throw InvalidInput("IcpConfig: max_iterations must be >= 1");
  if (!(correspondence_max_dist > 0.0)) {
    throw InvalidInput("IcpConfig: correspondence_max_dist must be > 0");
  }
  if (!(convergence_tol >= 0.0)) throw InvalidInput("IcpConfig: convergence_tol must be >= 0");
}

RigidTransform kabsch(std::span<const Point3> source_pts, std::span<const Point3> target_pts) {
  if (source_pts.size() != target_pts.size()) {
    throw InvalidInput("kabsch: source and target lengths differ");
  }
  const std::size_t n = source_pts.size();
  if (n < 3) throw DegenerateCorrespondence("kabsch: fewer than 3 correspondences");

  Eigen::Vector3d cs = Eigen::Vector3d::Zero();
  Eigen::Vector3d ct = Eigen::Vector3d::Zero();
  for (std::size_t i = 0; i < n; ++i) {
    cs += source_pts[i];
    ct += target_pts[i];
  }
  cs /= static_cast<double>(n);
  ct /= static_cast<double>(n);

  Eigen::Matrix3d H = Eigen::Matrix3d::Zero();
  Eigen::Matrix3d Hs = Eigen::Matrix3d::Zero();
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::Vector3d s = source_pts[i] - cs;
    H += s * (target_pts[i] - ct).transpose();
    Hs += s * s.transpose();
  }

  // Source spread must span at least a plane for the rotation to be unique.
  Eigen::JacobiSVD<Eigen::Matrix3d> spread(Hs);
  const auto sv = spread.singularValues();
  if (!(sv(0) > 0.0) || sv(1) <= 1e-12 * sv(0)) {
    throw DegenerateCorrespondence("kabsch: source points are collinear or coincident");
  }

  Eigen::JacobiSVD<Eigen::Matrix3d> svd(H, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::Matrix3d U = svd.matrixU();
  Eigen::Matrix3d V = svd.matrixV();
  Eigen::Matrix3d D = Eigen::Matrix3d::Identity();
  if ((V * U.transpose()).determinant() < 0.0) D(2, 2) = -1.0;

  RigidTransform T;
  T.rotation = V * D * U.transpose();
  T.translation = ct - T.rotation * cs;
  return T;
}

IcpResult icp(const PointCloud& source, const PointCloud& target, const RigidTransform& init,
              const IcpConfig& config) {
  if (target.empty()) throw InvalidInput("icp: empty target cloud");
  return icp(source, KdTree(target), init, config);
}

IcpResult icp(const PointCloud& source, const KdTree& target_index, const RigidTransform& init,
              const IcpConfig& config) {
  config.validate();
  if (source.empty()) throw InvalidInput("icp: empty source cloud");
  if (target_index.size() == 0) throw InvalidInput("icp: empty target cloud");

  const double max_d2 = config.correspondence_max_dist * config.correspondence_max_dist;
  IcpResult result;
  RigidTransform T = init;
  std::vector<Point3> src;
  std::vector<Point3> dst;
  src.reserve(source.size());
  dst.reserve(source.size());

  double prev_rmse = std::numeric_limits<double>::infinity();
  for (int iter = 0; iter < config.max_iterations; ++iter) {
    src.clear();
    dst.clear();
    double sum_d2 = 0.0;
    std::uint64_t hash = 1469598103934665603ULL;
    for (std::size_t i = 0; i < source.size(); ++i) {
      const Point3 q = T.apply(source[i]);
      const auto nn = target_index.nearest(q, max_d2);
      if (!nn) continue;
      src.push_back(q);
      dst.push_back(target_index.point(nn->index));
      sum_d2 += nn->dist2;
      hash = (hash ^ (i * 0x100000001B3ULL + nn->index)) * 1099511628211ULL;
    }
    if (src.size() < config.min_correspondences) {
      throw NoOverlap("icp: " + std::to_string(src.size()) + " correspondences at iteration " +
                          std::to_string(iter) + ", need " +
                          std::to_string(config.min_correspondences),
                      T);
    }
    const double rmse = std::sqrt(sum_d2 / static_cast<double>(src.size()));
    result.rmse_history.push_back(rmse);
    result.correspondence_hash.push_back(hash);
    if (std::abs(prev_rmse - rmse) < config.convergence_tol) {
      result.converged = true;
      break;
    }
    prev_rmse = rmse;
    T = compose(kabsch(src, dst), T);
    result.iterations_used = iter + 1;
  }

  T.rotation = orthonormalize(T.rotation);
  result.transform = T;
  const PointCloud aligned = apply_transform(T, source);
  result.fitness = fitness(aligned, target_index, config.correspondence_max_dist);
  result.inlier_rmse = rmse_inlier(aligned, target_index, config.correspondence_max_dist).value;
  return result;
}

}  // namespace icpguard

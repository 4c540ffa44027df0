#pragma once

#include "icpguard/geometry.hpp"
#include "icpguard/kdtree.hpp"

namespace icpguard {

// Alignment-quality thresholds (meters).
inline constexpr double kFitnessTau1 = 0.01;
inline constexpr double kFitnessTau2 = 0.02;
inline constexpr double kRmseTau3 = 0.01;

/// Fraction of mesh points whose nearest scene point is strictly closer than tau.
double fitness(const PointCloud& mesh, const PointCloud& scene, double tau);
double fitness(const PointCloud& mesh, const KdTree& scene_index, double tau);

/// Inlier RMSE. When no mesh point has a neighbor within tau, value is tau
/// and no_inliers is set, so downstream feature vectors stay bounded.
struct InlierRmse {
  double value = 0.0;
  bool no_inliers = false;
};
InlierRmse rmse_inlier(const PointCloud& mesh, const PointCloud& scene, double tau);
InlierRmse rmse_inlier(const PointCloud& mesh, const KdTree& scene_index, double tau);

/// Mean nearest-neighbor distance from each point of a into b.
double directed_distance(const PointCloud& a, const PointCloud& b);
double directed_distance(const PointCloud& a, const KdTree& b_index);

double chamfer(const PointCloud& a, const PointCloud& b);

/// Average distance of model points between the ground-truth and estimated pose.
double add_error(const PointCloud& model, const RigidTransform& gt, const RigidTransform& est);

struct AlignmentReport {
  double fitness_1cm = 0.0;
  double fitness_2cm = 0.0;
  double rmse_inlier = 0.0;
  bool rmse_no_inliers = false;
  double dist_mesh_to_scene = 0.0;
  double dist_scene_to_mesh = 0.0;
};

AlignmentReport alignment_report(const PointCloud& mesh_aligned, const PointCloud& scene);
AlignmentReport alignment_report(const PointCloud& mesh_aligned, const PointCloud& scene,
                                 const KdTree& scene_index);

}  // namespace icpguard

#include "icpguard/metrics.hpp"

#include <cmath>

#include "icpguard/errors.hpp"

namespace icpguard {

namespace {

void require_nonempty(const PointCloud& c, const char* what) {
  if (c.empty()) throw InvalidInput(std::string(what) + ": empty cloud");
}

void require_tau(double tau) {
  if (!(tau > 0.0)) throw InvalidInput("threshold tau must be > 0");
}

// Nearest-neighbor distance of every point of `from` into the index.
std::vector<double> nn_distances(const PointCloud& from, const KdTree& index) {
  if (index.size() == 0) throw InvalidInput("nearest-neighbor query into an empty cloud");
  std::vector<double> d(from.size());
  for (std::size_t i = 0; i < from.size(); ++i) {
    d[i] = std::sqrt(index.nearest(from[i])->dist2);
  }
  return d;
}

double fitness_of(const std::vector<double>& d, double tau) {
  std::size_t hits = 0;
  for (double v : d) hits += v < tau ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(d.size());
}

InlierRmse rmse_of(const std::vector<double>& d, double tau) {
  double sum = 0.0;
  std::size_t count = 0;
  for (double v : d) {
    if (v < tau) {
      sum += v * v;
      ++count;
    }
  }
  if (count == 0) return {tau, true};
  return {std::sqrt(sum / static_cast<double>(count)), false};
}

double mean_of(const std::vector<double>& d) {
  double sum = 0.0;
  for (double v : d) sum += v;
  return sum / static_cast<double>(d.size());
}

}  // namespace

double fitness(const PointCloud& mesh, const KdTree& scene_index, double tau) {
  require_nonempty(mesh, "fitness");
  require_tau(tau);
  return fitness_of(nn_distances(mesh, scene_index), tau);
}

double fitness(const PointCloud& mesh, const PointCloud& scene, double tau) {
  require_nonempty(mesh, "fitness");
  require_nonempty(scene, "fitness");
  return fitness(mesh, KdTree(scene), tau);
}

InlierRmse rmse_inlier(const PointCloud& mesh, const KdTree& scene_index, double tau) {
  require_nonempty(mesh, "rmse_inlier");
  require_tau(tau);
  return rmse_of(nn_distances(mesh, scene_index), tau);
}

InlierRmse rmse_inlier(const PointCloud& mesh, const PointCloud& scene, double tau) {
  require_nonempty(mesh, "rmse_inlier");
  require_nonempty(scene, "rmse_inlier");
  return rmse_inlier(mesh, KdTree(scene), tau);
}

double directed_distance(const PointCloud& a, const KdTree& b_index) {
  require_nonempty(a, "directed_distance");
  return mean_of(nn_distances(a, b_index));
}

double directed_distance(const PointCloud& a, const PointCloud& b) {
  require_nonempty(a, "directed_distance");
  require_nonempty(b, "directed_distance");
  return directed_distance(a, KdTree(b));
}

double chamfer(const PointCloud& a, const PointCloud& b) {
  return directed_distance(a, b) + directed_distance(b, a);
}

double add_error(const PointCloud& model, const RigidTransform& gt, const RigidTransform& est) {
  require_nonempty(model, "add_error");
  double sum = 0.0;
  for (const auto& p : model.points) sum += (gt.apply(p) - est.apply(p)).norm();
  return sum / static_cast<double>(model.size());
}

AlignmentReport alignment_report(const PointCloud& mesh_aligned, const PointCloud& scene,
                                 const KdTree& scene_index) {
  require_nonempty(mesh_aligned, "alignment_report");
  require_nonempty(scene, "alignment_report");
  const auto d = nn_distances(mesh_aligned, scene_index);
  AlignmentReport r;
  r.fitness_1cm = fitness_of(d, kFitnessTau1);
  r.fitness_2cm = fitness_of(d, kFitnessTau2);
  const auto rmse = rmse_of(d, kRmseTau3);
  r.rmse_inlier = rmse.value;
  r.rmse_no_inliers = rmse.no_inliers;
  r.dist_mesh_to_scene = mean_of(d);
  r.dist_scene_to_mesh = directed_distance(scene, KdTree(mesh_aligned));
  return r;
}

AlignmentReport alignment_report(const PointCloud& mesh_aligned, const PointCloud& scene) {
  require_nonempty(scene, "alignment_report");
  return alignment_report(mesh_aligned, scene, KdTree(scene));
}

}  // namespace icpguard

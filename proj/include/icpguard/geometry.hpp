#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace icpguard {

using Point3 = Eigen::Vector3d;

/// Ordered list of 3-D points in meters. Order is part of the value: every
/// operation that maps a cloud to a cloud preserves it.
struct PointCloud {
  std::vector<Point3> points;
  std::string frame_tag = "world";

  PointCloud() = default;
  explicit PointCloud(std::vector<Point3> pts, std::string tag = "world")
      : points(std::move(pts)), frame_tag(std::move(tag)) {}

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  const Point3& operator[](std::size_t i) const { return points[i]; }
  Point3& operator[](std::size_t i) { return points[i]; }
  auto begin() const { return points.begin(); }
  auto end() const { return points.end(); }

  std::span<const Point3> span() const { return points; }
  Point3 centroid() const;
};

/// Rotation + translation acting on column vectors: p' = R p + t.
struct RigidTransform {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  static RigidTransform identity() { return {}; }
  static RigidTransform from_translation(const Eigen::Vector3d& t) {
    RigidTransform out;
    out.translation = t;
    return out;
  }

  Point3 apply(const Point3& p) const { return rotation * p + translation; }
  Eigen::Matrix4d matrix() const;

  // R^T R = I and det R = +1, each within tol.
  bool is_valid(double tol = 1e-9) const;
};

struct TriangleMesh {
  std::vector<Point3> vertices;
  std::vector<std::array<int, 3>> faces;

  double triangle_area(std::size_t face) const;
  Eigen::Vector3d face_normal(std::size_t face) const;  // unit, right-handed winding
  double surface_area() const;
  // Throws InvalidInput on out-of-range indices or zero-area faces.
  void validate() const;
};

TriangleMesh transform_mesh(const RigidTransform& T, const TriangleMesh& mesh);
TriangleMesh merge_meshes(const TriangleMesh& a, const TriangleMesh& b);

/// Area-weighted triangle choice followed by uniform barycentric sampling.
PointCloud sample_mesh(const TriangleMesh& mesh, std::size_t n, std::uint64_t seed);

/// Greedy farthest-point selection. The first index is start_index; each
/// following index maximizes the distance to the selected set, ties to the
/// lowest index.
std::vector<std::size_t> farthest_point_sample(const PointCloud& cloud, std::size_t k,
                                               std::size_t start_index = 0);

/// Indices of the k nearest points sorted by distance, ties by index.
std::vector<std::size_t> k_nearest(const PointCloud& cloud, const Point3& query, std::size_t k);

PointCloud apply_transform(const RigidTransform& T, const PointCloud& cloud);

/// Rotation Rz(yaw) * Ry(pitch) * Rx(roll), translation (x, y, z).
RigidTransform from_euler(double x, double y, double z, double roll, double pitch, double yaw);

struct EulerPose {
  double x = 0, y = 0, z = 0, roll = 0, pitch = 0, yaw = 0;
};
EulerPose to_euler(const RigidTransform& T);

/// compose(A, B) applies B first, then A.
RigidTransform compose(const RigidTransform& A, const RigidTransform& B);
RigidTransform invert(const RigidTransform& T);

/// Projects a near-rotation back onto SO(3) (SVD, det +1).
Eigen::Matrix3d orthonormalize(const Eigen::Matrix3d& R);

}  // namespace icpguard

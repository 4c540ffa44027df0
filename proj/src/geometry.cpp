#include "icpguard/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/SVD>

#include "icpguard/errors.hpp"
#include "icpguard/kdtree.hpp"
#include "icpguard/rng.hpp"

namespace icpguard {

Point3 PointCloud::centroid() const {
  if (points.empty()) throw InvalidInput("centroid of an empty cloud");
  Point3 sum = Point3::Zero();
  for (const auto& p : points) sum += p;
  return sum / static_cast<double>(points.size());
}

Eigen::Matrix4d RigidTransform::matrix() const {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.topLeftCorner<3, 3>() = rotation;
  m.topRightCorner<3, 1>() = translation;
  return m;
}

bool RigidTransform::is_valid(double tol) const {
  if (!rotation.allFinite() || !translation.allFinite()) return false;
  const Eigen::Matrix3d gram = rotation.transpose() * rotation - Eigen::Matrix3d::Identity();
  if (gram.cwiseAbs().maxCoeff() > tol) return false;
  return std::abs(rotation.determinant() - 1.0) <= tol;
}

double TriangleMesh::triangle_area(std::size_t face) const {
  const auto& f = faces[face];
  const Point3& a = vertices[f[0]];
  const Point3& b = vertices[f[1]];
  const Point3& c = vertices[f[2]];
  return 0.5 * (b - a).cross(c - a).norm();
}

Eigen::Vector3d TriangleMesh::face_normal(std::size_t face) const {
  const auto& f = faces[face];
  const Point3& a = vertices[f[0]];
  const Point3& b = vertices[f[1]];
  const Point3& c = vertices[f[2]];
  return (b - a).cross(c - a).normalized();
}

double TriangleMesh::surface_area() const {
  double total = 0.0;
  for (std::size_t i = 0; i < faces.size(); ++i) total += triangle_area(i);
  return total;
}

void TriangleMesh::validate() const {
  if (vertices.empty() || faces.empty()) throw InvalidInput("mesh has no vertices or faces");
  const int nv = static_cast<int>(vertices.size());
  for (std::size_t i = 0; i < faces.size(); ++i) {
    for (int idx : faces[i]) {
      if (idx < 0 || idx >= nv) {
        throw InvalidInput("face " + std::to_string(i) + " references vertex " +
                           std::to_string(idx) + " out of range");
      }
    }
    if (!(triangle_area(i) > 0.0)) {
      throw InvalidInput("face " + std::to_string(i) + " has zero area");
    }
  }
  for (const auto& v : vertices) {
    if (!v.allFinite()) throw InvalidInput("mesh vertex is not finite");
  }
}

TriangleMesh transform_mesh(const RigidTransform& T, const TriangleMesh& mesh) {
  TriangleMesh out = mesh;
  for (auto& v : out.vertices) v = T.apply(v);
  return out;
}

TriangleMesh merge_meshes(const TriangleMesh& a, const TriangleMesh& b) {
  TriangleMesh out = a;
  const int offset = static_cast<int>(a.vertices.size());
  out.vertices.insert(out.vertices.end(), b.vertices.begin(), b.vertices.end());
  for (auto f : b.faces) {
    for (int& i : f) i += offset;
    out.faces.push_back(f);
  }
  return out;
}

PointCloud sample_mesh(const TriangleMesh& mesh, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw InvalidInput("sample_mesh: n must be >= 1");
  if (mesh.faces.empty() || mesh.vertices.empty()) throw InvalidInput("sample_mesh: empty mesh");
  const int nv = static_cast<int>(mesh.vertices.size());
  std::vector<double> cumulative(mesh.faces.size());
  double total = 0.0;
  for (std::size_t i = 0; i < mesh.faces.size(); ++i) {
    for (int idx : mesh.faces[i]) {
      if (idx < 0 || idx >= nv) throw InvalidInput("sample_mesh: face index out of range");
    }
    total += mesh.triangle_area(i);
    cumulative[i] = total;
  }
  if (!(total > 0.0)) throw InvalidInput("sample_mesh: all faces are degenerate");

  Rng rng(seed);
  PointCloud out;
  out.frame_tag = "mesh";
  out.points.reserve(n);
  for (std::size_t s = 0; s < n; ++s) {
    const double u = rng.uniform() * total;
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
    std::size_t face = static_cast<std::size_t>(it - cumulative.begin());
    if (face >= mesh.faces.size()) face = mesh.faces.size() - 1;
    // Zero-area faces have zero-width intervals and are never selected.
    const auto& f = mesh.faces[face];
    const double r1 = std::sqrt(rng.uniform());
    const double r2 = rng.uniform();
    out.points.push_back((1.0 - r1) * mesh.vertices[f[0]] + r1 * (1.0 - r2) * mesh.vertices[f[1]] +
                         r1 * r2 * mesh.vertices[f[2]]);
  }
  return out;
}

std::vector<std::size_t> farthest_point_sample(const PointCloud& cloud, std::size_t k,
                                               std::size_t start_index) {
  const std::size_t n = cloud.size();
  if (k == 0) throw InvalidInput("farthest_point_sample: k must be >= 1");
  if (k > n) {
    throw InvalidInput("farthest_point_sample: k=" + std::to_string(k) + " exceeds cloud size " +
                       std::to_string(n));
  }
  if (start_index >= n) throw InvalidInput("farthest_point_sample: start index out of range");

  std::vector<std::size_t> selected;
  selected.reserve(k);
  std::vector<double> min_d2(n, std::numeric_limits<double>::infinity());
  std::size_t current = start_index;
  for (std::size_t step = 0; step < k; ++step) {
    selected.push_back(current);
    const Point3& c = cloud[current];
    std::size_t best = 0;
    double best_d2 = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d2 = (cloud[i] - c).squaredNorm();
      if (d2 < min_d2[i]) min_d2[i] = d2;
      if (min_d2[i] > best_d2) {
        best_d2 = min_d2[i];
        best = i;
      }
    }
    current = best;
  }
  return selected;
}

std::vector<std::size_t> k_nearest(const PointCloud& cloud, const Point3& query, std::size_t k) {
  if (cloud.empty()) throw InvalidInput("k_nearest: empty cloud");
  if (k == 0 || k > cloud.size()) throw InvalidInput("k_nearest: k must be in [1, |cloud|]");
  std::vector<Neighbor> nn;
  if (cloud.size() > 1000) {
    nn = KdTree(cloud).knn(query, k);
  } else {
    nn.reserve(cloud.size());
    for (std::size_t i = 0; i < cloud.size(); ++i) {
      nn.push_back({i, (cloud[i] - query).squaredNorm()});
    }
    std::partial_sort(nn.begin(), nn.begin() + static_cast<std::ptrdiff_t>(k), nn.end());
    nn.resize(k);
  }
  std::vector<std::size_t> out;
  out.reserve(k);
  for (const auto& n : nn) out.push_back(n.index);
  return out;
}

PointCloud apply_transform(const RigidTransform& T, const PointCloud& cloud) {
  PointCloud out;
  out.frame_tag = cloud.frame_tag;
  out.points.reserve(cloud.size());
  for (const auto& p : cloud.points) out.points.push_back(T.apply(p));
  return out;
}

RigidTransform from_euler(double x, double y, double z, double roll, double pitch, double yaw) {
  for (double v : {x, y, z, roll, pitch, yaw}) {
    if (!std::isfinite(v)) throw InvalidInput("from_euler: non-finite input");
  }
  RigidTransform T;
  T.rotation = (Eigen::AngleAxisd(yaw, Eigen::Vector3d::UnitZ()) *
                Eigen::AngleAxisd(pitch, Eigen::Vector3d::UnitY()) *
                Eigen::AngleAxisd(roll, Eigen::Vector3d::UnitX()))
                   .toRotationMatrix();
  T.translation = {x, y, z};
  return T;
}

EulerPose to_euler(const RigidTransform& T) {
  const Eigen::Matrix3d& R = T.rotation;
  EulerPose e;
  e.x = T.translation.x();
  e.y = T.translation.y();
  e.z = T.translation.z();
  e.pitch = std::asin(std::clamp(-R(2, 0), -1.0, 1.0));
  e.roll = std::atan2(R(2, 1), R(2, 2));
  e.yaw = std::atan2(R(1, 0), R(0, 0));
  return e;
}

RigidTransform compose(const RigidTransform& A, const RigidTransform& B) {
  RigidTransform out;
  out.rotation = A.rotation * B.rotation;
  out.translation = A.rotation * B.translation + A.translation;
  return out;
}

RigidTransform invert(const RigidTransform& T) {
  RigidTransform out;
  out.rotation = T.rotation.transpose();
  out.translation = -(out.rotation * T.translation);
  return out;
}

Eigen::Matrix3d orthonormalize(const Eigen::Matrix3d& R) {
  Eigen::JacobiSVD<Eigen::Matrix3d> svd(R, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Eigen::Matrix3d U = svd.matrixU();
  const Eigen::Matrix3d V = svd.matrixV();
  if ((U * V.transpose()).determinant() < 0.0) U.col(2) *= -1.0;
  return U * V.transpose();
}

}  // namespace icpguard

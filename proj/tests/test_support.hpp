#pragma once

#include <cmath>
#include <numbers>

#include "icpguard/geometry.hpp"
#include "icpguard/rng.hpp"

namespace icpguard::testutil {

inline PointCloud random_cloud(std::size_t n, std::uint64_t seed, double extent = 1.0) {
  Rng rng(seed);
  PointCloud c;
  for (std::size_t i = 0; i < n; ++i) {
    c.points.emplace_back(rng.uniform(-extent, extent), rng.uniform(-extent, extent),
                          rng.uniform(-extent, extent));
  }
  return c;
}

inline RigidTransform random_transform(Rng& rng, double max_angle = std::numbers::pi,
                                       double max_shift = 1.0) {
  return from_euler(rng.uniform(-max_shift, max_shift), rng.uniform(-max_shift, max_shift),
                    rng.uniform(-max_shift, max_shift), rng.uniform(-max_angle, max_angle),
                    rng.uniform(-max_angle, max_angle), rng.uniform(-max_angle, max_angle));
}

inline TriangleMesh unit_cube_mesh() {
  TriangleMesh m;
  for (int i = 0; i < 8; ++i) m.vertices.emplace_back(i & 1, (i >> 1) & 1, (i >> 2) & 1);
  m.faces = {{0, 2, 1}, {1, 2, 3}, {4, 5, 6}, {5, 7, 6}, {0, 1, 4}, {1, 5, 4},
             {2, 6, 3}, {3, 6, 7}, {0, 4, 2}, {2, 4, 6}, {1, 3, 5}, {3, 7, 5}};
  return m;
}

// Points on the surface of an axis-aligned box of the given edge, centered at origin.
inline PointCloud cube_surface_cloud(std::size_t n, double edge, std::uint64_t seed) {
  TriangleMesh m = unit_cube_mesh();
  for (auto& v : m.vertices) v = (v - Eigen::Vector3d::Constant(0.5)) * edge;
  return sample_mesh(m, n, seed);
}

// Asymmetric test shape: a box with distinct side lengths plus an off-center knob.
inline PointCloud asymmetric_cloud(std::size_t n, std::uint64_t seed) {
  TriangleMesh a = unit_cube_mesh();
  for (auto& v : a.vertices) v = Eigen::Vector3d(v.x() * 0.12, v.y() * 0.07, v.z() * 0.04);
  TriangleMesh b = unit_cube_mesh();
  for (auto& v : b.vertices) v = Eigen::Vector3d(v.x() * 0.03 + 0.08, v.y() * 0.03, v.z() * 0.05 + 0.04);
  return sample_mesh(merge_meshes(a, b), n, seed);
}

}  // namespace icpguard::testutil

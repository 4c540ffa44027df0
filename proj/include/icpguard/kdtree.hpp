#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "icpguard/geometry.hpp"

namespace icpguard {

struct Neighbor {
  std::size_t index;
  double dist2;

  friend bool operator<(const Neighbor& a, const Neighbor& b) {
    return a.dist2 < b.dist2 || (a.dist2 == b.dist2 && a.index < b.index);
  }
};

/// Static 3-D kd-tree. Queries are exact and order neighbors by
/// (squared distance, index), so results equal a linear scan bit for bit.
/// Read-only after construction; safe to share across threads.
class KdTree {
 public:
  KdTree() = default;
  explicit KdTree(std::span<const Point3> points);
  explicit KdTree(const PointCloud& cloud) : KdTree(cloud.span()) {}

  std::size_t size() const { return points_.size(); }
  const Point3& point(std::size_t i) const { return points_[i]; }

  std::vector<Neighbor> knn(const Point3& query, std::size_t k) const;

  // Nearest neighbor with dist2 < max_dist2 (strict), if any.
  std::optional<Neighbor> nearest(const Point3& query,
                                  double max_dist2 = std::numeric_limits<double>::infinity()) const;

 private:
  struct Node {
    std::uint32_t begin, end;  // range into order_
    std::int32_t left = -1, right = -1;
    int axis = -1;
    double split = 0.0;
  };

  int build(std::uint32_t begin, std::uint32_t end);
  void search(int node, const Point3& q, std::size_t k, std::vector<Neighbor>& best) const;
  void search_one(int node, const Point3& q, Neighbor& best) const;

  std::vector<Point3> points_;
  std::vector<std::uint32_t> order_;
  std::vector<Node> nodes_;
};

}  // namespace icpguard

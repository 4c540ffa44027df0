#include "icpguard/kdtree.hpp"

#include <algorithm>
#include <numeric>

#include "icpguard/errors.hpp"

namespace icpguard {

namespace {
constexpr std::uint32_t kLeafSize = 12;
}

KdTree::KdTree(std::span<const Point3> points) : points_(points.begin(), points.end()) {
  if (points_.size() > std::numeric_limits<std::uint32_t>::max()) {
    throw InvalidInput("KdTree: too many points");
  }
  order_.resize(points_.size());
  std::iota(order_.begin(), order_.end(), 0u);
  if (!points_.empty()) {
    nodes_.reserve(2 * points_.size() / kLeafSize + 4);
    build(0, static_cast<std::uint32_t>(points_.size()));
  }
}

int KdTree::build(std::uint32_t begin, std::uint32_t end) {
  const int id = static_cast<int>(nodes_.size());
  nodes_.push_back({begin, end});
  if (end - begin <= kLeafSize) return id;

  Eigen::Vector3d lo = points_[order_[begin]];
  Eigen::Vector3d hi = lo;
  for (std::uint32_t i = begin; i < end; ++i) {
    lo = lo.cwiseMin(points_[order_[i]]);
    hi = hi.cwiseMax(points_[order_[i]]);
  }
  int axis = 0;
  (hi - lo).maxCoeff(&axis);
  if (hi[axis] - lo[axis] <= 0.0) return id;  // all coincident: keep as leaf

  const std::uint32_t mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](std::uint32_t a, std::uint32_t b) {
                     return points_[a][axis] < points_[b][axis];
                   });
  const double split = points_[order_[mid]][axis];
  const int left = build(begin, mid);
  const int right = build(mid, end);
  Node& node = nodes_[static_cast<std::size_t>(id)];
  node.axis = axis;
  node.split = split;
  node.left = left;
  node.right = right;
  return id;
}

void KdTree::search(int node_id, const Point3& q, std::size_t k,
                    std::vector<Neighbor>& best) const {
  const Node& node = nodes_[static_cast<std::size_t>(node_id)];
  if (node.axis < 0) {
    for (std::uint32_t i = node.begin; i < node.end; ++i) {
      const std::size_t idx = order_[i];
      const Neighbor cand{idx, (points_[idx] - q).squaredNorm()};
      if (best.size() < k) {
        best.insert(std::upper_bound(best.begin(), best.end(), cand), cand);
      } else if (cand < best.back()) {
        best.pop_back();
        best.insert(std::upper_bound(best.begin(), best.end(), cand), cand);
      }
    }
    return;
  }
  const double diff = q[node.axis] - node.split;
  const int near = diff < 0.0 ? node.left : node.right;
  const int far = diff < 0.0 ? node.right : node.left;
  search(near, q, k, best);
  // Points on the far side are at least |diff| away; keep equal distances for
  // the index tie rule.
  if (best.size() < k || diff * diff <= best.back().dist2) search(far, q, k, best);
}

void KdTree::search_one(int node_id, const Point3& q, Neighbor& best) const {
  const Node& node = nodes_[static_cast<std::size_t>(node_id)];
  if (node.axis < 0) {
    for (std::uint32_t i = node.begin; i < node.end; ++i) {
      const std::size_t idx = order_[i];
      const Neighbor cand{idx, (points_[idx] - q).squaredNorm()};
      if (cand < best) best = cand;
    }
    return;
  }
  const double diff = q[node.axis] - node.split;
  const int near = diff < 0.0 ? node.left : node.right;
  const int far = diff < 0.0 ? node.right : node.left;
  search_one(near, q, best);
  if (diff * diff <= best.dist2) search_one(far, q, best);
}

std::vector<Neighbor> KdTree::knn(const Point3& query, std::size_t k) const {
  if (points_.empty()) throw InvalidInput("KdTree::knn on empty tree");
  k = std::min(k, points_.size());
  std::vector<Neighbor> best;
  best.reserve(k + 1);
  if (k > 0) search(0, query, k, best);
  return best;
}

std::optional<Neighbor> KdTree::nearest(const Point3& query, double max_dist2) const {
  if (points_.empty()) return std::nullopt;
  Neighbor best{std::numeric_limits<std::size_t>::max(), max_dist2};
  search_one(0, query, best);
  if (best.index == std::numeric_limits<std::size_t>::max() || !(best.dist2 < max_dist2)) {
    return std::nullopt;
  }
  return best;
}

}  // namespace icpguard

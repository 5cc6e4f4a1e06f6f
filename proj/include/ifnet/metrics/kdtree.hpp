#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <numeric>
#include <vector>

#include "ifnet/core/error.hpp"
#include "ifnet/geometry/mesh.hpp"

namespace ifnet {

struct Neighbor {
  std::uint32_t index = 0;
  double distance2 = std::numeric_limits<double>::infinity();
};

/// Balanced kd-tree for exact nearest-neighbour queries. Equidistant candidates resolve to the
/// lowest point index, matching a brute-force scan.
class KdTree {
 public:
  static constexpr std::size_t kLeafSize = 8;

  KdTree() = default;
  explicit KdTree(std::vector<Vec3> points) : points_(std::move(points)) {
    if (points_.size() >= std::numeric_limits<std::uint32_t>::max()) throw Error("KdTree: too many points");
    order_.resize(points_.size());
    std::iota(order_.begin(), order_.end(), 0u);
    axis_.assign(points_.size(), 0);
    build(0, order_.size());
  }

  std::size_t size() const { return points_.size(); }
  const Vec3& point(std::size_t i) const { return points_[i]; }

  Neighbor nearest(const Vec3& q) const {
    if (points_.empty()) throw Error("KdTree: query on an empty tree");
    Neighbor best;
    search(q, 0, order_.size(), best);
    return best;
  }

 private:
  void build(std::size_t lo, std::size_t hi) {
    if (hi - lo <= kLeafSize) return;
    Vec3 mn = Vec3::Constant(std::numeric_limits<double>::infinity()), mx = -mn;
    for (std::size_t i = lo; i < hi; ++i) {
      mn = mn.cwiseMin(points_[order_[i]]);
      mx = mx.cwiseMax(points_[order_[i]]);
    }
    int axis = 0;
    (mx - mn).maxCoeff(&axis);
    const std::size_t mid = lo + (hi - lo) / 2;
    std::nth_element(order_.begin() + lo, order_.begin() + mid, order_.begin() + hi, [&](std::uint32_t a, std::uint32_t b) {
      const double ca = points_[a][axis], cb = points_[b][axis];
      return ca < cb || (ca == cb && a < b);
    });
    axis_[mid] = static_cast<std::uint8_t>(axis);
    build(lo, mid);
    build(mid + 1, hi);
  }

  void consider(const Vec3& q, std::uint32_t idx, Neighbor& best) const {
    const double d = (points_[idx] - q).squaredNorm();
    if (d < best.distance2 || (d == best.distance2 && idx < best.index)) best = {idx, d};
  }

  void search(const Vec3& q, std::size_t lo, std::size_t hi, Neighbor& best) const {
    if (hi - lo <= kLeafSize) {
      for (std::size_t i = lo; i < hi; ++i) consider(q, order_[i], best);
      return;
    }
    const std::size_t mid = lo + (hi - lo) / 2;
    const int axis = axis_[mid];
    const std::uint32_t split = order_[mid];
    const double diff = q[axis] - points_[split][axis];
    consider(q, split, best);
    if (diff < 0) {
      search(q, lo, mid, best);
      if (diff * diff <= best.distance2) search(q, mid + 1, hi, best);
    } else {
      search(q, mid + 1, hi, best);
      if (diff * diff <= best.distance2) search(q, lo, mid, best);
    }
  }

  std::vector<Vec3> points_;
  std::vector<std::uint32_t> order_;
  std::vector<std::uint8_t> axis_;
};

}  // namespace ifnet

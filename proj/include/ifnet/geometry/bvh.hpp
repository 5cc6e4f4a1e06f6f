#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <vector>

#include "ifnet/geometry/mesh.hpp"

namespace ifnet {

struct RayHit {
  double t = 0.0;           // ray parameter
  std::uint32_t face = 0;
  double edge_distance = 0.0;  // distance from the hit point to the nearest triangle edge
};

/// Bounding-volume hierarchy over the faces of a mesh, for ray queries.
class TriangleBvh {
 public:
  TriangleBvh() = default;

  explicit TriangleBvh(const TriMesh& mesh) {
    const std::size_t n = mesh.faces.size();
    tris_.resize(n);
    order_.resize(n);
    std::iota(order_.begin(), order_.end(), 0u);
    boxes_.resize(n);
    centroids_.resize(n);
    for (std::size_t f = 0; f < n; ++f) {
      Aabb b;
      for (auto v : mesh.faces[f]) b.extend(mesh.vertices[v]);
      const Vec3& v0 = mesh.vertices[mesh.faces[f][0]];
      tris_[f] = {v0, mesh.vertices[mesh.faces[f][1]] - v0, mesh.vertices[mesh.faces[f][2]] - v0};
      boxes_[f] = b;
      centroids_[f] = b.center();
    }
    if (n > 0) {
      nodes_.reserve(4 * n / kLeafSize + 1);
      nodes_.emplace_back();
      build_into(0, 0, static_cast<std::uint32_t>(n));
    }
  }

  bool empty() const { return nodes_.empty(); }

  /// Calls visit(const RayHit&) for every face the ray (t > 0) crosses.
  template <class Visitor>
  void for_each_hit(const Vec3& origin, const Vec3& dir, Visitor&& visit) const {
    if (nodes_.empty()) return;
    const Vec3 inv = dir.cwiseInverse();
    std::uint32_t stack[64];
    int top = 0;
    stack[top++] = 0;
    while (top > 0) {
      const Node& node = nodes_[stack[--top]];
      if (!slab_test(node.box, origin, inv, std::numeric_limits<double>::infinity())) continue;
      if (node.count > 0) {
        for (std::uint32_t i = node.first; i < node.first + node.count; ++i)
          if (auto hit = intersect(order_[i], origin, dir)) visit(*hit);
      } else {
        stack[top++] = node.first;
        stack[top++] = node.first + 1;
      }
    }
  }

  /// Nearest crossing with t > 0; ties resolved by lowest face index.
  std::optional<RayHit> nearest_hit(const Vec3& origin, const Vec3& dir) const {
    std::optional<RayHit> best;
    if (nodes_.empty()) return best;
    const Vec3 inv = dir.cwiseInverse();
    std::uint32_t stack[64];
    int top = 0;
    stack[top++] = 0;
    while (top > 0) {
      const Node& node = nodes_[stack[--top]];
      const double limit = best ? best->t : std::numeric_limits<double>::infinity();
      if (!slab_test(node.box, origin, inv, limit)) continue;
      if (node.count > 0) {
        for (std::uint32_t i = node.first; i < node.first + node.count; ++i)
          if (auto hit = intersect(order_[i], origin, dir))
            if (!best || hit->t < best->t || (hit->t == best->t && hit->face < best->face)) best = hit;
      } else {
        stack[top++] = node.first;
        stack[top++] = node.first + 1;
      }
    }
    return best;
  }

 private:
  static constexpr std::uint32_t kLeafSize = 4;

  struct Node {
    Aabb box;
    std::uint32_t first = 0;  // child index (inner) or first face slot (leaf)
    std::uint32_t count = 0;  // 0 for inner nodes
  };

  void build_into(std::uint32_t slot, std::uint32_t begin, std::uint32_t end) {
    Aabb box, cbox;
    for (std::uint32_t i = begin; i < end; ++i) {
      box.extend(boxes_[order_[i]]);
      cbox.extend(centroids_[order_[i]]);
    }
    nodes_[slot].box = box;
    if (end - begin <= kLeafSize) {
      nodes_[slot].first = begin;
      nodes_[slot].count = end - begin;
      return;
    }
    int axis = 0;
    cbox.extent().maxCoeff(&axis);
    const std::uint32_t mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end, [&](auto a, auto b) {
      return centroids_[a][axis] < centroids_[b][axis] || (centroids_[a][axis] == centroids_[b][axis] && a < b);
    });
    const auto children = static_cast<std::uint32_t>(nodes_.size());
    nodes_.emplace_back();
    nodes_.emplace_back();
    nodes_[slot].first = children;
    nodes_[slot].count = 0;
    build_into(children, begin, mid);
    build_into(children + 1, mid, end);
  }

  static bool slab_test(const Aabb& box, const Vec3& origin, const Vec3& inv, double tmax) {
    double t0 = 0.0, t1 = tmax;
    for (int a = 0; a < 3; ++a) {
      double lo = (box.lo[a] - origin[a]) * inv[a];
      double hi = (box.hi[a] - origin[a]) * inv[a];
      if (std::isnan(lo) || std::isnan(hi)) {
        // direction component is zero and the origin sits on the slab plane
        if (origin[a] < box.lo[a] || origin[a] > box.hi[a]) return false;
        continue;
      }
      if (lo > hi) std::swap(lo, hi);
      t0 = std::max(t0, lo);
      t1 = std::min(t1, hi);
      if (t0 > t1) return false;
    }
    return true;
  }

  // Möller–Trumbore; reports the distance from the hit to the closest edge for degeneracy checks.
  std::optional<RayHit> intersect(std::uint32_t f, const Vec3& origin, const Vec3& dir) const {
    const Vec3& v0 = tris_[f].v0;
    const Vec3& e1 = tris_[f].e1;
    const Vec3& e2 = tris_[f].e2;
    const Vec3 p = dir.cross(e2);
    const double det = e1.dot(p);
    if (det == 0.0) return std::nullopt;
    const double inv_det = 1.0 / det;
    const Vec3 s = origin - v0;
    const double u = s.dot(p) * inv_det;
    if (u < 0.0 || u > 1.0) return std::nullopt;
    const Vec3 q = s.cross(e1);
    const double v = dir.dot(q) * inv_det;
    if (v < 0.0 || u + v > 1.0) return std::nullopt;
    const double t = e2.dot(q) * inv_det;
    if (!(t > 0.0)) return std::nullopt;
    // barycentric weight times the altitude onto the opposite edge is the distance to that edge
    const double twice_area = e1.cross(e2).norm();
    const double w = 1.0 - u - v;
    const Vec3 e3 = e2 - e1;
    const double d0 = w * twice_area / e3.norm();  // edge v1-v2
    const double d1 = u * twice_area / e2.norm();  // edge v0-v2
    const double d2 = v * twice_area / e1.norm();  // edge v0-v1
    return RayHit{t, f, std::min({d0, d1, d2})};
  }

  struct Triangle {
    Vec3 v0, e1, e2;
  };

  std::vector<Triangle> tris_;
  std::vector<std::uint32_t> order_;
  std::vector<Aabb> boxes_;
  std::vector<Vec3> centroids_;
  std::vector<Node> nodes_;
};

}  // namespace ifnet

#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ifnet/core/error.hpp"
#include "ifnet/core/parallel.hpp"
#include "ifnet/core/random.hpp"
#include "ifnet/geometry/bvh.hpp"
#include "ifnet/geometry/mesh.hpp"

namespace ifnet {

/// Inside/outside classification against a watertight mesh by crossing parity.
///
/// Each point is tested with three rays, one per axis, each tilted by a small pseudo-random
/// jitter that depends only on the point index, the axis and the attempt number. A ray passing
/// within `kEdgeTolerance` of an edge or vertex is re-cast with a fresh jitter, at most
/// `kMaxRetries` times. The label is the majority vote of the three parities.
class OccupancyOracle {
 public:
  static constexpr double kEdgeTolerance = 1e-9;
  static constexpr int kMaxRetries = 8;
  static constexpr double kJitter = 0.05;

  explicit OccupancyOracle(TriMesh mesh) : mesh_(std::move(mesh)) {
    require_watertight(mesh_, "occupancy oracle");
    bvh_ = TriangleBvh(mesh_);
  }

  const TriMesh& mesh() const { return mesh_; }

  bool inside(const Vec3& p, std::uint64_t point_index) const {
    int votes = 0;
    for (int axis = 0; axis < 3; ++axis) votes += parity(p, point_index, axis) ? 1 : 0;
    return votes >= 2;
  }

  std::vector<std::uint8_t> classify(std::span<const Vec3> points, std::uint64_t index_offset = 0) const {
    std::vector<std::uint8_t> labels(points.size());
    parallel_for(0, points.size(), 1024, [&](std::size_t lo, std::size_t hi) {
      for (std::size_t i = lo; i < hi; ++i) labels[i] = inside(points[i], index_offset + i) ? 1 : 0;
    });
    return labels;
  }

 private:
  bool parity(const Vec3& p, std::uint64_t point_index, int axis) const {
    for (int attempt = 0; attempt <= kMaxRetries; ++attempt) {
      const std::uint64_t stream = derive_seed(point_index, static_cast<std::uint64_t>(axis * (kMaxRetries + 1) + attempt));
      Vec3 dir = Vec3::Zero();
      dir[axis] = 1.0;
      dir[(axis + 1) % 3] = jitter(derive_seed(stream, 0));
      dir[(axis + 2) % 3] = jitter(derive_seed(stream, 1));
      bool degenerate = false;
      int crossings = 0;
      bvh_.for_each_hit(p, dir, [&](const RayHit& hit) {
        ++crossings;
        if (hit.edge_distance < kEdgeTolerance) degenerate = true;
      });
      if (!degenerate) return crossings % 2 == 1;
    }
    throw GeometryError("occupancy oracle: ray retries exhausted for point index " + std::to_string(point_index));
  }

  static double jitter(std::uint64_t bits) {
    const double unit = static_cast<double>(bits >> 11) * 0x1.0p-53;  // [0, 1)
    return kJitter * (2.0 * unit - 1.0);
  }

  TriMesh mesh_;
  TriangleBvh bvh_;
};

inline std::vector<std::uint8_t> occupancy_oracle(const TriMesh& mesh, std::span<const Vec3> points) {
  return OccupancyOracle(mesh).classify(points);
}

}  // namespace ifnet

#pragma once

#include <array>
#include <cstdint>
#include <unordered_map>
#include <vector>

#include "ifnet/core/error.hpp"
#include "ifnet/core/parallel.hpp"
#include "ifnet/geometry/mesh.hpp"

namespace ifnet {

namespace mc {

// Cube corner c has lattice offset (c & 1, (c >> 1) & 1, (c >> 2) & 1).
inline Vec3 corner_offset(int c) { return {double(c & 1), double((c >> 1) & 1), double((c >> 2) & 1)}; }

struct CubeEdge {
  int axis;
  int lo, hi;  // corner indices, lo has the axis bit clear
};

// Edges 0-3 run along x, 4-7 along y, 8-11 along z.
inline const std::array<CubeEdge, 12>& cube_edges() {
  static const std::array<CubeEdge, 12> edges = [] {
    std::array<CubeEdge, 12> e{};
    int k = 0;
    for (int axis = 0; axis < 3; ++axis)
      for (int c = 0; c < 8; ++c)
        if (!(c >> axis & 1)) e[k++] = {axis, c, c | (1 << axis)};
    return e;
  }();
  return edges;
}

inline int edge_between(int a, int b) {
  const auto& edges = cube_edges();
  for (int k = 0; k < 12; ++k)
    if ((edges[k].lo == a && edges[k].hi == b) || (edges[k].lo == b && edges[k].hi == a)) return k;
  return -1;
}

using Triangle = std::array<int, 3>;  // cube edge ids

inline bool edges_share_face(int e, int f) {
  const auto& edges = cube_edges();
  const std::array<int, 4> corners{edges[e].lo, edges[e].hi, edges[f].lo, edges[f].hi};
  for (int axis = 0; axis < 3; ++axis) {
    const int bit = corners[0] >> axis & 1;
    bool same = true;
    for (int c : corners) same = same && (c >> axis & 1) == bit;
    if (same) return true;
  }
  return false;
}

// Triangulates the sub-polygon loop[i..j] (closed by the side i-j) without any chord between two
// vertices on a common cube face: the neighbouring cube could emit the same chord, and the edge
// would then border four triangles. Triangles are index triples into `loop`, in loop order.
inline bool triangulate_loop(const std::vector<int>& loop, int i, int j, std::vector<std::array<int, 3>>& out) {
  if (j - i < 2) return true;
  const std::size_t mark = out.size();
  for (int k = i + 1; k < j; ++k) {
    if ((k > i + 1 && edges_share_face(loop[i], loop[k])) || (j > k + 1 && edges_share_face(loop[k], loop[j]))) continue;
    if (triangulate_loop(loop, i, k, out) && triangulate_loop(loop, k, j, out)) {
      out.push_back({i, k, j});
      return true;
    }
    out.resize(mark);
  }
  return false;
}

/// Triangulation for each of the 256 corner configurations (bit c set = corner c inside).
///
/// The table is derived rather than transcribed: on every cube face the inside corners are cut off
/// marching-squares style, and a face with two diagonal inside corners always separates them. The
/// face rule depends only on that face's four corners, so neighbouring cubes agree and the surface
/// is crack-free. Face segments are oriented with the inside region on their left (seen from outside
/// the cube), chained into loops and triangulated with outward-facing winding.
inline const std::array<std::vector<Triangle>, 256>& triangle_table() {
  static const std::array<std::vector<Triangle>, 256> table = [] {
    std::array<std::vector<Triangle>, 256> out;
    const auto& edges = cube_edges();
    auto midpoint = [&](int e) -> Vec3 { return 0.5 * (corner_offset(edges[e].lo) + corner_offset(edges[e].hi)); };

    for (int config = 0; config < 256; ++config) {
      auto inside = [&](int c) { return (config >> c & 1) != 0; };
      std::array<int, 12> next;
      next.fill(-1);
      auto add_segment = [&](int e0, int e1, const Vec3& inside_point, const Vec3& normal) {
        const Vec3 m = 0.5 * (midpoint(e0) + midpoint(e1));
        const Vec3 left = normal.cross(midpoint(e1) - midpoint(e0));
        if (left.dot(inside_point - m) > 0)
          next[e0] = e1;
        else
          next[e1] = e0;
      };

      for (int axis = 0; axis < 3; ++axis) {
        const int b = (axis + 1) % 3, c = (axis + 2) % 3;
        for (int side = 0; side < 2; ++side) {
          const int base = side << axis;
          const std::array<int, 4> ring{base, base | 1 << b, base | 1 << b | 1 << c, base | 1 << c};
          Vec3 normal = Vec3::Zero();
          normal[axis] = side ? 1.0 : -1.0;
          std::array<int, 4> ring_edge;
          for (int k = 0; k < 4; ++k) ring_edge[k] = edge_between(ring[k], ring[(k + 1) % 4]);
          int inside_count = 0;
          for (int k = 0; k < 4; ++k) inside_count += inside(ring[k]);
          if (inside_count == 0 || inside_count == 4) continue;
          const bool diagonal = inside_count == 2 && inside(ring[0]) == inside(ring[2]);
          if (diagonal) {
            for (int k = 0; k < 4; ++k)
              if (inside(ring[k])) add_segment(ring_edge[(k + 3) % 4], ring_edge[k], corner_offset(ring[k]), normal);
          } else {
            std::array<int, 2> crossing;
            int n = 0;
            Vec3 centroid = Vec3::Zero();
            for (int k = 0; k < 4; ++k) {
              if (inside(ring[k]) != inside(ring[(k + 1) % 4])) crossing[n++] = ring_edge[k];
              if (inside(ring[k])) centroid += corner_offset(ring[k]) / inside_count;
            }
            add_segment(crossing[0], crossing[1], centroid, normal);
          }
        }
      }

      std::array<bool, 12> visited{};
      for (int start = 0; start < 12; ++start) {
        if (next[start] < 0 || visited[start]) continue;
        std::vector<int> loop;
        for (int e = start; !visited[e]; e = next[e]) {
          visited[e] = true;
          loop.push_back(e);
        }
        std::vector<std::array<int, 3>> tris;
        if (!triangulate_loop(loop, 0, static_cast<int>(loop.size()) - 1, tris)) throw GeometryError("marching cubes table: untriangulable loop");
        for (const auto& t : tris) out[config].push_back({loop[t[0]], loop[t[2]], loop[t[1]]});
      }
    }
    return out;
  }();
  return table;
}

}  // namespace mc

/// Scalar samples on a regular lattice: value(i, j, k) sits at origin + spacing * (i, j, k).
struct ScalarLattice {
  int nx = 0, ny = 0, nz = 0;
  Vec3 origin = Vec3::Zero();
  double spacing = 1.0;
  std::vector<double> values;  // x-fastest

  std::size_t index(int i, int j, int k) const {
    return static_cast<std::size_t>(i) + static_cast<std::size_t>(nx) * (j + static_cast<std::size_t>(ny) * k);
  }
  double at(int i, int j, int k) const { return values[index(i, j, k)]; }
  Vec3 position(int i, int j, int k) const { return origin + spacing * Vec3(i, j, k); }
};

/// Classic table-driven isosurface extraction. A sample counts as inside when value >= iso.
/// Vertices sit on sign-changing lattice edges at the linear-interpolation crossing and are shared
/// between neighbouring cubes, so the result is closed whenever the surface stays off the boundary.
inline TriMesh marching_cubes(const ScalarLattice& lattice, double iso) {
  if (lattice.nx < 2 || lattice.ny < 2 || lattice.nz < 2) throw GeometryError("marching_cubes: lattice needs >= 2 samples per axis");
  if (lattice.values.size() != static_cast<std::size_t>(lattice.nx) * lattice.ny * lattice.nz)
    throw GeometryError("marching_cubes: value count does not match lattice dimensions");
  const auto& table = mc::triangle_table();
  const auto& edges = mc::cube_edges();
  const int cz = lattice.nz - 1;

  using EdgeKey = std::uint64_t;  // 3 * lattice index + axis
  std::vector<std::vector<std::array<EdgeKey, 3>>> slabs(static_cast<std::size_t>(cz));
  parallel_for(0, static_cast<std::size_t>(cz), 1, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t kz = lo; kz < hi; ++kz) {
      auto& tris = slabs[kz];
      const int k = static_cast<int>(kz);
      for (int j = 0; j + 1 < lattice.ny; ++j)
        for (int i = 0; i + 1 < lattice.nx; ++i) {
          int config = 0;
          for (int c = 0; c < 8; ++c)
            if (lattice.at(i + (c & 1), j + (c >> 1 & 1), k + (c >> 2 & 1)) >= iso) config |= 1 << c;
          for (const auto& t : table[config]) {
            std::array<EdgeKey, 3> keys;
            for (int v = 0; v < 3; ++v) {
              const auto& e = edges[t[v]];
              const int lo_c = e.lo;
              keys[v] = 3 * static_cast<EdgeKey>(lattice.index(i + (lo_c & 1), j + (lo_c >> 1 & 1), k + (lo_c >> 2 & 1))) + e.axis;
            }
            tris.push_back(keys);
          }
        }
    }
  });

  TriMesh mesh;
  std::unordered_map<EdgeKey, std::uint32_t> vertex_of;
  auto vertex = [&](EdgeKey key) {
    auto [it, fresh] = vertex_of.try_emplace(key, static_cast<std::uint32_t>(mesh.vertices.size()));
    if (fresh) {
      const int axis = static_cast<int>(key % 3);
      const std::size_t lin = key / 3;
      const int i = static_cast<int>(lin % lattice.nx);
      const int j = static_cast<int>(lin / lattice.nx % lattice.ny);
      const int k = static_cast<int>(lin / (static_cast<std::size_t>(lattice.nx) * lattice.ny));
      const int i1 = i + (axis == 0), j1 = j + (axis == 1), k1 = k + (axis == 2);
      const double v0 = lattice.at(i, j, k), v1 = lattice.at(i1, j1, k1);
      const double t = (iso - v0) / (v1 - v0);
      const Vec3 p0 = lattice.position(i, j, k), p1 = lattice.position(i1, j1, k1);
      mesh.vertices.push_back(p0 + t * (p1 - p0));
    }
    return it->second;
  };
  for (const auto& slab : slabs)
    for (const auto& keys : slab) mesh.faces.push_back({vertex(keys[0]), vertex(keys[1]), vertex(keys[2])});
  return mesh;
}

}  // namespace ifnet

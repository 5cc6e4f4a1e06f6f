#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <algorithm>
#include <array>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ifnet/core/error.hpp"

namespace ifnet {

using Vec3 = Eigen::Vector3d;
using Face = std::array<std::uint32_t, 3>;

struct Aabb {
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = Vec3::Constant(-std::numeric_limits<double>::infinity());

  void extend(const Vec3& p) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  void extend(const Aabb& b) {
    lo = lo.cwiseMin(b.lo);
    hi = hi.cwiseMax(b.hi);
  }
  bool valid() const { return (lo.array() <= hi.array()).all(); }
  Vec3 center() const { return 0.5 * (lo + hi); }
  Vec3 extent() const { return hi - lo; }
};

inline Aabb bounds(const std::vector<Vec3>& points) {
  Aabb box;
  for (const auto& p : points) box.extend(p);
  return box;
}

/// Indexed triangle surface in canonical units.
struct TriMesh {
  std::vector<Vec3> vertices;
  std::vector<Face> faces;

  bool empty() const { return faces.empty(); }

  Vec3 face_cross(std::size_t f) const {
    const auto& t = faces[f];
    return (vertices[t[1]] - vertices[t[0]]).cross(vertices[t[2]] - vertices[t[0]]);
  }
  double face_area(std::size_t f) const { return 0.5 * face_cross(f).norm(); }
  Vec3 face_normal(std::size_t f) const { return face_cross(f).normalized(); }

  double surface_area() const {
    double a = 0.0;
    for (std::size_t f = 0; f < faces.size(); ++f) a += face_area(f);
    return a;
  }

  /// Divergence-theorem volume; positive for outward-oriented closed meshes.
  double signed_volume() const {
    double v = 0.0;
    for (const auto& t : faces) v += vertices[t[0]].dot(vertices[t[1]].cross(vertices[t[2]]));
    return v / 6.0;
  }

  /// Area-weighted vertex normals.
  std::vector<Vec3> vertex_normals() const {
    std::vector<Vec3> n(vertices.size(), Vec3::Zero());
    for (std::size_t f = 0; f < faces.size(); ++f) {
      const Vec3 c = face_cross(f);
      for (auto v : faces[f]) n[v] += c;
    }
    for (auto& v : n) {
      const double len = v.norm();
      if (len > 0) v /= len;
    }
    return n;
  }
};

/// Map from original to canonical coordinates: p' = scale * p + translation.
struct Transform {
  double scale = 1.0;
  Vec3 translation = Vec3::Zero();

  Vec3 apply(const Vec3& p) const { return scale * p + translation; }
  Vec3 inverse(const Vec3& p) const { return (p - translation) / scale; }
};

inline TriMesh transformed(TriMesh mesh, const Transform& t) {
  for (auto& v : mesh.vertices) v = t.apply(v);
  return mesh;
}

inline TriMesh inverse_transformed(TriMesh mesh, const Transform& t) {
  for (auto& v : mesh.vertices) v = t.inverse(v);
  return mesh;
}

/// Merges vertices closer than `tolerance` (keeping the lowest index as representative) and drops
/// faces that collapse or have zero area. Vertex order of the survivors is preserved.
inline void cleanup(TriMesh& mesh, double tolerance = 1e-9) {
  const std::size_t n = mesh.vertices.size();
  for (const auto& f : mesh.faces)
    for (auto v : f)
      if (v >= n) throw GeometryError("face references vertex " + std::to_string(v) + " of " + std::to_string(n));

  std::vector<std::uint32_t> rep(n);
  std::iota(rep.begin(), rep.end(), 0u);
  std::vector<std::uint32_t> order(n);
  std::iota(order.begin(), order.end(), 0u);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) {
    return mesh.vertices[a].x() < mesh.vertices[b].x() || (mesh.vertices[a].x() == mesh.vertices[b].x() && a < b);
  });
  auto find = [&](std::uint32_t v) {
    while (rep[v] != v) v = rep[v] = rep[rep[v]];
    return v;
  };
  const double tol2 = tolerance * tolerance;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3& a = mesh.vertices[order[i]];
    for (std::size_t j = i + 1; j < n && mesh.vertices[order[j]].x() - a.x() <= tolerance; ++j) {
      if ((mesh.vertices[order[j]] - a).squaredNorm() <= tol2) {
        const auto ra = find(order[i]), rb = find(order[j]);
        if (ra != rb) rep[std::max(ra, rb)] = std::min(ra, rb);
      }
    }
  }

  std::vector<std::uint32_t> remap(n);
  std::vector<Vec3> kept;
  kept.reserve(n);
  for (std::uint32_t v = 0; v < n; ++v) {
    const auto r = find(v);
    if (r == v) {
      remap[v] = static_cast<std::uint32_t>(kept.size());
      kept.push_back(mesh.vertices[v]);
    }
  }
  for (std::uint32_t v = 0; v < n; ++v) remap[v] = remap[find(v)];

  std::vector<Face> faces;
  faces.reserve(mesh.faces.size());
  for (const auto& f : mesh.faces) {
    const Face g{remap[f[0]], remap[f[1]], remap[f[2]]};
    if (g[0] == g[1] || g[1] == g[2] || g[0] == g[2]) continue;
    if ((kept[g[1]] - kept[g[0]]).cross(kept[g[2]] - kept[g[0]]).squaredNorm() == 0.0) continue;
    faces.push_back(g);
  }
  mesh.vertices = std::move(kept);
  mesh.faces = std::move(faces);
}

struct ClosednessReport {
  std::size_t edge_count = 0;
  std::size_t open_edges = 0;         // used by one face
  std::size_t nonmanifold_edges = 0;  // used by three or more faces
  std::optional<std::pair<std::uint32_t, std::uint32_t>> example;

  bool watertight() const { return open_edges == 0 && nonmanifold_edges == 0; }

  std::string describe() const {
    std::string s = std::to_string(open_edges) + " open and " + std::to_string(nonmanifold_edges) +
                    " non-manifold edges out of " + std::to_string(edge_count);
    if (example) s += " (e.g. edge " + std::to_string(example->first) + "-" + std::to_string(example->second) + ")";
    return s;
  }
};

/// Closedness: every undirected edge is shared by exactly two faces.
inline ClosednessReport check_closed(const TriMesh& mesh) {
  std::vector<std::uint64_t> edges;
  edges.reserve(mesh.faces.size() * 3);
  for (const auto& f : mesh.faces)
    for (int k = 0; k < 3; ++k) {
      const std::uint64_t a = f[k], b = f[(k + 1) % 3];
      edges.push_back(std::min(a, b) << 32 | std::max(a, b));
    }
  std::sort(edges.begin(), edges.end());
  ClosednessReport r;
  for (std::size_t i = 0; i < edges.size();) {
    std::size_t j = i;
    while (j < edges.size() && edges[j] == edges[i]) ++j;
    const std::size_t count = j - i;
    ++r.edge_count;
    if (count != 2) {
      (count == 1 ? r.open_edges : r.nonmanifold_edges)++;
      if (!r.example)
        r.example = std::pair{static_cast<std::uint32_t>(edges[i] >> 32), static_cast<std::uint32_t>(edges[i] & 0xffffffffu)};
    }
    i = j;
  }
  return r;
}

/// Every directed edge appears exactly once, and its reverse exactly once.
inline bool consistently_oriented(const TriMesh& mesh) {
  std::map<std::pair<std::uint32_t, std::uint32_t>, int> directed;
  for (const auto& f : mesh.faces)
    for (int k = 0; k < 3; ++k) ++directed[{f[k], f[(k + 1) % 3]}];
  for (const auto& [e, count] : directed) {
    if (count != 1) return false;
    auto it = directed.find({e.second, e.first});
    if (it == directed.end() || it->second != 1) return false;
  }
  return true;
}

inline void require_watertight(const TriMesh& mesh, const std::string& context) {
  const auto report = check_closed(mesh);
  if (!report.watertight()) throw GeometryError(context + ": mesh is not watertight: " + report.describe());
}

/// Centers the bounding box at the origin and scales the longest edge to exactly 1.
inline std::pair<TriMesh, Transform> normalize(const TriMesh& mesh) {
  if (mesh.vertices.empty()) throw GeometryError("normalize: empty mesh");
  const Aabb box = bounds(mesh.vertices);
  const double longest = box.extent().maxCoeff();
  if (!(longest > 0.0)) throw GeometryError("normalize: zero-extent mesh (all vertices identical)");
  Transform t;
  t.scale = 1.0 / longest;
  t.translation = -t.scale * box.center();
  return {transformed(mesh, t), t};
}

}  // namespace ifnet

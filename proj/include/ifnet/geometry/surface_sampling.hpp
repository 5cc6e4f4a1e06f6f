#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "ifnet/core/error.hpp"
#include "ifnet/core/random.hpp"
#include "ifnet/geometry/mesh.hpp"
#include "ifnet/geometry/point_cloud.hpp"

namespace ifnet {

struct SurfaceSamples {
  PointCloud cloud;                  // points with unit face normals
  std::vector<std::uint32_t> faces;  // source face of each point
};

/// Area-uniform sampling: face chosen proportionally to area, then a uniform barycentric point.
inline SurfaceSamples sample_surface_with_faces(const TriMesh& mesh, std::size_t count, std::uint64_t seed) {
  if (mesh.faces.empty()) throw GeometryError("sample_surface: empty mesh");
  if (count < 1) throw GeometryError("sample_surface: count must be >= 1");
  std::vector<double> cumulative(mesh.faces.size());
  double total = 0.0;
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) cumulative[f] = total += mesh.face_area(f);
  if (!(total > 0.0)) throw GeometryError("sample_surface: mesh has zero area");

  Rng rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  SurfaceSamples out;
  out.cloud.points.reserve(count);
  out.cloud.normals.reserve(count);
  out.faces.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const double pick = unit(rng) * total;
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), pick);
    if (it == cumulative.end()) --it;
    const auto f = static_cast<std::uint32_t>(it - cumulative.begin());
    const double r1 = std::sqrt(unit(rng));
    const double r2 = unit(rng);
    const auto& t = mesh.faces[f];
    const Vec3 p = (1.0 - r1) * mesh.vertices[t[0]] + r1 * (1.0 - r2) * mesh.vertices[t[1]] + r1 * r2 * mesh.vertices[t[2]];
    out.cloud.points.push_back(p);
    out.cloud.normals.push_back(mesh.face_normal(f));
    out.faces.push_back(f);
  }
  return out;
}

inline PointCloud sample_surface(const TriMesh& mesh, std::size_t count, std::uint64_t seed) {
  return sample_surface_with_faces(mesh, count, seed).cloud;
}

}  // namespace ifnet

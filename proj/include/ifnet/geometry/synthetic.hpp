#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "ifnet/core/error.hpp"
#include "ifnet/core/random.hpp"
#include "ifnet/geometry/mesh.hpp"
#include "ifnet/mesher/marching_cubes.hpp"

namespace ifnet {

// ---------------------------------------------------------------------------------------------
// Analytic primitives (signed distance, negative inside)

struct Sphere {
  Vec3 center = Vec3::Zero();
  double radius = 0.4;
  double sdf(const Vec3& p) const { return (p - center).norm() - radius; }
};

/// Box with half extents, rotated by `yaw` radians about +y around its center.
struct Box {
  Vec3 center = Vec3::Zero();
  Vec3 half = Vec3::Constant(0.3);
  double yaw = 0.0;

  Vec3 to_local(const Vec3& p) const {
    const Vec3 d = p - center;
    const double c = std::cos(yaw), s = std::sin(yaw);
    return {c * d.x() - s * d.z(), d.y(), s * d.x() + c * d.z()};
  }
  Vec3 to_world(const Vec3& q) const {
    const double c = std::cos(yaw), s = std::sin(yaw);
    return center + Vec3(c * q.x() + s * q.z(), q.y(), -s * q.x() + c * q.z());
  }
  double sdf(const Vec3& p) const {
    const Vec3 q = to_local(p).cwiseAbs() - half;
    return q.cwiseMax(0.0).norm() + std::min(q.maxCoeff(), 0.0);
  }
};

struct Capsule {
  Vec3 a = Vec3::Zero(), b = Vec3::Zero();
  double radius = 0.05;

  Vec3 closest_on_axis(const Vec3& p) const {
    const Vec3 ab = b - a;
    const double len2 = ab.squaredNorm();
    const double t = len2 > 0 ? std::clamp((p - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
    return a + t * ab;
  }
  double sdf(const Vec3& p) const { return (p - closest_on_axis(p)).norm() - radius; }
};

using Primitive = std::variant<Sphere, Box, Capsule>;

inline double primitive_sdf(const Primitive& prim, const Vec3& p) {
  return std::visit([&](const auto& s) { return s.sdf(p); }, prim);
}

inline Aabb primitive_bounds(const Primitive& prim) {
  Aabb box;
  std::visit(
      [&](const auto& s) {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, Sphere>) {
          box.extend(s.center - Vec3::Constant(s.radius));
          box.extend(s.center + Vec3::Constant(s.radius));
        } else if constexpr (std::is_same_v<S, Box>) {
          for (int c = 0; c < 8; ++c)
            box.extend(s.to_world(Vec3((c & 1) ? s.half.x() : -s.half.x(), (c & 2) ? s.half.y() : -s.half.y(),
                                       (c & 4) ? s.half.z() : -s.half.z())));
        } else {
          for (const Vec3& e : {s.a, s.b}) {
            box.extend(e - Vec3::Constant(s.radius));
            box.extend(e + Vec3::Constant(s.radius));
          }
        }
      },
      prim);
  return box;
}

inline void transform_primitive(Primitive& prim, const Transform& t) {
  std::visit(
      [&](auto& s) {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, Sphere>) {
          s.center = t.apply(s.center);
          s.radius *= t.scale;
        } else if constexpr (std::is_same_v<S, Box>) {
          s.center = t.apply(s.center);
          s.half *= t.scale;
        } else {
          s.a = t.apply(s.a);
          s.b = t.apply(s.b);
          s.radius *= t.scale;
        }
      },
      prim);
}

// ---------------------------------------------------------------------------------------------
// Explicit meshes

/// Icosahedron subdivided `subdivisions` times with vertices projected onto the sphere.
inline TriMesh icosphere(double radius, int subdivisions, const Vec3& center = Vec3::Zero()) {
  const double phi = std::numbers::phi;
  TriMesh m;
  for (const auto& v : std::vector<Vec3>{{-1, phi, 0}, {1, phi, 0}, {-1, -phi, 0}, {1, -phi, 0},
                                         {0, -1, phi}, {0, 1, phi}, {0, -1, -phi}, {0, 1, -phi},
                                         {phi, 0, -1}, {phi, 0, 1}, {-phi, 0, -1}, {-phi, 0, 1}})
    m.vertices.push_back(v.normalized());
  m.faces = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
             {11, 10, 2}, {10, 7, 6}, {7, 1, 8},  {3, 9, 4},  {3, 4, 2},   {3, 2, 6}, {3, 6, 8},
             {3, 8, 9},  {4, 9, 5},  {2, 4, 11}, {6, 2, 10}, {8, 6, 7},   {9, 8, 1}};
  for (int s = 0; s < subdivisions; ++s) {
    std::map<std::pair<std::uint32_t, std::uint32_t>, std::uint32_t> mid;
    auto midpoint = [&](std::uint32_t a, std::uint32_t b) {
      const auto key = std::minmax(a, b);
      auto [it, fresh] = mid.try_emplace(key, static_cast<std::uint32_t>(m.vertices.size()));
      if (fresh) m.vertices.push_back((m.vertices[a] + m.vertices[b]).normalized());
      return it->second;
    };
    std::vector<Face> faces;
    faces.reserve(m.faces.size() * 4);
    for (const auto& f : m.faces) {
      const auto ab = midpoint(f[0], f[1]), bc = midpoint(f[1], f[2]), ca = midpoint(f[2], f[0]);
      faces.push_back({f[0], ab, ca});
      faces.push_back({f[1], bc, ab});
      faces.push_back({f[2], ca, bc});
      faces.push_back({ab, bc, ca});
    }
    m.faces = std::move(faces);
  }
  for (auto& v : m.vertices) v = center + radius * v;
  return m;
}

/// 12-triangle box, outward winding.
inline TriMesh box_mesh(const Box& box) {
  TriMesh m;
  for (int c = 0; c < 8; ++c)
    m.vertices.push_back(box.to_world(Vec3((c & 1) ? box.half.x() : -box.half.x(), (c & 2) ? box.half.y() : -box.half.y(),
                                           (c & 4) ? box.half.z() : -box.half.z())));
  m.faces = {{0, 2, 3}, {0, 3, 1}, {4, 5, 7}, {4, 7, 6}, {0, 1, 5}, {0, 5, 4},
             {2, 6, 7}, {2, 7, 3}, {0, 4, 6}, {0, 6, 2}, {1, 3, 7}, {1, 7, 5}};
  return m;
}

/// Convex capsule: a latitude/longitude sphere split at its equator, caps moved to the endpoints.
/// Every vertex lies exactly on the analytic capsule surface.
inline TriMesh capsule_mesh(const Capsule& cap, int segments = 32, int cap_rings = 8) {
  const Vec3 axis = (cap.b - cap.a).normalized();
  const Vec3 helper = std::abs(axis.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
  const Vec3 u = axis.cross(helper).normalized();
  const Vec3 w = axis.cross(u);
  TriMesh m;
  // rings from the pole at a (index 0) to the pole at b
  std::vector<std::pair<Vec3, double>> rings;  // (ring center, ring radius), excluding poles
  for (int r = 1; r <= cap_rings; ++r) {
    const double theta = std::numbers::pi / 2 * r / cap_rings;  // from the pole
    rings.push_back({cap.a - cap.radius * std::cos(theta) * axis, cap.radius * std::sin(theta)});
  }
  for (int r = cap_rings; r >= 1; --r) {
    const double theta = std::numbers::pi / 2 * r / cap_rings;
    rings.push_back({cap.b + cap.radius * std::cos(theta) * axis, cap.radius * std::sin(theta)});
  }
  m.vertices.push_back(cap.a - cap.radius * axis);
  for (const auto& [c, rad] : rings)
    for (int s = 0; s < segments; ++s) {
      const double phi = 2 * std::numbers::pi * s / segments;
      m.vertices.push_back(c + rad * (std::cos(phi) * u + std::sin(phi) * w));
    }
  m.vertices.push_back(cap.b + cap.radius * axis);
  const auto top = static_cast<std::uint32_t>(m.vertices.size() - 1);
  auto ring_vertex = [&](std::size_t r, int s) { return static_cast<std::uint32_t>(1 + r * segments + (s % segments)); };
  for (int s = 0; s < segments; ++s) m.faces.push_back({0, ring_vertex(0, s + 1), ring_vertex(0, s)});
  for (std::size_t r = 0; r + 1 < rings.size(); ++r)
    for (int s = 0; s < segments; ++s) {
      m.faces.push_back({ring_vertex(r, s), ring_vertex(r, s + 1), ring_vertex(r + 1, s + 1)});
      m.faces.push_back({ring_vertex(r, s), ring_vertex(r + 1, s + 1), ring_vertex(r + 1, s)});
    }
  for (int s = 0; s < segments; ++s) m.faces.push_back({top, ring_vertex(rings.size() - 1, s), ring_vertex(rings.size() - 1, s + 1)});
  if (m.signed_volume() < 0)
    for (auto& f : m.faces) std::swap(f[1], f[2]);
  return m;
}

// ---------------------------------------------------------------------------------------------
// Generator

enum class ShapeKind { sphere, box, union2, capsule_figure };

inline std::string to_string(ShapeKind k) {
  switch (k) {
    case ShapeKind::sphere: return "sphere";
    case ShapeKind::box: return "box";
    case ShapeKind::union2: return "union2";
    case ShapeKind::capsule_figure: return "capsule_figure";
  }
  return "?";
}

inline ShapeKind parse_shape_kind(const std::string& s) {
  for (auto k : {ShapeKind::sphere, ShapeKind::box, ShapeKind::union2, ShapeKind::capsule_figure})
    if (to_string(k) == s) return k;
  throw ConfigError("unknown shape kind \"" + s + "\"");
}

/// Shape parameters. Unset optionals are drawn from the seed.
///   sphere:          radius in [0.2, 0.45], subdivisions in [0, 6]
///   box:             half extents each in [0.05, 0.45], yaw in [-pi, pi]
///   capsule_figure:  limb angles in degrees, each within [-90, 90]; order (abduction, swing) for
///                    left arm, right arm, left leg, right leg. Zero angles give a symmetric pose.
///   union2, capsule_figure: meshed at `mesh_resolution` (>= 16) from the analytic union.
struct SyntheticParams {
  std::optional<double> radius;
  int subdivisions = 4;
  std::optional<Vec3> half_extents;
  std::optional<double> yaw;
  std::optional<std::array<double, 8>> limb_angles;
  int mesh_resolution = 96;
};

struct SyntheticShape {
  ShapeKind kind = ShapeKind::sphere;
  TriMesh mesh;
  std::vector<Primitive> primitives;  // the solid is their union
  std::vector<Capsule> limbs;         // capsule_figure only: left arm, right arm, left leg, right leg

  double sdf(const Vec3& p) const {
    double d = std::numeric_limits<double>::infinity();
    for (const auto& prim : primitives) d = std::min(d, primitive_sdf(prim, p));
    return d;
  }
};

namespace detail {

inline void check_range(const char* name, double v, double lo, double hi) {
  if (!(v >= lo && v <= hi))
    throw ConfigError(std::string("synthetic parameter ") + name + " = " + std::to_string(v) + " outside [" +
                      std::to_string(lo) + ", " + std::to_string(hi) + "]");
}

// Centers the union's analytic bounding box and shrinks it so the longest edge is at most 0.9.
inline void center_primitives(std::vector<Primitive>& prims, std::vector<Capsule>& limbs) {
  Aabb box;
  for (const auto& p : prims) box.extend(primitive_bounds(p));
  Transform t;
  t.scale = std::min(1.0, 0.9 / box.extent().maxCoeff());
  t.translation = -t.scale * box.center();
  for (auto& p : prims) transform_primitive(p, t);
  for (auto& c : limbs) {
    Primitive p = c;
    transform_primitive(p, t);
    c = std::get<Capsule>(p);
  }
}

inline TriMesh mesh_union(const std::vector<Primitive>& prims, int resolution) {
  ScalarLattice lattice;
  lattice.nx = lattice.ny = lattice.nz = resolution;
  lattice.origin = Vec3::Constant(-0.5 + 0.5 / resolution);
  lattice.spacing = 1.0 / resolution;
  lattice.values.resize(static_cast<std::size_t>(resolution) * resolution * resolution);
  parallel_for(0, static_cast<std::size_t>(resolution), 1, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t k = lo; k < hi; ++k)
      for (int j = 0; j < resolution; ++j)
        for (int i = 0; i < resolution; ++i) {
          const Vec3 p = lattice.position(i, j, static_cast<int>(k));
          double d = std::numeric_limits<double>::infinity();
          for (const auto& prim : prims) d = std::min(d, primitive_sdf(prim, p));
          lattice.values[lattice.index(i, j, static_cast<int>(k))] = -d;
        }
  });
  TriMesh mesh = marching_cubes(lattice, 0.0);
  cleanup(mesh);
  return mesh;
}

inline Vec3 rotate_limb(const Vec3& rest, double abduction_deg, double swing_deg, double mirror) {
  const double a = mirror * abduction_deg * std::numbers::pi / 180.0;
  const double s = swing_deg * std::numbers::pi / 180.0;
  // abduction: rotation about z (in the frontal plane); swing: rotation about x
  const Vec3 r1(std::cos(a) * rest.x() - std::sin(a) * rest.y(), std::sin(a) * rest.x() + std::cos(a) * rest.y(), rest.z());
  return {r1.x(), std::cos(s) * r1.y() - std::sin(s) * r1.z(), std::sin(s) * r1.y() + std::cos(s) * r1.z()};
}

}  // namespace detail

/// Deterministic synthetic solid, watertight, bounding box centered in the canonical cube.
inline SyntheticShape gen_synthetic(ShapeKind kind, const SyntheticParams& params, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };
  if (params.mesh_resolution < 16 || params.mesh_resolution > 512)
    throw ConfigError("synthetic parameter mesh_resolution must be in [16, 512]");

  SyntheticShape shape;
  shape.kind = kind;
  switch (kind) {
    case ShapeKind::sphere: {
      const double r = params.radius ? *params.radius : uniform(0.2, 0.45);
      detail::check_range("radius", r, 0.2, 0.45);
      detail::check_range("subdivisions", params.subdivisions, 0, 6);
      shape.primitives.push_back(Sphere{Vec3::Zero(), r});
      shape.mesh = icosphere(r, params.subdivisions);
      break;
    }
    case ShapeKind::box: {
      Box b;
      b.half = params.half_extents ? *params.half_extents : Vec3(uniform(0.1, 0.4), uniform(0.1, 0.4), uniform(0.1, 0.4));
      for (int a = 0; a < 3; ++a) detail::check_range("half_extent", b.half[a], 0.05, 0.45);
      b.yaw = params.yaw ? *params.yaw : uniform(-std::numbers::pi, std::numbers::pi);
      detail::check_range("yaw", b.yaw, -std::numbers::pi, std::numbers::pi);
      shape.primitives.push_back(b);
      std::vector<Capsule> none;
      detail::center_primitives(shape.primitives, none);
      shape.mesh = box_mesh(std::get<Box>(shape.primitives[0]));
      break;
    }
    case ShapeKind::union2: {
      for (int i = 0; i < 2; ++i) {
        const Vec3 c(uniform(-0.15, 0.15), uniform(-0.15, 0.15), uniform(-0.15, 0.15));
        switch (static_cast<int>(unit(rng) * 3)) {
          case 0: shape.primitives.push_back(Sphere{c, uniform(0.12, 0.25)}); break;
          case 1: shape.primitives.push_back(Box{c, Vec3(uniform(0.08, 0.2), uniform(0.08, 0.2), uniform(0.08, 0.2)), uniform(-1.5, 1.5)}); break;
          default: {
            const Vec3 d = Vec3(uniform(-1, 1), uniform(-1, 1), uniform(-1, 1)).normalized() * uniform(0.1, 0.2);
            shape.primitives.push_back(Capsule{c - d, c + d, uniform(0.06, 0.14)});
          }
        }
      }
      std::vector<Capsule> none;
      detail::center_primitives(shape.primitives, none);
      shape.mesh = detail::mesh_union(shape.primitives, params.mesh_resolution);
      break;
    }
    case ShapeKind::capsule_figure: {
      std::array<double, 8> angles{};
      if (params.limb_angles) {
        angles = *params.limb_angles;
      } else {
        for (int i = 0; i < 4; ++i) {
          angles[2 * i] = uniform(-60.0, 60.0);
          angles[2 * i + 1] = uniform(-45.0, 45.0);
        }
      }
      for (double a : angles) detail::check_range("limb angle", a, -90.0, 90.0);
      const double torso_r = 0.09, arm_r = 0.045, leg_r = 0.05;
      const Capsule torso{{0, -0.12, 0}, {0, 0.12, 0}, torso_r};
      shape.primitives.push_back(torso);
      struct LimbSpec {
        Vec3 joint;
        Vec3 rest;
        double length, radius;
      };
      // rest pose: arms horizontal, legs straight down; right side mirrors the left through x = 0
      const std::array<LimbSpec, 4> specs{{{{0.07, 0.10, 0}, {1, 0, 0}, 0.24, arm_r},
                                           {{-0.07, 0.10, 0}, {-1, 0, 0}, 0.24, arm_r},
                                           {{0.05, -0.12, 0}, {0, -1, 0}, 0.26, leg_r},
                                           {{-0.05, -0.12, 0}, {0, -1, 0}, 0.26, leg_r}}};
      for (int i = 0; i < 4; ++i) {
        const double mirror = (i % 2 == 0) ? 1.0 : -1.0;
        const Vec3 dir = detail::rotate_limb(specs[i].rest, angles[2 * i], angles[2 * i + 1], mirror);
        const Capsule limb{specs[i].joint, specs[i].joint + specs[i].length * dir, specs[i].radius};
        shape.limbs.push_back(limb);
        shape.primitives.push_back(limb);
      }
      detail::center_primitives(shape.primitives, shape.limbs);
      shape.mesh = detail::mesh_union(shape.primitives, params.mesh_resolution);
      break;
    }
  }
  require_watertight(shape.mesh, "gen_synthetic(" + to_string(kind) + ")");
  return shape;
}

}  // namespace ifnet

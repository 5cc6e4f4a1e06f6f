#pragma once

#include <cmath>
#include <optional>
#include <vector>

#include "ifnet/core/error.hpp"
#include "ifnet/core/parallel.hpp"
#include "ifnet/geometry/bvh.hpp"
#include "ifnet/geometry/mesh.hpp"
#include "ifnet/geometry/point_cloud.hpp"

namespace ifnet {

struct ImageBasis {
  Vec3 right, up;
};

/// Orthonormal image-plane axes for a viewing direction. The helper axis is the world axis least
/// aligned with the view (lowest index on ties).
inline ImageBasis image_basis(const Vec3& view) {
  int helper = 0;
  view.cwiseAbs().minCoeff(&helper);
  const Vec3 h = Vec3::Unit(helper);
  const Vec3 right = h.cross(view).normalized();
  return {right, view.cross(right).normalized()};
}

/// Orthographic depth render of the canonical cube's cross-section: one point per pixel whose ray
/// (travelling along `view_direction`) hits the surface, at the nearest hit. Pixel (i, j) sits at
/// -0.5 + (i + 0.5) / res along each image axis. Normals are those of the hit faces.
inline PointCloud depth_cull(const TriMesh& mesh, const Vec3& view_direction, int image_res) {
  if (!(view_direction.norm() > 0.0)) throw GeometryError("depth_cull: zero view direction");
  if (image_res < 1) throw GeometryError("depth_cull: image resolution must be >= 1");
  const Vec3 view = view_direction.normalized();
  const ImageBasis basis = image_basis(view);
  const TriangleBvh bvh(mesh);

  const std::size_t pixels = static_cast<std::size_t>(image_res) * image_res;
  std::vector<std::optional<RayHit>> hits(pixels);
  parallel_for(0, pixels, 4096, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t px = lo; px < hi; ++px) {
      const double a = -0.5 + (static_cast<double>(px % image_res) + 0.5) / image_res;
      const double b = -0.5 + (static_cast<double>(px / image_res) + 0.5) / image_res;
      const Vec3 origin = a * basis.right + b * basis.up - 2.0 * view;
      hits[px] = bvh.nearest_hit(origin, view);
    }
  });

  PointCloud cloud;
  for (std::size_t px = 0; px < pixels; ++px) {
    if (!hits[px]) continue;
    const double a = -0.5 + (static_cast<double>(px % image_res) + 0.5) / image_res;
    const double b = -0.5 + (static_cast<double>(px / image_res) + 0.5) / image_res;
    const Vec3 origin = a * basis.right + b * basis.up - 2.0 * view;
    cloud.points.push_back(origin + hits[px]->t * view);
    cloud.normals.push_back(mesh.face_normal(hits[px]->face));
  }
  return cloud;
}

}  // namespace ifnet

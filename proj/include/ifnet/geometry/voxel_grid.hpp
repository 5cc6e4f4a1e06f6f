#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ifnet/core/binary_io.hpp"
#include "ifnet/core/error.hpp"
#include "ifnet/geometry/mesh.hpp"
#include "ifnet/geometry/occupancy.hpp"
#include "ifnet/geometry/point_cloud.hpp"

namespace ifnet {

/// Center of cell i along one axis of a resolution-n grid covering [-0.5, 0.5].
inline double cell_center(int i, int n) { return -0.5 + (i + 0.5) / n; }

/// Cell containing coordinate x; points on an internal boundary go to the higher-index cell and
/// coordinates outside the closed cube are clamped first.
inline int cell_index(double x, int n) {
  x = std::clamp(x, -0.5, 0.5);
  const int i = static_cast<int>(std::floor((x + 0.5) * n));
  return std::clamp(i, 0, n - 1);
}

/// Binary occupancy over the canonical cube, x-fastest.
struct VoxelGrid {
  int resolution = 0;
  std::vector<std::uint8_t> data;

  VoxelGrid() = default;
  explicit VoxelGrid(int n) : resolution(n), data(static_cast<std::size_t>(n) * n * n, 0) {
    if (n < 2) throw GeometryError("voxel grid resolution must be >= 2, got " + std::to_string(n));
  }

  std::size_t index(int x, int y, int z) const {
    return static_cast<std::size_t>(x) + static_cast<std::size_t>(resolution) * (y + static_cast<std::size_t>(resolution) * z);
  }
  std::uint8_t at(int x, int y, int z) const { return data[index(x, y, z)]; }
  std::uint8_t& at(int x, int y, int z) { return data[index(x, y, z)]; }

  Vec3 center(int x, int y, int z) const {
    return {cell_center(x, resolution), cell_center(y, resolution), cell_center(z, resolution)};
  }

  std::size_t occupied() const { return static_cast<std::size_t>(std::count(data.begin(), data.end(), 1)); }

  bool operator==(const VoxelGrid&) const = default;
};

inline VoxelGrid voxelize_points(const PointCloud& cloud, int n) {
  VoxelGrid grid(n);
  for (const auto& p : cloud.points) grid.at(cell_index(p.x(), n), cell_index(p.y(), n), cell_index(p.z(), n)) = 1;
  return grid;
}

/// A cell is occupied iff its center is inside the (watertight) mesh.
inline VoxelGrid voxelize_mesh(const TriMesh& mesh, int n) {
  VoxelGrid grid(n);
  std::vector<Vec3> centers;
  centers.reserve(grid.data.size());
  for (int z = 0; z < n; ++z)
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) centers.push_back(grid.center(x, y, z));
  const auto labels = OccupancyOracle(mesh).classify(centers);
  std::copy(labels.begin(), labels.end(), grid.data.begin());
  return grid;
}

inline constexpr std::uint32_t kVoxelFormatVersion = 1;

/// "IFVX", u32 version, u32 N, N^3 bytes (0/1), x-fastest.
inline void save_voxels(const std::filesystem::path& path, const VoxelGrid& grid) {
  BinaryWriter w;
  w.magic("IFVX");
  w.put<std::uint32_t>(kVoxelFormatVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(grid.resolution));
  w.put_array<std::uint8_t>(grid.data);
  w.write_file(path);
}

inline VoxelGrid read_voxels(BinaryReader& r) {
  r.expect_magic("IFVX");
  const auto version = r.get<std::uint32_t>("version");
  if (version != kVoxelFormatVersion)
    r.fail("voxel format version " + std::to_string(version) + " is not supported (expected " +
           std::to_string(kVoxelFormatVersion) + ")");
  const auto n = r.get<std::uint32_t>("resolution");
  if (n < 2 || n > 2048) r.fail("invalid voxel resolution " + std::to_string(n));
  VoxelGrid grid(static_cast<int>(n));
  r.get_array<std::uint8_t>(grid.data, "voxel data");
  for (auto v : grid.data)
    if (v > 1) r.fail("voxel value outside {0,1}");
  return grid;
}

inline VoxelGrid load_voxels(const std::filesystem::path& path) {
  auto r = BinaryReader::from_file(path);
  return read_voxels(r);
}

}  // namespace ifnet

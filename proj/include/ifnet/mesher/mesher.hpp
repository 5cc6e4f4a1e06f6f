#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ifnet/core/binary_io.hpp"
#include "ifnet/core/error.hpp"
#include "ifnet/geometry/voxel_grid.hpp"
#include "ifnet/mesher/marching_cubes.hpp"
#include "ifnet/model/ifnet.hpp"

namespace ifnet {

struct MesherConfig {
  int resolution = 128;  // M
  double iso = 0.5;      // t
  std::size_t chunk = 32768;
  std::size_t memory_budget_mb = 2048;

  void validate() const {
    if (resolution < 2) throw ConfigError("mesher: resolution must be >= 2");
    if (resolution > 1024) throw ConfigError("mesher: resolution must be <= 1024");
    if (!(iso > 0.0 && iso < 1.0)) throw ConfigError("mesher: iso threshold must lie in (0, 1)");
    if (chunk < 1) throw ConfigError("mesher: chunk must be >= 1");
    if (memory_budget_mb < 1) throw ConfigError("mesher: memory budget must be >= 1 MB");
  }
};

/// M^3 occupancy probabilities at the cell centers of D, x-fastest.
struct OccupancyField {
  int resolution = 0;
  std::vector<double> values;

  double at(int x, int y, int z) const {
    return values[static_cast<std::size_t>(x) + static_cast<std::size_t>(resolution) * (y + static_cast<std::size_t>(resolution) * z)];
  }

  ScalarLattice lattice() const {
    ScalarLattice l;
    l.nx = l.ny = l.nz = resolution;
    l.origin = Vec3::Constant(cell_center(0, resolution));
    l.spacing = 1.0 / resolution;
    l.values = values;
    return l;
  }

  std::size_t count_at_least(double t) const {
    std::size_t n = 0;
    for (double v : values) n += v >= t;
    return n;
  }

  bool operator==(const OccupancyField&) const = default;
};

inline std::vector<Vec3> cell_centers(int m) {
  std::vector<Vec3> pts;
  pts.reserve(static_cast<std::size_t>(m) * m * m);
  for (int z = 0; z < m; ++z)
    for (int y = 0; y < m; ++y)
      for (int x = 0; x < m; ++x) pts.emplace_back(cell_center(x, m), cell_center(y, m), cell_center(z, m));
  return pts;
}

/// Rough peak bytes for one evaluation: encoder grids, the point list, and per-chunk decoder activations.
template <class T>
std::size_t evaluation_bytes(const Model<T>& model, const MesherConfig& cfg) {
  const auto& c = model.config;
  std::size_t grids = 0;
  for (int s = 0; s < c.encoder.scales; ++s) {
    const std::size_t k = static_cast<std::size_t>(c.grid_resolution(s));
    grids += k * k * k * static_cast<std::size_t>(c.encoder.channels[s]);
  }
  std::size_t width = static_cast<std::size_t>(model.decoder_input_width());
  for (int h : c.decoder.hidden) width += 2 * static_cast<std::size_t>(h);
  const std::size_t m3 = static_cast<std::size_t>(cfg.resolution) * cfg.resolution * cfg.resolution;
  const std::size_t chunks_live = static_cast<std::size_t>(std::max(1, num_threads()));
  return 2 * grids * sizeof(T) + m3 * (sizeof(Vec3) + 2 * sizeof(double)) +
         chunks_live * cfg.chunk * (width * sizeof(T) + 7 * sizeof(Vec3));
}

/// Encodes X once and decodes every cell center in chunks.
template <class T>
OccupancyField evaluate_field(const Model<T>& model, const VoxelGrid& x, const MesherConfig& cfg) {
  cfg.validate();
  check_input(model.config, x);
  const std::size_t need = evaluation_bytes(model, cfg);
  if (need > cfg.memory_budget_mb << 20)
    throw ConfigError("evaluate_field: estimated " + std::to_string(need >> 20) + " MB exceeds the budget of " +
                      std::to_string(cfg.memory_budget_mb) + " MB; use a smaller chunk or resolution");
  const auto probs = forward(model, x, cell_centers(cfg.resolution), cfg.chunk);
  OccupancyField f;
  f.resolution = cfg.resolution;
  f.values.assign(probs.begin(), probs.end());
  return f;
}

struct Reconstruction {
  TriMesh mesh;
  bool empty = false;  // the field never crossed the threshold
};

inline Reconstruction extract_surface(const OccupancyField& field, double iso) {
  Reconstruction r;
  r.mesh = marching_cubes(field.lattice(), iso);
  r.empty = r.mesh.faces.empty();
  return r;
}

/// Canonical-frame mesh; `transform` (from normalization) maps it back to the source frame.
template <class T>
Reconstruction reconstruct(const Model<T>& model, const VoxelGrid& x, const MesherConfig& cfg,
                           const std::optional<Transform>& transform = std::nullopt) {
  auto r = extract_surface(evaluate_field(model, x, cfg), cfg.iso);
  if (transform && !r.empty) r.mesh = inverse_transformed(std::move(r.mesh), *transform);
  return r;
}

// ---------------------------------------------------------------------------------------------
// Field dump: "IFFD", u32 version, u32 M, M^3 f32, x-fastest.

inline constexpr std::uint32_t kFieldFormatVersion = 1;

inline void save_field(const std::filesystem::path& path, const OccupancyField& f) {
  BinaryWriter w;
  w.magic("IFFD");
  w.put<std::uint32_t>(kFieldFormatVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(f.resolution));
  for (double v : f.values) w.put<float>(static_cast<float>(v));
  w.write_file(path);
}

inline OccupancyField load_field(const std::filesystem::path& path) {
  auto r = BinaryReader::from_file(path);
  r.expect_magic("IFFD");
  const auto version = r.get<std::uint32_t>("version");
  if (version != kFieldFormatVersion)
    r.fail("field format version " + std::to_string(version) + " is not supported (expected " +
           std::to_string(kFieldFormatVersion) + ")");
  const auto m = r.get<std::uint32_t>("resolution");
  if (m < 2 || m > 1024) r.fail("invalid field resolution " + std::to_string(m));
  OccupancyField f;
  f.resolution = static_cast<int>(m);
  std::vector<float> raw(static_cast<std::size_t>(m) * m * m);
  r.get_array<float>(raw, "field values");
  for (float v : raw)
    if (!(v >= 0.0f && v <= 1.0f)) r.fail("field value outside [0, 1]");
  if (!r.at_end()) r.fail("trailing bytes after field");
  f.values.assign(raw.begin(), raw.end());
  return f;
}

}  // namespace ifnet

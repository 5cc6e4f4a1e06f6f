#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "ifnet/core/error.hpp"
#include "ifnet/core/random.hpp"
#include "ifnet/geometry/mesh.hpp"
#include "ifnet/geometry/occupancy.hpp"
#include "ifnet/geometry/surface_sampling.hpp"
#include "ifnet/geometry/voxel_grid.hpp"

namespace ifnet {

struct SamplerConfig {
  std::size_t samples = 50000;
  double sigma1 = 0.01;
  double sigma2 = 0.1;
  double ratio = 0.5;  // fraction drawn with sigma1
  std::uint64_t seed = 0;

  void validate() const {
    if (samples < 1) throw ConfigError("sampler: samples must be >= 1");
    if (!(sigma1 > 0.0 && sigma1 < sigma2)) throw ConfigError("sampler: need 0 < sigma1 < sigma2");
    if (!(ratio >= 0.0 && ratio <= 1.0)) throw ConfigError("sampler: ratio must lie in [0, 1]");
  }

  /// Number of points drawn with sigma1 (rounded to nearest).
  std::size_t near_count() const { return static_cast<std::size_t>(std::llround(ratio * static_cast<double>(samples))); }
};

struct TrainingSample {
  Vec3 p;
  std::uint8_t o = 0;

  bool operator==(const TrainingSample&) const = default;
};

inline Vec3 clamp_to_domain(const Vec3& p) { return p.cwiseMax(-0.5).cwiseMin(0.5); }

/// Surface samples displaced by isotropic Gaussian noise, clamped to D, labeled by the occupancy oracle.
/// The first near_count() samples use sigma1, the rest sigma2.
inline std::vector<TrainingSample> sample_training_points(const TriMesh& mesh, const SamplerConfig& cfg) {
  cfg.validate();
  const OccupancyOracle oracle(mesh);
  const auto surface = sample_surface(mesh, cfg.samples, derive_seed(cfg.seed, 0));
  Rng rng(derive_seed(cfg.seed, 1));
  std::normal_distribution<double> gauss(0.0, 1.0);
  const std::size_t near = cfg.near_count();
  std::vector<Vec3> points(cfg.samples);
  for (std::size_t i = 0; i < cfg.samples; ++i) {
    const double sigma = i < near ? cfg.sigma1 : cfg.sigma2;
    const Vec3 n(gauss(rng), gauss(rng), gauss(rng));
    points[i] = clamp_to_domain(surface.points[i] + sigma * n);
  }
  const auto labels = oracle.classify(points);
  std::vector<TrainingSample> out(cfg.samples);
  for (std::size_t i = 0; i < cfg.samples; ++i) out[i] = {points[i], labels[i]};
  return out;
}

enum class Split : std::uint8_t { train = 0, val = 1, test = 2 };

inline std::string to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "?";
}

inline Split parse_split(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw ConfigError("unknown split '" + s + "'");
}

struct ShapeRecord {
  std::string id;
  Split split = Split::train;
  std::string mesh_path;   // ground truth, relative to the dataset directory
  std::string input_path;  // model input voxel grid (.ifvx), relative
  std::string cloud_path;  // input point cloud (.xyz), relative; empty for voxel tasks
  VoxelGrid input;
  std::vector<TrainingSample> samples;

  bool operator==(const ShapeRecord&) const = default;
};

struct Batch {
  std::vector<const VoxelGrid*> inputs;
  std::vector<std::vector<Vec3>> points;
  std::vector<std::vector<double>> labels;

  std::size_t shapes() const { return inputs.size(); }
};

/// For each selected record, a fresh uniform subsample of `r_size` samples without replacement.
inline Batch make_batch(const std::vector<ShapeRecord>& records, const std::vector<std::size_t>& batch_ids,
                        std::size_t r_size, Rng& rng) {
  if (r_size < 1) throw ConfigError("make_batch: R size must be >= 1");
  Batch batch;
  std::vector<std::size_t> order;
  for (auto id : batch_ids) {
    if (id >= records.size()) throw ConfigError("make_batch: shape index " + std::to_string(id) + " out of range");
    const auto& rec = records[id];
    const std::size_t s = rec.samples.size();
    if (r_size > s)
      throw ConfigError("make_batch: R size " + std::to_string(r_size) + " exceeds the " + std::to_string(s) +
                        " samples of shape " + rec.id);
    order.resize(s);
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = 0; i < r_size; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, s - 1);
      std::swap(order[i], order[pick(rng)]);
    }
    std::vector<Vec3> pts(r_size);
    std::vector<double> lab(r_size);
    for (std::size_t i = 0; i < r_size; ++i) {
      pts[i] = rec.samples[order[i]].p;
      lab[i] = rec.samples[order[i]].o;
    }
    batch.inputs.push_back(&rec.input);
    batch.points.push_back(std::move(pts));
    batch.labels.push_back(std::move(lab));
  }
  return batch;
}

}  // namespace ifnet

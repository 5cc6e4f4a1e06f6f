#pragma once

#include <cmath>
#include <cstdint>
#include <iomanip>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "ifnet/core/error.hpp"
#include "ifnet/core/parallel.hpp"
#include "ifnet/core/random.hpp"
#include "ifnet/geometry/occupancy.hpp"
#include "ifnet/geometry/surface_sampling.hpp"
#include "ifnet/metrics/kdtree.hpp"

namespace ifnet {

struct MetricConfig {
  std::size_t points = 100000;
  std::uint64_t seed = 0;

  void validate() const {
    if (points < 1) throw ConfigError("metrics: points must be >= 1");
  }
};

struct MetricReport {
  double iou = 0;
  double chamfer_l2 = 0;  // squared canonical units, unscaled
  double normal_consistency = 0;
  std::size_t points = 0;
  std::uint64_t seed = 0;
};

/// Monte-Carlo volumetric IoU over the union of both bounding boxes, grown by 5% about its center.
inline double iou(const TriMesh& pred, const TriMesh& gt, std::size_t n_points, std::uint64_t seed) {
  if (pred.faces.empty() || gt.faces.empty()) throw GeometryError("iou: empty mesh");
  const OccupancyOracle a(pred), b(gt);
  Aabb box = bounds(pred.vertices);
  box.extend(bounds(gt.vertices));
  const Vec3 margin = 0.025 * box.extent();
  const Vec3 lo = box.lo - margin, hi = box.hi + margin;
  Rng rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Vec3> pts(n_points);
  for (auto& p : pts)
    for (int k = 0; k < 3; ++k) p[k] = lo[k] + (hi[k] - lo[k]) * u(rng);
  const auto la = a.classify(pts), lb = b.classify(pts);
  std::size_t both = 0, either = 0;
  for (std::size_t i = 0; i < n_points; ++i) {
    both += la[i] && lb[i];
    either += la[i] || lb[i];
  }
  if (either == 0) throw GeometryError("iou: neither solid contains any sample point");
  return static_cast<double>(both) / static_cast<double>(either);
}

namespace detail {

/// Per-query nearest neighbour in `tree`, in parallel with a fixed result order.
inline std::vector<Neighbor> nearest_all(const KdTree& tree, const std::vector<Vec3>& queries) {
  std::vector<Neighbor> out(queries.size());
  parallel_for(0, queries.size(), 4096, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) out[i] = tree.nearest(queries[i]);
  });
  return out;
}

inline PointCloud surface_points(const TriMesh& mesh, std::size_t n, std::uint64_t seed, const char* what) {
  if (mesh.faces.empty()) throw GeometryError(std::string(what) + ": empty mesh");
  auto cloud = sample_surface(mesh, n, seed);
  for (const auto& nrm : cloud.normals)
    if (!(nrm.norm() > 0.5)) throw GeometryError(std::string(what) + ": zero-length normal");
  return cloud;
}

}  // namespace detail

/// Nearest-neighbour terms between two sampled surfaces, in both directions.
struct SurfaceComparison {
  double accuracy = 0;      // mean squared distance pred -> gt
  double completeness = 0;  // mean squared distance gt -> pred
  double normals_pred = 0;  // mean |cos| pred -> gt
  double normals_gt = 0;    // mean |cos| gt -> pred

  double chamfer() const { return 0.5 * (accuracy + completeness); }
  double normal_consistency() const { return 0.5 * (normals_pred + normals_gt); }
};

inline SurfaceComparison compare_surfaces(const PointCloud& pred, const PointCloud& gt) {
  if (pred.points.empty() || gt.points.empty()) throw GeometryError("compare_surfaces: empty sample set");
  const bool normals = pred.has_normals() && gt.has_normals();
  const KdTree tp(pred.points), tg(gt.points);
  const auto to_gt = detail::nearest_all(tg, pred.points);
  const auto to_pred = detail::nearest_all(tp, gt.points);
  SurfaceComparison c;
  for (std::size_t i = 0; i < to_gt.size(); ++i) {
    c.accuracy += to_gt[i].distance2;
    if (normals) c.normals_pred += std::abs(pred.normals[i].normalized().dot(gt.normals[to_gt[i].index].normalized()));
  }
  for (std::size_t i = 0; i < to_pred.size(); ++i) {
    c.completeness += to_pred[i].distance2;
    if (normals) c.normals_gt += std::abs(gt.normals[i].normalized().dot(pred.normals[to_pred[i].index].normalized()));
  }
  c.accuracy /= static_cast<double>(to_gt.size());
  c.normals_pred /= static_cast<double>(to_gt.size());
  c.completeness /= static_cast<double>(to_pred.size());
  c.normals_gt /= static_cast<double>(to_pred.size());
  return c;
}

/// Both surfaces are sampled with their own seed; equal seeds pair the samples of identical meshes.
inline double chamfer_l2(const TriMesh& pred, const TriMesh& gt, std::size_t n, std::uint64_t seed_pred, std::uint64_t seed_gt) {
  return compare_surfaces(detail::surface_points(pred, n, seed_pred, "chamfer_l2"),
                          detail::surface_points(gt, n, seed_gt, "chamfer_l2"))
      .chamfer();
}

inline double chamfer_l2(const TriMesh& pred, const TriMesh& gt, std::size_t n, std::uint64_t seed) {
  return chamfer_l2(pred, gt, n, seed, seed);
}

inline double normal_consistency(const TriMesh& pred, const TriMesh& gt, std::size_t n, std::uint64_t seed) {
  return compare_surfaces(detail::surface_points(pred, n, seed, "normal_consistency"),
                          detail::surface_points(gt, n, seed, "normal_consistency"))
      .normal_consistency();
}

/// All three metrics from one seed; the surface samples are shared by Chamfer and normal consistency.
inline MetricReport evaluate(const TriMesh& pred, const TriMesh& gt, const MetricConfig& cfg) {
  cfg.validate();
  require_watertight(pred, "evaluate (prediction)");
  require_watertight(gt, "evaluate (ground truth)");
  MetricReport r;
  r.points = cfg.points;
  r.seed = cfg.seed;
  r.iou = iou(pred, gt, cfg.points, derive_seed(cfg.seed, 0));
  const auto surface_seed = derive_seed(cfg.seed, 1);
  const auto c = compare_surfaces(detail::surface_points(pred, cfg.points, surface_seed, "evaluate"),
                                  detail::surface_points(gt, cfg.points, surface_seed, "evaluate"));
  r.chamfer_l2 = c.chamfer();
  r.normal_consistency = c.normal_consistency();
  return r;
}

// ---------------------------------------------------------------------------------------------
// Reporting

inline constexpr const char* kMetricsHeader = "shape,status,iou,chamfer_l2,normal_consistency,points,seed";

struct MetricRow {
  std::string shape;
  bool ok = true;
  std::string error;  // why the row failed
  MetricReport report;
};

inline std::string format_metric_row(const MetricRow& row) {
  std::ostringstream out;
  out << row.shape << ',' << (row.ok ? "ok" : "FAILED") << ',';
  if (row.ok) {
    out << std::setprecision(std::numeric_limits<double>::max_digits10) << row.report.iou << ',' << row.report.chamfer_l2
        << ',' << row.report.normal_consistency;
  } else {
    out << ",,";
  }
  out << ',' << row.report.points << ',' << row.report.seed;
  return out.str();
}

/// Arithmetic mean over the successful rows.
inline MetricRow mean_row(const std::vector<MetricRow>& rows) {
  MetricRow m;
  m.shape = "mean";
  std::size_t n = 0;
  for (const auto& r : rows) {
    if (!r.ok) continue;
    m.report.iou += r.report.iou;
    m.report.chamfer_l2 += r.report.chamfer_l2;
    m.report.normal_consistency += r.report.normal_consistency;
    m.report.points = r.report.points;
    m.report.seed = r.report.seed;
    ++n;
  }
  if (n == 0) {
    m.ok = false;
    m.error = "no successful rows";
    return m;
  }
  m.report.iou /= n;
  m.report.chamfer_l2 /= n;
  m.report.normal_consistency /= n;
  return m;
}

/// Human-readable table; Chamfer-L2 is shown in units of 1e-2.
inline std::string format_metric_table(const std::vector<MetricRow>& rows) {
  std::ostringstream out;
  out << std::left << std::setw(24) << "shape" << std::right << std::setw(8) << "IoU" << std::setw(18) << "Chamfer-L2 x1e-2"
      << std::setw(8) << "NC" << '\n';
  for (const auto& r : rows) {
    out << std::left << std::setw(24) << r.shape << std::right << std::fixed;
    if (r.ok)
      out << std::setprecision(3) << std::setw(8) << r.report.iou << std::setprecision(4) << std::setw(18)
          << r.report.chamfer_l2 * 100.0 << std::setprecision(3) << std::setw(8) << r.report.normal_consistency;
    else
      out << "  FAILED: " << r.error;
    out << '\n';
  }
  return out.str();
}

}  // namespace ifnet

#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <iomanip>
#include <memory>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "ifnet/autodiff/grad_check.hpp"
#include "ifnet/geometry/synthetic.hpp"
#include "ifnet/mesher/mesher.hpp"
#include "ifnet/metrics/metrics.hpp"
#include "ifnet/model/ifnet.hpp"

namespace ifnet::verify {

/// One property check. `value` is the measured quantity compared against `tolerance`.
struct CheckResult {
  std::string name;
  bool passed = false;
  double value = 0;
  double tolerance = 0;
  bool lower_bound = false;  // passes when value exceeds tolerance instead of staying below it
  std::string detail;
  double seconds = 0;
};

inline std::string format_result(const CheckResult& r) {
  std::ostringstream out;
  out << (r.passed ? "PASS " : "FAIL ") << std::left << std::setw(34) << r.name << std::right << std::scientific
      << std::setprecision(3) << " value " << r.value << (r.lower_bound ? "  min " : "  tol ") << r.tolerance << std::fixed << std::setprecision(2)
      << "  (" << r.seconds << " s)";
  if (!r.detail.empty()) out << "  " << r.detail;
  return out.str();
}

template <class Fn>
CheckResult timed(Fn&& fn) {
  const auto t0 = std::chrono::steady_clock::now();
  CheckResult r = fn();
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

namespace detail {

inline Tensor<double> random_tensor(Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  Tensor<double> t(std::move(shape));
  Rng rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  for (auto& v : t.values()) v = u(rng);
  return t;
}

inline std::vector<Vec3> random_points(std::size_t n, std::uint64_t seed, double lo = -0.5, double hi = 0.5) {
  Rng rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<Vec3> p(n);
  for (auto& v : p) v = Vec3(u(rng), u(rng), u(rng));
  return p;
}

inline CheckResult from_grad_report(const std::string& name, const ad::GradCheckReport& r, double tol) {
  CheckResult c;
  c.name = name;
  c.value = r.max_rel_error;
  c.tolerance = tol;
  c.passed = r.passed(tol);
  c.detail = std::to_string(r.checked) + " checked, " + std::to_string(r.excluded) + " excluded";
  if (!c.passed && !r.worst.empty()) c.detail += ", worst " + r.worst;
  return c;
}

/// conv3d whose input adjoint has its sign flipped; the weight and bias adjoints are correct.
inline ad::Var<double> mutated_conv3d(ad::Var<double> x, ad::Var<double> w, ad::Var<double> b) {
  auto& tape = *x.tape;
  auto y = kernels::conv3d(x.value(), w.value(), &b.value());
  return tape.record(std::move(y), {x, w, b}, [x, w, b](ad::Tape<double>& t, std::size_t self) {
    const auto& dy = t.accumulator(self);
    auto dx = kernels::conv3d_input_grad(dy, t.value(w.id));
    auto& ax = t.accumulator(x.id);
    for (std::size_t i = 0; i < ax.size(); ++i) ax[i] -= dx[i];
    Tensor<double> dw(t.value(w.id).shape(), 0.0), db(t.value(b.id).shape(), 0.0);
    kernels::conv3d_param_grad(t.value(x.id), dy, &dw, &db);
    auto& aw = t.accumulator(w.id);
    for (std::size_t i = 0; i < aw.size(); ++i) aw[i] += dw[i];
    auto& ab = t.accumulator(b.id);
    for (std::size_t i = 0; i < ab.size(); ++i) ab[i] += db[i];
  }, "mutated_conv3d");
}

/// Direct 8-corner trilinear formula, independent of the production kernel.
inline double corner_formula(const Tensor<double>& g, std::size_t c, const Vec3& p) {
  const std::size_t k = g.dim(1);
  std::size_t lo[3];
  double f[3];
  for (int a = 0; a < 3; ++a) {
    const double u = std::clamp((p[a] + 0.5) * static_cast<double>(k) - 0.5, 0.0, static_cast<double>(k - 1));
    lo[a] = std::min<std::size_t>(static_cast<std::size_t>(u), k - 2);
    f[a] = u - static_cast<double>(lo[a]);
  }
  double s = 0;
  for (int d = 0; d < 8; ++d) {
    const std::size_t x = lo[0] + (d & 1), y = lo[1] + (d >> 1 & 1), z = lo[2] + (d >> 2 & 1);
    const double w = ((d & 1) ? f[0] : 1 - f[0]) * ((d >> 1 & 1) ? f[1] : 1 - f[1]) * ((d >> 2 & 1) ? f[2] : 1 - f[2]);
    s += w * g[((c * k + z) * k + y) * k + x];
  }
  return s;
}

/// Signed distance bound for a convex closed mesh: max over face planes (exact sign, negative inside).
inline double convex_plane_distance(const TriMesh& m, const Vec3& p) {
  double d = -std::numeric_limits<double>::infinity();
  for (std::size_t f = 0; f < m.faces.size(); ++f) d = std::max(d, m.face_normal(f).dot(p - m.vertices[m.faces[f][0]]));
  return d;
}

}  // namespace detail

// ---------------------------------------------------------------------------------------------
// Gradients

inline std::vector<CheckResult> gradient_suite(double op_tol = 1e-6, double composite_tol = 1e-4) {
  using detail::random_tensor;
  using V = std::vector<ad::Var<double>>;
  std::vector<CheckResult> out;
  auto op = [&](const std::string& name, const ad::GradFunction& f, const std::vector<Tensor<double>>& in) {
    out.push_back(timed([&] { return detail::from_grad_report("grad." + name, ad::grad_check(f, in), op_tol); }));
  };
  op("conv3d", [](ad::Tape<double>&, const V& v) { return ad::conv3d(v[0], v[1], v[2]); },
     {random_tensor({2, 5, 4, 3}, 1), random_tensor({3, 2, 3, 3, 3}, 2), random_tensor({3}, 3)});
  op("downsample2", [](ad::Tape<double>&, const V& v) { return ad::downsample2(v[0]); }, {random_tensor({2, 4, 4, 6}, 4)});
  auto q = detail::random_points(60, 5);
  q.push_back(Vec3(0.5, -0.5, 0.5));
  auto queries = std::make_shared<const std::vector<Vec3>>(std::move(q));
  op("trilinear_sample", [queries](ad::Tape<double>&, const V& v) { return ad::trilinear_sample(v[0], queries); },
     {random_tensor({3, 4, 4, 4}, 6)});
  op("linear", [](ad::Tape<double>&, const V& v) { return ad::linear(v[0], v[1], v[2]); },
     {random_tensor({7, 5}, 7), random_tensor({4, 5}, 8), random_tensor({4}, 9)});
  {
    auto x = random_tensor({40}, 10);
    for (auto& e : x.values()) e += e >= 0 ? 0.05 : -0.05;
    op("relu", [](ad::Tape<double>&, const V& v) { return ad::relu(v[0]); }, {x});
  }
  op("sigmoid", [](ad::Tape<double>&, const V& v) { return ad::sigmoid(v[0]); }, {random_tensor({12}, 11, -5, 5)});
  op("concat+reshape", [](ad::Tape<double>&, const V& v) { return ad::concat<double>({ad::reshape(v[0], {3, 4}), v[1]}, 1); },
     {random_tensor({12}, 12), random_tensor({3, 2}, 13)});
  op("mean_pool+repeat_rows", [](ad::Tape<double>&, const V& v) { return ad::repeat_rows(ad::global_mean_pool(v[0]), 4); },
     {random_tensor({3, 2, 2, 2}, 14)});
  op("add", [](ad::Tape<double>&, const V& v) { return ad::add(v[0], v[1]); }, {random_tensor({5}, 15), random_tensor({5}, 16)});
  for (auto red : {ad::Reduction::mean, ad::Reduction::sum}) {
    const std::vector<double> labels{1, 0, 1, 1, 0, 0};
    op(red == ad::Reduction::mean ? "bce_loss.mean" : "bce_loss.sum",
       [labels, red](ad::Tape<double>&, const V& v) { return ad::bce_loss(v[0], labels, red); }, {random_tensor({6}, 17, -4, 4)});
  }

  // encode -> extract -> decode, tiny model
  out.push_back(timed([&] {
    ModelConfig c;
    c.encoder = {8, 2, {2, 3}, 1};
    c.query.distance = 1.0 / 8;
    c.decoder.hidden = {6};
    const auto m = init_model<double>(c, ModelKind::ifnet, 18);
    Tensor<double> x({1, 8, 8, 8});
    Rng rng(19);
    for (auto& e : x.values()) e = static_cast<double>(rng() & 1);
    const auto pts = detail::random_points(12, 20, -0.45, 0.45);
    std::vector<Tensor<double>> in;
    for (std::size_t i = 0; i < m.params.size(); ++i) in.push_back(m.params.tensor(i));
    const auto r = ad::grad_check(
        [&](ad::Tape<double>& tape, const V& v) {
          const BoundParams<double> b(m.params, v);
          const auto grids = encode(c, b, tape.constant(x));
          return decode(c, b, extract_features(grids, expand_queries(pts, c.query.distance))).probabilities;
        },
        in);
    return detail::from_grad_report("grad.composite", r, composite_tol);
  }));
  return out;
}

/// A conv3d with a sign-flipped input adjoint must fail the gradient check.
inline CheckResult mutation_detected(double op_tol = 1e-6) {
  return timed([&] {
    const auto r = ad::grad_check(
        [](ad::Tape<double>&, const std::vector<ad::Var<double>>& v) { return detail::mutated_conv3d(v[0], v[1], v[2]); },
        {detail::random_tensor({2, 4, 4, 4}, 21), detail::random_tensor({2, 2, 3, 3, 3}, 22), detail::random_tensor({2}, 23)});
    CheckResult c;
    c.name = "mutation.conv_adjoint_sign";
    c.value = r.max_rel_error;
    c.tolerance = op_tol;
    c.lower_bound = true;
    c.passed = !r.passed(op_tol);
    c.detail = c.passed ? "injected error detected" : "injected error NOT detected";
    return c;
  });
}

// ---------------------------------------------------------------------------------------------
// Trilinear sampling

inline CheckResult trilinear_oracle(std::size_t cases = 100, double tol = 1e-12) {
  return timed([&] {
    double worst = 0;
    bool identities = true;
    for (std::size_t t = 0; t < cases; ++t) {
      const std::size_t k = 2 + t % 7, ch = 1 + t % 3;
      const auto grid = detail::random_tensor({ch, k, k, k}, 100 + t);
      const auto pts = detail::random_points(1, 200 + t);
      const auto got = kernels::trilinear_sample(grid, std::span<const Vec3>(pts));
      for (std::size_t c = 0; c < ch; ++c) worst = std::max(worst, std::abs(got[c] - detail::corner_formula(grid, c, pts[0])));
    }
    // exact identities: nodes, midpoints between nodes, constant grids (K = 4 keeps coordinates exact)
    const std::size_t k = 4;
    const auto grid = detail::random_tensor({1, k, k, k}, 300);
    auto at = [&](std::size_t x, std::size_t y, std::size_t z) { return grid[(z * k + y) * k + x]; };
    std::vector<Vec3> nodes, mids;
    std::vector<double> node_want, mid_want;
    for (std::size_t z = 0; z < k; ++z)
      for (std::size_t y = 0; y < k; ++y)
        for (std::size_t x = 0; x < k; ++x) {
          nodes.push_back(Vec3(cell_center(int(x), int(k)), cell_center(int(y), int(k)), cell_center(int(z), int(k))));
          node_want.push_back(at(x, y, z));
          if (x + 1 < k) {
            mids.push_back(nodes.back() + Vec3(0.5 / k, 0, 0));
            mid_want.push_back(0.5 * at(x, y, z) + 0.5 * at(x + 1, y, z));
          }
        }
    const auto ns = kernels::trilinear_sample(grid, std::span<const Vec3>(nodes));
    const auto ms = kernels::trilinear_sample(grid, std::span<const Vec3>(mids));
    for (std::size_t i = 0; i < nodes.size(); ++i) identities &= ns[i] == node_want[i];
    for (std::size_t i = 0; i < mids.size(); ++i) identities &= ms[i] == mid_want[i];
    const Tensor<double> constant({2, 4, 4, 4}, 0.3);
    const auto qs = detail::random_points(50, 301);
    const auto cs = kernels::trilinear_sample(constant, std::span<const Vec3>(qs));
    for (double v : cs.values()) identities &= v == 0.3;
    CheckResult c;
    c.name = "trilinear.oracle";
    c.value = worst;
    c.tolerance = tol;
    c.passed = worst <= tol && identities;
    c.detail = std::to_string(cases) + " cases; node/midpoint/constant identities " + (identities ? "exact" : "BROKEN");
    return c;
  });
}

// ---------------------------------------------------------------------------------------------
// Occupancy oracle against convex shapes with an exact half-space inside test

inline std::vector<CheckResult> occupancy_oracle_suite(std::size_t n = 10000, double band = 1e-5) {
  const std::vector<std::pair<std::string, TriMesh>> shapes{
      {"sphere", icosphere(0.4, 4)},
      {"box", box_mesh(Box{Vec3(0.02, -0.03, 0.01), Vec3(0.3, 0.2, 0.35), 0.4})},
      {"capsule", capsule_mesh(Capsule{Vec3(-0.2, -0.1, 0.0), Vec3(0.2, 0.15, 0.05), 0.15}, 24, 6)}};
  std::vector<CheckResult> out;
  for (std::size_t s = 0; s < shapes.size(); ++s) {
    out.push_back(timed([&] {
      const auto& mesh = shapes[s].second;
      const auto pts = detail::random_points(n, 400 + s);
      const auto labels = occupancy_oracle(mesh, pts);
      std::size_t compared = 0, wrong = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const double d = detail::convex_plane_distance(mesh, pts[i]);
        if (std::abs(d) <= band) continue;
        ++compared;
        wrong += labels[i] != (d < 0 ? 1 : 0);
      }
      CheckResult c;
      c.name = "occupancy." + shapes[s].first;
      c.value = static_cast<double>(wrong);
      c.tolerance = 0;
      c.passed = wrong == 0 && compared > 0;
      c.detail = std::to_string(wrong) + " disagreements in " + std::to_string(compared) + " points outside the band";
      return c;
    }));
  }
  return out;
}

// ---------------------------------------------------------------------------------------------
// Marching cubes on an analytic field

struct SphereSurfaceCheck {
  CheckResult closed, radius, chamfer;
};

inline SphereSurfaceCheck marching_cubes_sphere(int m = 64, double radius = 0.4, double chamfer_tol = 1e-4) {
  SphereSurfaceCheck out;
  TriMesh mesh;
  out.closed = timed([&] {
    OccupancyField f;
    f.resolution = m;
    for (const auto& p : cell_centers(m)) f.values.push_back(std::clamp(0.5 - 8.0 * (p.norm() - radius), 0.0, 1.0));
    mesh = marching_cubes(f.lattice(), 0.5);
    const auto report = check_closed(mesh);
    CheckResult c;
    c.name = "marching_cubes.closed_oriented";
    c.value = static_cast<double>(report.open_edges + report.nonmanifold_edges);
    c.passed = !mesh.faces.empty() && report.watertight() && consistently_oriented(mesh) && mesh.signed_volume() > 0;
    c.detail = report.describe();
    return c;
  });
  out.radius = timed([&] {
    double worst = 0;
    for (const auto& v : mesh.vertices) worst = std::max(worst, std::abs(v.norm() - radius));
    CheckResult c;
    c.name = "marching_cubes.vertex_radius";
    c.value = worst;
    c.tolerance = 1.0 / m;
    c.passed = !mesh.vertices.empty() && worst <= c.tolerance;
    return c;
  });
  out.chamfer = timed([&] {
    CheckResult c;
    c.name = "marching_cubes.chamfer_to_sphere";
    c.tolerance = chamfer_tol;
    if (mesh.faces.empty()) return c;
    c.value = chamfer_l2(mesh, icosphere(radius, 6), 20000, 1, 2);
    c.passed = c.value < chamfer_tol;
    return c;
  });
  return out;
}

// ---------------------------------------------------------------------------------------------
// Metrics

inline std::vector<CheckResult> metric_sanity(std::size_t n = 100000) {
  std::vector<CheckResult> out;
  const auto s = icosphere(0.4, 4);
  MetricReport self;
  out.push_back(timed([&] {
    MetricConfig cfg;
    cfg.points = n;
    cfg.seed = 77;
    self = evaluate(s, s, cfg);
    CheckResult c;
    c.name = "metrics.self_iou";
    c.value = std::abs(1.0 - self.iou);
    c.passed = self.iou == 1.0;
    return c;
  }));
  CheckResult ch;
  ch.name = "metrics.self_chamfer";
  ch.value = self.chamfer_l2;
  ch.tolerance = 1e-12;
  ch.passed = self.chamfer_l2 <= 1e-12;
  out.push_back(ch);
  CheckResult nc;
  nc.name = "metrics.self_normal_consistency";
  nc.value = 1.0 - self.normal_consistency;
  nc.tolerance = 1e-3;
  nc.passed = self.normal_consistency >= 0.999;
  out.push_back(nc);
  out.push_back(timed([&] {
    const double v = iou(icosphere(0.32, 5), icosphere(0.4, 5), n, 78);
    CheckResult c;
    c.name = "metrics.concentric_iou";
    c.value = std::abs(v - 0.512);
    c.tolerance = 0.01;
    c.passed = c.value <= c.tolerance;
    c.detail = "IoU " + std::to_string(v) + " vs 0.512";
    return c;
  }));
  return out;
}

inline CheckResult kdtree_exactness(std::size_t n = 1000) {
  return timed([&] {
    const auto pts = detail::random_points(n, 500);
    const auto queries = detail::random_points(n, 501);
    const KdTree tree(pts);
    std::size_t mismatches = 0;
    for (const auto& q : queries) {
      std::uint32_t best = 0;
      double bd = std::numeric_limits<double>::infinity();
      for (std::uint32_t i = 0; i < pts.size(); ++i) {
        const double d = (pts[i] - q).squaredNorm();
        if (d < bd) {
          bd = d;
          best = i;
        }
      }
      mismatches += tree.nearest(q).index != best;
    }
    CheckResult c;
    c.name = "kdtree.brute_force";
    c.value = static_cast<double>(mismatches);
    c.passed = mismatches == 0;
    c.detail = std::to_string(n) + " queries";
    return c;
  });
}

// ---------------------------------------------------------------------------------------------
// Shift equivariance

struct ShiftResult {
  double ifnet_deviation = 0;
  double baseline_deviation = 0;
  int shift = 0;
  int margin = 0;
};

/// forward(X, p) against forward(X shifted by s cells along x, p + s/N), both architectures from
/// the same seed. Content and queries keep the receptive radius from the boundary in both runs.
inline ShiftResult shift_experiment(const ModelConfig& config, std::uint64_t seed, int multiple = 1) {
  config.validate();
  const int n = config.encoder.resolution;
  const int s = multiple * (1 << (config.encoder.scales - 1));
  const int r = config.receptive_radius();
  if (2 * r + s >= n) throw ConfigError("shift_experiment: resolution too small for the receptive radius");
  const auto net = init_model<double>(config, ModelKind::ifnet, seed);
  const auto base = init_model<double>(config, ModelKind::baseline, seed);
  VoxelGrid x(n), xs(n);
  Rng rng(derive_seed(seed, 1));
  for (int z = r; z < n - r; ++z)
    for (int y = r; y < n - r; ++y)
      for (int i = r; i < n - r - s; ++i)
        if ((rng() & 3) == 0) {
          x.at(i, y, z) = 1;
          xs.at(i + s, y, z) = 1;
        }
  std::vector<Vec3> pts, shifted;
  const double lo = -0.5 + static_cast<double>(r) / n, hi_x = 0.5 - static_cast<double>(r + s) / n, hi = 0.5 - static_cast<double>(r) / n;
  std::uniform_real_distribution<double> ux(lo, hi_x), uy(lo, hi);
  for (int i = 0; i < 200; ++i) {
    const Vec3 p(ux(rng), uy(rng), uy(rng));
    pts.push_back(p);
    shifted.push_back(p + Vec3(static_cast<double>(s) / n, 0, 0));
  }
  ShiftResult out;
  out.shift = s;
  out.margin = r;
  const auto a0 = forward(net, x, pts), a1 = forward(net, xs, shifted);
  const auto b0 = forward(base, x, pts), b1 = forward(base, xs, shifted);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    out.ifnet_deviation = std::max(out.ifnet_deviation, std::abs(a0[i] - a1[i]));
    out.baseline_deviation = std::max(out.baseline_deviation, std::abs(b0[i] - b1[i]));
  }
  return out;
}

inline ModelConfig shift_test_config() {
  ModelConfig c;
  c.encoder = {64, 3, {8, 16, 16}, 2};
  c.query.distance = 1.0 / 64;
  c.decoder.hidden = {32, 32};
  return c;
}

inline std::vector<CheckResult> shift_equivariance(double tol = 1e-5, double contrast = 10.0) {
  ShiftResult r;
  std::vector<CheckResult> out;
  out.push_back(timed([&] {
    r = shift_experiment(shift_test_config(), 2024);
    CheckResult c;
    c.name = "equivariance.ifnet";
    c.value = r.ifnet_deviation;
    c.tolerance = tol;
    c.passed = r.ifnet_deviation < tol;
    c.detail = "shift " + std::to_string(r.shift) + " cells, margin " + std::to_string(r.margin);
    return c;
  }));
  CheckResult b;
  b.name = "equivariance.baseline_contrast";
  b.value = r.baseline_deviation;
  b.tolerance = contrast * r.ifnet_deviation;
  b.lower_bound = true;
  b.passed = r.baseline_deviation >= contrast * r.ifnet_deviation && r.baseline_deviation > 0;
  b.detail = "baseline deviation must be >= " + std::to_string(contrast) + "x the IF-Net deviation";
  out.push_back(b);
  return out;
}

// ---------------------------------------------------------------------------------------------

inline std::vector<CheckResult> run_all() {
  std::vector<CheckResult> all;
  auto append = [&](std::vector<CheckResult> v) { all.insert(all.end(), v.begin(), v.end()); };
  append(gradient_suite());
  all.push_back(mutation_detected());
  all.push_back(trilinear_oracle());
  append(occupancy_oracle_suite());
  const auto mc = marching_cubes_sphere();
  all.push_back(mc.closed);
  all.push_back(mc.radius);
  all.push_back(mc.chamfer);
  all.push_back(kdtree_exactness());
  append(metric_sanity());
  append(shift_equivariance());
  return all;
}

}  // namespace ifnet::verify

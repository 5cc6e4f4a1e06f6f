// Acceptance run: one PASS/FAIL line per criterion. `--only N` (repeatable) selects criteria.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "ifnet/cli/commands.hpp"

using namespace ifnet;
namespace fs = std::filesystem;

namespace {

// Tolerances and budgets. Criteria 1-6 use the property battery with these values.
constexpr double kOpGradTol = 1e-6;
constexpr double kCompositeGradTol = 1e-4;
constexpr double kTrilinearTol = 1e-12;
constexpr std::size_t kTrilinearCases = 100;
constexpr std::size_t kOccupancyPoints = 10000;
constexpr double kOccupancyBand = 1e-5;
constexpr int kSphereFieldRes = 64;
constexpr double kSphereRadius = 0.4;
constexpr double kSphereChamferTol = 1e-4;
constexpr std::size_t kMetricPoints = 100000;
constexpr double kShiftTol = 1e-5;
constexpr double kBaselineContrast = 10.0;

// Overfit: one sphere, N = 16, default architecture and trainer settings.
constexpr int kOverfitInputRes = 16;
constexpr std::size_t kOverfitSteps = 1000;
constexpr int kOverfitMeshRes = 64;
constexpr double kOverfitIou = 0.95;
constexpr double kOverfitChamfer = 5e-4;

// Generalization: 50 training and 10 test shapes at N = 32.
constexpr double kGeneralIou = 0.7;
constexpr double kLimbCoverage = 0.9;
constexpr int kLimbSamples = 25;

// Single view: reconstruction Chamfer below 10x the overfit bound, and better completeness than the input.
constexpr double kSingleViewChamfer = 10 * kOverfitChamfer;

struct Outcome {
  bool passed = false;
  std::string summary;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Outcome from_checks(const std::vector<verify::CheckResult>& checks, double budget_s) {
  Outcome o{true, ""};
  double total = 0, worst = 0;
  for (const auto& c : checks) {
    total += c.seconds;
    if (!c.passed) {
      o.passed = false;
      o.summary += c.name + " failed (" + fmt("%.3g", c.value) + "); ";
    }
    if (c.tolerance > 0 && !c.lower_bound) worst = std::max(worst, c.value / c.tolerance);
  }
  if (total > budget_s) {
    o.passed = false;
    o.summary += "runtime " + fmt("%.1f", total) + " s over budget; ";
  }
  o.summary += std::to_string(checks.size()) + " checks, worst value/tolerance (upper bounds) " + fmt("%.3g", worst) + ", " +
               fmt("%.2f", total) + " s";
  return o;
}

cli::Options quiet_options() {
  static std::ostringstream sink;
  cli::Options o;
  o.out = &sink;
  o.err = &sink;
  o.deterministic = true;
  return o;
}

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

// ---------------------------------------------------------------------------------------------

Outcome criterion1() {
  auto checks = verify::gradient_suite(kOpGradTol, kCompositeGradTol);
  checks.push_back(verify::mutation_detected(kOpGradTol));
  return from_checks(checks, 120);
}

Outcome criterion2() { return from_checks({verify::trilinear_oracle(kTrilinearCases, kTrilinearTol)}, 1); }

Outcome criterion3() { return from_checks(verify::occupancy_oracle_suite(kOccupancyPoints, kOccupancyBand), 30); }

Outcome criterion4() {
  const auto r = verify::marching_cubes_sphere(kSphereFieldRes, kSphereRadius, kSphereChamferTol);
  return from_checks({r.closed, r.radius, r.chamfer}, 30);
}

Outcome criterion5() {
  auto checks = verify::metric_sanity(kMetricPoints);
  checks.push_back(verify::kdtree_exactness());
  return from_checks(checks, 600);
}

Outcome criterion6() { return from_checks(verify::shift_equivariance(kShiftTol, kBaselineContrast), 60); }

Outcome criterion7() {
  const auto t0 = std::chrono::steady_clock::now();
  SyntheticParams sp;
  sp.radius = 0.35;
  sp.subdivisions = 5;
  const auto shape = gen_synthetic(ShapeKind::sphere, sp, 1);
  ShapeRecord rec;
  rec.id = "sphere";
  rec.input = voxelize_mesh(shape.mesh, kOverfitInputRes);
  SamplerConfig sc;
  sc.seed = 2;
  rec.samples = sample_training_points(shape.mesh, sc);

  TrainerConfig tc;
  tc.max_steps = kOverfitSteps;
  auto state = init_train_state(init_model<float>(ModelConfig::for_resolution(kOverfitInputRes), ModelKind::ifnet, 3), tc);
  train<float>({rec}, ValidationSet{}, tc, state);

  MesherConfig mc;
  mc.resolution = kOverfitMeshRes;
  const auto out = reconstruct(best_model(state), rec.input, mc);
  if (out.empty) return {false, "empty reconstruction"};
  MetricConfig m;
  m.seed = 4;
  const auto r = evaluate(out.mesh, shape.mesh, m);
  const double t = seconds_since(t0);
  const bool ok = r.iou >= kOverfitIou && r.chamfer_l2 < kOverfitChamfer && t < 15 * 60;
  return {ok, "IoU " + fmt("%.4f", r.iou) + " (>= " + fmt("%.2f", kOverfitIou) + "), Chamfer " + fmt("%.3e", r.chamfer_l2) +
                  " (< " + fmt("%.0e", kOverfitChamfer) + "), " + std::to_string(kOverfitSteps) + " steps, " + fmt("%.0f", t) + " s"};
}

cli::RunConfig general_config(const fs::path& root) {
  return cli::parse_run_config("task = voxel_32\n"
                               "seed = 8\n"
                               "num_shapes = 60\n"
                               "val_fraction = 0\n"
                               "test_fraction = 0.1666667\n"
                               "samples_per_shape = 20000\n"
                               "channels = 16,32,32,64\n"
                               "hidden = 128,128\n"
                               "batch_shapes = 4\n"
                               "points_per_shape = 1024\n"
                               "learning_rate = 0.0005\n"
                               "max_steps = 3000\n"
                               "val_interval = 500\n"
                               "mesh_res = 64\n"
                               "metric_points = 50000\n"
                               "data_dir = " + (root / "data").string() + "\n" +
                               "checkpoint = " + (root / "model.ifck").string() + "\n" +
                               "loss_log = " + (root / "loss.csv").string() + "\n" +
                               "output_dir = " + (root / "recon").string() + "\n" +
                               "eval_csv = " + (root / "metrics.csv").string() + "\n");
}

/// Fraction of points along each limb axis inside the reconstruction; the minimum over limbs.
double min_limb_coverage(const SyntheticShape& shape, const TriMesh& recon) {
  const OccupancyOracle oracle(recon);
  double worst = 1.0;
  for (const auto& limb : shape.limbs) {
    std::vector<Vec3> pts;
    for (int i = 0; i < kLimbSamples; ++i) pts.push_back(limb.a + (limb.b - limb.a) * (i / double(kLimbSamples - 1)));
    const auto inside = oracle.classify(pts);
    worst = std::min(worst, std::count(inside.begin(), inside.end(), 1) / double(pts.size()));
  }
  return worst;
}

Outcome criterion8(const fs::path& work) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto root = work / "general";
  fs::remove_all(root);
  const auto cfg = general_config(root);
  const auto opts = quiet_options();
  cli::cmd_gen(cfg, opts);
  cli::cmd_train(cfg, opts);
  cli::ReconstructArgs ra;
  cli::cmd_reconstruct(cfg, opts, ra);

  const auto records = read_manifest(root / "data/manifest.tsv");
  std::size_t n_train = 0, n_test = 0, figures = 0, failed = 0;
  double iou_sum = 0, worst_cover = 1.0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (records[i].split == Split::train) ++n_train;
    if (records[i].split != Split::test) continue;
    ++n_test;
    const auto shape = cli::dataset_shape(cfg, i);
    try {
      const auto pred = load_mesh(root / "recon" / (records[i].id + ".obj"));
      iou_sum += iou(pred, shape.mesh, cfg.metrics.points, cfg.metrics.seed);
      if (shape.kind == ShapeKind::capsule_figure) {
        ++figures;
        worst_cover = std::min(worst_cover, min_limb_coverage(shape, pred));
      }
    } catch (const Error&) {
      ++failed;  // counts as IoU 0; a figure that cannot be evaluated has no limbs covered
      if (shape.kind == ShapeKind::capsule_figure) {
        ++figures;
        worst_cover = 0;
      }
    }
  }
  const double mean_iou = n_test ? iou_sum / n_test : 0;
  const double t = seconds_since(t0);
  const bool ok = n_train == 50 && n_test == 10 && figures > 0 && mean_iou >= kGeneralIou && worst_cover >= kLimbCoverage &&
                  t <= 2 * 3600;
  return {ok, "mean IoU " + fmt("%.4f", mean_iou) + " (>= " + fmt("%.2f", kGeneralIou) + ") over " + std::to_string(n_test) +
                  " test shapes (" + std::to_string(failed) + " unusable), worst limb coverage " + fmt("%.2f", worst_cover) +
                  " over " + std::to_string(figures) + " capsule figures (>= " + fmt("%.2f", kLimbCoverage) + "), " +
                  std::to_string(n_train) + " training shapes, " + fmt("%.0f", t) + " s"};
}

cli::RunConfig single_view_config(const fs::path& root) {
  return cli::parse_run_config("task = single_view\n"
                               "seed = 21\n"
                               "input_res = 32\n"
                               "depth_res = 128\n"
                               "view_direction = 0.3,-0.2,-1\n"
                               "num_shapes = 31\n"
                               "shape_kinds = sphere,box,union2\n"
                               "val_fraction = 0\n"
                               "test_fraction = 0.04\n"
                               "samples_per_shape = 20000\n"
                               "channels = 16,32,32,64\n"
                               "hidden = 128,128\n"
                               "batch_shapes = 4\n"
                               "points_per_shape = 1024\n"
                               "learning_rate = 0.0005\n"
                               "max_steps = 1500\n"
                               "val_interval = 500\n"
                               "mesh_res = 64\n"
                               "metric_points = 50000\n"
                               "data_dir = " + (root / "data").string() + "\n" +
                               "checkpoint = " + (root / "model.ifck").string() + "\n" +
                               "loss_log = " + (root / "loss.csv").string() + "\n" +
                               "output_dir = " + (root / "recon").string() + "\n" +
                               "eval_csv = " + (root / "metrics.csv").string() + "\n");
}

Outcome criterion9(const fs::path& work) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto root = work / "single_view";
  fs::remove_all(root);
  const auto cfg = single_view_config(root);
  const auto opts = quiet_options();
  cli::cmd_gen(cfg, opts);
  cli::cmd_train(cfg, opts);
  cli::ReconstructArgs ra;
  cli::cmd_reconstruct(cfg, opts, ra);

  const auto records = read_manifest(root / "data/manifest.tsv");
  std::optional<std::size_t> held_out;
  for (std::size_t i = 0; i < records.size() && !held_out; ++i)
    if (records[i].split == Split::test) held_out = i;
  if (!held_out) return {false, "no held-out shape"};
  const auto& rec = records[*held_out];
  const auto gt = load_mesh(root / "data" / rec.mesh_path);
  const auto pred_path = root / "recon" / (rec.id + ".obj");
  TriMesh pred;
  try {
    pred = load_mesh(pred_path);
  } catch (const Error& e) {
    return {false, std::string("reconstruction unusable: ") + e.what()};
  }
  const auto closed = check_closed(pred);
  const std::size_t n = cfg.metrics.points;
  const auto gt_cloud = sample_surface(gt, n, 31);
  const auto recon_vs_gt = compare_surfaces(sample_surface(pred, n, 32), gt_cloud);
  const auto input_vs_gt = compare_surfaces(load_xyz(root / "data" / rec.cloud_path), gt_cloud);
  const double chamfer = recon_vs_gt.chamfer();
  const bool ok = closed.watertight() && std::isfinite(chamfer) && chamfer < kSingleViewChamfer &&
                  input_vs_gt.completeness > recon_vs_gt.completeness;
  return {ok, rec.id + ": " + (closed.watertight() ? "closed" : "NOT closed (" + closed.describe() + ")") + ", Chamfer " +
                  fmt("%.3e", chamfer) + " (< " + fmt("%.0e", kSingleViewChamfer) + "), completeness input " +
                  fmt("%.3e", input_vs_gt.completeness) + " > reconstruction " + fmt("%.3e", recon_vs_gt.completeness) + ", " +
                  fmt("%.0f", seconds_since(t0)) + " s"};
}

cli::RunConfig determinism_config(const fs::path& root) {
  return cli::parse_run_config("task = pointcloud_sparse\n"
                               "seed = 13\n"
                               "input_res = 16\n"
                               "scales = 3\n"
                               "channels = 8,8,16\n"
                               "hidden = 32,32\n"
                               "num_shapes = 6\n"
                               "val_fraction = 0.2\n"
                               "test_fraction = 0.34\n"
                               "mesh_resolution = 48\n"
                               "samples_per_shape = 5000\n"
                               "batch_shapes = 2\n"
                               "points_per_shape = 512\n"
                               "learning_rate = 0.003\n"
                               "max_steps = 60\n"
                               "val_interval = 20\n"
                               "mesh_res = 32\n"
                               "metric_points = 20000\n"
                               "data_dir = " + (root / "data").string() + "\n" +
                               "checkpoint = " + (root / "runs/model.ifck").string() + "\n" +
                               "loss_log = " + (root / "runs/loss.csv").string() + "\n" +
                               "output_dir = " + (root / "runs/recon").string() + "\n" +
                               "eval_csv = " + (root / "runs/metrics.csv").string() + "\n");
}

Outcome criterion10(const fs::path& work) {
  std::map<std::string, std::string> first;
  std::vector<std::string> differing;
  std::size_t files = 0;
  for (int run = 0; run < 2; ++run) {
    const auto root = work / ("determinism_" + std::to_string(run));
    fs::remove_all(root);
    const auto cfg = determinism_config(root);
    const auto opts = quiet_options();
    cli::cmd_gen(cfg, opts);
    cli::cmd_train(cfg, opts);
    cli::cmd_reconstruct(cfg, opts, {});
    cli::cmd_eval(cfg, opts, {});
    std::vector<fs::path> all;
    for (const auto& e : fs::recursive_directory_iterator(root))
      if (e.is_regular_file()) all.push_back(e.path());
    std::sort(all.begin(), all.end());
    for (const auto& p : all) {
      const auto rel = fs::relative(p, root).string();
      if (run == 0) {
        first[rel] = read_bytes(p);
      } else {
        ++files;
        auto it = first.find(rel);
        if (it == first.end() || it->second != read_bytes(p)) differing.push_back(rel);
      }
    }
    if (run == 1 && first.size() != files) differing.push_back("(file count)");
  }
  std::string summary = std::to_string(files) + " files from gen/train/reconstruct/eval compared across two runs";
  for (const char* must : {"data/manifest.tsv", "data/dataset.ifds", "runs/model.ifck", "runs/loss.csv", "runs/metrics.csv"})
    if (!first.count(must)) differing.push_back(std::string("missing ") + must);
  if (!differing.empty()) summary += "; differing: " + differing.front() + (differing.size() > 1 ? " and others" : "");
  return {differing.empty(), summary};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  std::vector<int> only;
  std::string work = (fs::temp_directory_path() / "ifnet_acceptance").string();
  app.add_option("--only", only, "criterion number(s) to run")->check(CLI::Range(1, 10));
  app.add_option("--work", work, "scratch directory");
  CLI11_PARSE(app, argc, argv);
  std::set<int> selected(only.begin(), only.end());
  if (selected.empty())
    for (int i = 1; i <= 10; ++i) selected.insert(i);

  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"gradient suite", criterion1},
      {"trilinear oracle", criterion2},
      {"occupancy oracle", criterion3},
      {"marching cubes sphere", criterion4},
      {"metric sanity", criterion5},
      {"shift equivariance", criterion6},
      {"overfit reconstruction", criterion7},
      {"generalization", [&] { return criterion8(work); }},
      {"single-view completion", [&] { return criterion9(work); }},
      {"determinism", [&] { return criterion10(work); }},
  };
  bool all = true;
  for (int id : selected) {
    const auto& [name, fn] = criteria[id - 1];
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    std::cout << "criterion " << id << " " << (o.passed ? "PASS" : "FAIL") << " " << name << ": " << o.summary << std::endl;
    all = all && o.passed;
  }
  return all ? 0 : 1;
}

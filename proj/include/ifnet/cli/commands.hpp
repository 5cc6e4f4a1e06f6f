#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "ifnet/cli/config.hpp"
#include "ifnet/cli/verify.hpp"
#include "ifnet/geometry/depth_cull.hpp"
#include "ifnet/geometry/mesh_io.hpp"
#include "ifnet/geometry/point_cloud.hpp"
#include "ifnet/mesher/mesher.hpp"
#include "ifnet/metrics/metrics.hpp"
#include "ifnet/model/checkpoint.hpp"
#include "ifnet/sampler/dataset.hpp"
#include "ifnet/trainer/state_io.hpp"

namespace ifnet::cli {

namespace fs = std::filesystem;

enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitNumerical = 2, kExitEmpty = 3 };

struct Options {
  bool deterministic = false;
  bool resume = false;
  std::ostream* out = &std::cout;
  std::ostream* err = &std::cerr;
};

// ---------------------------------------------------------------------------------------------
// Task inputs

struct TaskInput {
  VoxelGrid grid;
  std::optional<PointCloud> cloud;  // point-cloud and single-view tasks
};

/// The model input a task derives from a ground-truth mesh.
inline TaskInput make_task_input(const RunConfig& c, const TriMesh& mesh, std::uint64_t seed) {
  const int n = c.resolution();
  TaskInput in;
  if (is_voxel_task(c.task)) {
    in.grid = voxelize_mesh(mesh, n);
    return in;
  }
  PointCloud cloud;
  if (c.task == Task::single_view) {
    cloud.points = depth_cull(mesh, c.gen.view_direction, c.gen.depth_res).points;
    if (cloud.points.empty()) throw GeometryError("single_view: the depth render saw no surface");
  } else {
    cloud.points = sample_surface(mesh, c.cloud_points(), seed).points;
  }
  in.grid = voxelize_points(cloud, n);
  in.cloud = std::move(cloud);
  return in;
}

/// Voxelizes a reconstruction input by file type: .ifvx as is, .xyz at N, meshes per the task.
inline VoxelGrid load_task_input(const RunConfig& c, const fs::path& path) {
  const auto ext = detail::trim(path.extension().string());
  if (ext == ".ifvx") return load_voxels(path);
  if (ext == ".xyz") return voxelize_points(load_xyz(path), c.resolution());
  if (ext == ".off" || ext == ".obj") return make_task_input(c, load_mesh(path), derive_seed(c.seed, 0x696e)).grid;
  throw ConfigError("unsupported input " + path.string() + " (expected .ifvx, .xyz, .off or .obj)");
}

// ---------------------------------------------------------------------------------------------
// gen

/// Seeded shuffle; floor(val * n) validation and floor(test * n) test shapes, the rest train.
inline std::vector<Split> assign_splits(std::size_t n, double val_fraction, double test_fraction, std::uint64_t seed) {
  // the epsilon keeps fractions like 0.29 * 100 from flooring to 28
  const auto count = [n](double f) { return static_cast<std::size_t>(std::floor(f * static_cast<double>(n) + 1e-9)); };
  const std::size_t n_val = count(val_fraction), n_test = count(test_fraction);
  if (n_val + n_test > n) throw ConfigError("split fractions exceed the shape count");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  for (std::size_t i = n; i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(order[i - 1], order[pick(rng)]);
  }
  std::vector<Split> splits(n, Split::train);
  for (std::size_t i = 0; i < n_val; ++i) splits[order[i]] = Split::val;
  for (std::size_t i = n_val; i < n_val + n_test; ++i) splits[order[i]] = Split::test;
  return splits;
}

inline std::string shape_id(ShapeKind kind, std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "_%04zu", i);
  return to_string(kind) + buf;
}

/// Shape i of a generated dataset; a pure function of (config, i).
inline SyntheticShape dataset_shape(const RunConfig& c, std::size_t i) {
  SyntheticParams params;
  params.mesh_resolution = c.gen.mesh_resolution;
  return gen_synthetic(c.gen.kinds[i % c.gen.kinds.size()], params, derive_seed(derive_seed(c.seed, i), 0));
}

inline int cmd_gen(const RunConfig& c, const Options& o) {
  const fs::path root(c.paths.data_dir);
  const auto splits = assign_splits(c.gen.num_shapes, c.gen.val_fraction, c.gen.test_fraction, derive_seed(c.seed, 0x73706c));
  std::vector<ShapeRecord> records;
  for (std::size_t i = 0; i < c.gen.num_shapes; ++i) {
    const std::uint64_t seed = derive_seed(c.seed, i);
    const auto shape = dataset_shape(c, i);

    ShapeRecord r;
    r.id = shape_id(shape.kind, i);
    r.split = splits[i];
    r.mesh_path = "meshes/" + r.id + ".off";
    r.input_path = "inputs/" + r.id + ".ifvx";
    auto input = make_task_input(c, shape.mesh, derive_seed(seed, 1));
    if (input.cloud) {
      r.cloud_path = "inputs/" + r.id + ".xyz";
      save_xyz(root / r.cloud_path, *input.cloud);
    }
    r.input = std::move(input.grid);
    SamplerConfig sc = c.sampler;
    sc.seed = derive_seed(seed, 2);
    r.samples = sample_training_points(shape.mesh, sc);
    save_mesh(root / r.mesh_path, shape.mesh);
    save_voxels(root / r.input_path, r.input);
    *o.out << "gen " << r.id << " (" << to_string(r.split) << ")\n";
    records.push_back(std::move(r));
  }
  write_dataset(root / "dataset.ifds", records);
  write_manifest(root / "manifest.tsv", records);
  std::size_t counts[3] = {0, 0, 0};
  for (const auto& r : records) ++counts[static_cast<int>(r.split)];
  *o.out << "wrote " << records.size() << " shapes to " << root.string() << " (train " << counts[0] << ", val " << counts[1]
         << ", test " << counts[2] << ")\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------------------------
// train

inline std::vector<ShapeRecord> load_split(const std::vector<ShapeRecord>& all, Split s) {
  std::vector<ShapeRecord> out;
  for (const auto& r : all)
    if (r.split == s) out.push_back(r);
  return out;
}

inline std::vector<ShapeRecord> load_dataset_for(const RunConfig& c) {
  auto records = read_dataset(fs::path(c.paths.data_dir) / "dataset.ifds");
  for (const auto& r : records)
    if (r.input.resolution != c.resolution())
      throw ConfigError("dataset/config mismatch: shape " + r.id + " has input resolution " + std::to_string(r.input.resolution) +
                        ", config wants " + std::to_string(c.resolution()));
  return records;
}

template <class T>
int run_training(const RunConfig& c, const Options& o) {
  const auto records = load_dataset_for(c);
  const auto train_set = load_split(records, Split::train);
  const auto val_set = load_split(records, Split::val);
  if (train_set.empty()) throw ConfigError("no training shapes in " + c.paths.data_dir);
  const auto tcfg = c.trainer_config();
  const auto mcfg = c.model_config();
  const fs::path ckpt(c.paths.checkpoint);

  TrainState<T> state;
  bool resumed = false;
  if (o.resume && fs::exists(ckpt)) {
    state = load_train_state<T>(ckpt);
    if (!(state.model.config == mcfg) || state.model.kind != c.model)
      throw ConfigError("checkpoint " + ckpt.string() + " was trained with a different model configuration");
    resumed = true;
    *o.out << "resuming from step " << state.step << "\n";
  } else {
    state = init_train_state(init_model<T>(mcfg, c.model, derive_seed(c.seed, 0x6d6f64)), tcfg);
  }
  const auto val = make_validation_set(val_set, tcfg.val_points, derive_seed(c.seed, 0x76));
  LossLog log(c.paths.loss_log, resumed, state.step);

  TrainCallbacks<T> cb;
  cb.on_row = [&](const LossRow& row) {
    LossRow r = row;
    if (o.deterministic) r.elapsed_s = 0;
    log.append(r);
  };
  cb.on_checkpoint = [&](const TrainState<T>& s) { save_train_state(ckpt, s); };
  if (state.step >= tcfg.max_steps) {
    *o.out << "nothing to do: checkpoint is already at step " << state.step << "\n";
    return kExitOk;
  }
  const auto reason = train(train_set, val, tcfg, state, cb);
  *o.out << (reason == StopReason::early_stop ? "early stop" : "finished") << " at step " << state.step;
  if (!val.empty()) *o.out << ", best validation loss " << state.best_val;
  *o.out << "\ncheckpoint " << ckpt.string() << "\n";
  return kExitOk;
}

inline int cmd_train(const RunConfig& c, const Options& o) {
  return c.trainer.precision == Precision::f64 ? run_training<double>(c, o) : run_training<float>(c, o);
}

// ---------------------------------------------------------------------------------------------
// reconstruct

struct ReconstructArgs {
  std::string input;   // single input file; empty reconstructs a split of the dataset
  std::string output;  // OBJ path for a single input
  std::string field;   // optional IFFD dump for a single input
  std::string checkpoint;  // default: the config's checkpoint
  std::string split = "test";
};

template <class T>
int run_reconstruct(const RunConfig& c, const Options& o, const ReconstructArgs& a) {
  const auto model = load_model<T>(a.checkpoint.empty() ? c.paths.checkpoint : a.checkpoint);
  if (model.config.encoder.resolution != c.resolution())
    throw ConfigError("checkpoint input resolution " + std::to_string(model.config.encoder.resolution) + " differs from config " +
                      std::to_string(c.resolution()));
  std::vector<std::pair<VoxelGrid, fs::path>> jobs;
  if (!a.input.empty()) {
    if (a.output.empty()) throw ConfigError("reconstruct: --output is required with --input");
    jobs.emplace_back(load_task_input(c, a.input), a.output);
  } else {
    if (!a.field.empty()) throw ConfigError("reconstruct: --field needs a single --input");
    const Split s = parse_split(a.split);
    for (auto& r : load_split(load_dataset_for(c), s))
      jobs.emplace_back(std::move(r.input), fs::path(c.paths.output_dir) / (r.id + ".obj"));
    if (jobs.empty()) throw ConfigError("no shapes in split " + a.split);
  }
  int code = kExitOk;
  for (const auto& [x, path] : jobs) {
    const auto field = evaluate_field(model, x, c.mesher);
    if (!a.field.empty()) save_field(a.field, field);
    const auto rec = extract_surface(field, c.mesher.iso);
    save_mesh(path, rec.mesh);
    if (rec.empty) {
      *o.err << "warning: " << path.string() << ": the occupancy field never reaches " << c.mesher.iso << "; wrote an empty mesh\n";
      code = kExitEmpty;
    } else {
      *o.out << "wrote " << path.string() << " (" << rec.mesh.vertices.size() << " vertices, " << rec.mesh.faces.size()
             << " faces)\n";
    }
  }
  return code;
}

inline int cmd_reconstruct(const RunConfig& c, const Options& o, const ReconstructArgs& a) {
  return c.trainer.precision == Precision::f64 ? run_reconstruct<double>(c, o, a) : run_reconstruct<float>(c, o, a);
}

// ---------------------------------------------------------------------------------------------
// eval

struct EvalArgs {
  std::string pred_dir;  // default: output_dir
  std::string gt_dir;    // default: the dataset meshes of `split`
  std::string csv;       // default: eval_csv
  std::string split = "test";
};

inline std::optional<fs::path> find_mesh(const fs::path& dir, const std::string& id) {
  for (const char* ext : {".obj", ".off"})
    if (fs::exists(dir / (id + ext))) return dir / (id + ext);
  return std::nullopt;
}

inline MetricRow evaluate_pair(const std::string& id, const std::optional<fs::path>& pred, const fs::path& gt, const MetricConfig& m) {
  MetricRow row;
  row.shape = id;
  row.report.points = m.points;
  row.report.seed = m.seed;
  try {
    if (!pred) throw Error("missing prediction");
    row.report = evaluate(load_mesh(*pred), load_mesh(gt), m);
  } catch (const Error& e) {
    row.ok = false;
    row.error = e.what();
  }
  return row;
}

inline int cmd_eval(const RunConfig& c, const Options& o, const EvalArgs& a) {
  const fs::path pred_dir(a.pred_dir.empty() ? c.paths.output_dir : a.pred_dir);
  std::vector<std::pair<std::string, fs::path>> shapes;
  if (!a.gt_dir.empty()) {
    if (!fs::is_directory(a.gt_dir)) throw ConfigError("ground-truth directory " + a.gt_dir + " does not exist");
    for (const auto& e : fs::directory_iterator(a.gt_dir)) {
      const auto ext = e.path().extension().string();
      if (e.is_regular_file() && (ext == ".off" || ext == ".obj")) shapes.emplace_back(e.path().stem().string(), e.path());
    }
  } else {
    const fs::path root(c.paths.data_dir);
    for (const auto& r : read_manifest(root / "manifest.tsv"))
      if (to_string(r.split) == a.split) shapes.emplace_back(r.id, root / r.mesh_path);
  }
  std::sort(shapes.begin(), shapes.end());
  if (shapes.empty()) throw ConfigError("eval: no ground-truth shapes found");

  std::vector<MetricRow> rows;
  for (const auto& [id, gt] : shapes) rows.push_back(evaluate_pair(id, find_mesh(pred_dir, id), gt, c.metric_config()));
  const auto mean = mean_row(rows);

  const fs::path csv(a.csv.empty() ? c.paths.eval_csv : a.csv);
  if (csv.has_parent_path()) fs::create_directories(csv.parent_path());
  std::ofstream out(csv, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + csv.string());
  out << kMetricsHeader << '\n';
  for (const auto& r : rows) out << format_metric_row(r) << '\n';
  out << format_metric_row(mean) << '\n';
  if (!out) throw Error("write failed: " + csv.string());

  auto table = rows;
  table.push_back(mean);
  *o.out << format_metric_table(table);
  const auto failed = std::count_if(rows.begin(), rows.end(), [](const MetricRow& r) { return !r.ok; });
  if (failed) {
    *o.err << failed << " of " << rows.size() << " shapes FAILED\n";
    return kExitUsage;
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------------------------
// verify

inline int cmd_verify(const Options& o) {
  const auto results = verify::run_all();
  std::size_t failed = 0;
  for (const auto& r : results) {
    *o.out << verify::format_result(r) << '\n';
    failed += !r.passed;
  }
  *o.out << (results.size() - failed) << "/" << results.size() << " checks passed\n";
  return failed ? kExitUsage : kExitOk;
}

}  // namespace ifnet::cli

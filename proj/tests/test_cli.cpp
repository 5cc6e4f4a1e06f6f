#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "ifnet/cli/commands.hpp"

using namespace ifnet;
using namespace ifnet::cli;
namespace fs = std::filesystem;

namespace {

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_file(const fs::path& p, const std::string& text) {
  fs::create_directories(p.parent_path());
  std::ofstream(p, std::ios::binary) << text;
}

fs::path fresh_dir(const std::string& name) {
  const auto d = fs::temp_directory_path() / ("ifnet_cli_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

std::string small_config(const fs::path& root, const std::string& extra = "") {
  std::ostringstream s;
  s << "task = pointcloud_sparse\n"
    << "seed = 5\n"
    << "input_res = 16\n"
    << "scales = 3\n"
    << "channels = 4,4,4\n"
    << "convs_per_scale = 1\n"
    << "hidden = 16\n"
    << "num_shapes = 5\n"
    << "shape_kinds = sphere,box\n"
    << "val_fraction = 0.2\n"
    << "test_fraction = 0.2\n"
    << "samples_per_shape = 2000\n"
    << "data_dir = " << (root / "data").string() << "\n"
    << "checkpoint = " << (root / "runs/model.ifck").string() << "\n"
    << "loss_log = " << (root / "runs/loss.csv").string() << "\n"
    << "output_dir = " << (root / "runs/recon").string() << "\n"
    << "eval_csv = " << (root / "runs/metrics.csv").string() << "\n"
    << "batch_shapes = 2\n"
    << "points_per_shape = 256\n"
    << "learning_rate = 0.003\n"
    << "max_steps = 12\n"
    << "val_interval = 4\n"
    << "val_points = 500\n"
    << "mesh_res = 24\n"
    << "metric_points = 5000\n"
    << extra;
  return s.str();
}

Options quiet() {
  static std::ostringstream sink;
  Options o;
  o.out = &sink;
  o.err = &sink;
  o.deterministic = true;
  return o;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(IFNET_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

// ---------------------------------------------------------------------------------------------
// RunConfig

TEST(RunConfig, RoundTripDropsOnlyComments) {
  const std::string body = small_config("/tmp/x");
  const auto c = parse_run_config("# header\n\n" + body + "# trailing\n");
  EXPECT_EQ(serialize(c), body);
  EXPECT_EQ(serialize(parse_run_config(serialize(c))), body);
}

TEST(RunConfig, UnknownKeyReportsLine) {
  try {
    parse_run_config("task = voxel_32\n\nlearning_rat = 0.1\n");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
    EXPECT_NE(std::string(e.what()).find("learning_rat"), std::string::npos);
  }
}

TEST(RunConfig, DuplicateAndMalformedLines) {
  EXPECT_THROW(parse_run_config("seed = 1\nseed = 2\n"), ParseError);
  EXPECT_THROW(parse_run_config("seed 1\n"), ParseError);
  EXPECT_THROW(parse_run_config("seed = one\n"), ConfigError);
  EXPECT_THROW(parse_run_config("seed = 1.5\n"), ConfigError);
}

TEST(RunConfig, RangeChecks) {
  for (const char* bad : {"sigma1 = -0.1", "sigma1 = 0.2", "ratio = 1.5", "iso = 1", "iso = 0", "mesh_res = 1",
                          "learning_rate = -1", "beta1 = 1", "channels = 4,0,4,4", "scales = 1", "input_res = 30",
                          "val_fraction = 0.7\ntest_fraction = 0.4", "view_direction = 0,0,0", "task = voxel_64",
                          "shape_kinds = sphere,torus", "precision = f16", "model = unet", "query_distance = 0.6",
                          "channels = 4,4", "batch_shapes = 0"})
    EXPECT_THROW(parse_run_config(std::string(bad) + "\n"), ConfigError) << bad;
}

TEST(RunConfig, TaskDefaultsIndependentOfKeyOrder) {
  const auto sparse = parse_run_config("task = pointcloud_sparse\n");
  EXPECT_EQ(sparse.resolution(), 32);
  EXPECT_EQ(sparse.cloud_points(), 300u);
  const auto dense = parse_run_config("cloud_points = 1000\ntask = pointcloud_dense\n");
  EXPECT_EQ(dense.resolution(), 128);
  EXPECT_EQ(dense.cloud_points(), 1000u);
  EXPECT_EQ(parse_run_config("task = single_view\n").resolution(), 128);
  EXPECT_EQ(parse_run_config("task = voxel_128\n").resolution(), 128);
  EXPECT_THROW(parse_run_config("task = voxel_32\ninput_res = 16\n"), ConfigError);
  const auto m = parse_run_config("task = pointcloud_dense\nscales = 4\n").model_config();
  EXPECT_DOUBLE_EQ(m.query.distance, 1.0 / 128);
}

TEST(RunConfig, OverrideReplacesInPlace) {
  const auto c = parse_run_config("seed = 1\nmesh_res = 64\n");
  const auto o = with_override(c, "seed", "9");
  EXPECT_EQ(o.seed, 9u);
  EXPECT_EQ(serialize(o), "seed = 9\nmesh_res = 64\n");
  EXPECT_EQ(with_override(c, "iso", "0.4").mesher.iso, 0.4);
}

// ---------------------------------------------------------------------------------------------
// gen

TEST(Splits, FloorRuleRemainderToTrain) {
  struct Case {
    std::size_t n;
    double val, test;
    std::size_t want_val, want_test;
  };
  for (const auto& k : std::vector<Case>{{10, 0.25, 0.15, 2, 1}, {100, 0.29, 0.1, 29, 10}, {7, 0.5, 0.5, 3, 3}, {3, 0.0, 0.0, 0, 0}, {50, 0.1, 0.2, 5, 10}}) {
    const auto s = assign_splits(k.n, k.val, k.test, 11);
    ASSERT_EQ(s.size(), k.n);
    EXPECT_EQ(std::count(s.begin(), s.end(), Split::val), static_cast<long>(k.want_val));
    EXPECT_EQ(std::count(s.begin(), s.end(), Split::test), static_cast<long>(k.want_test));
    EXPECT_EQ(std::count(s.begin(), s.end(), Split::train), static_cast<long>(k.n - k.want_val - k.want_test));
  }
  EXPECT_EQ(assign_splits(20, 0.2, 0.2, 1), assign_splits(20, 0.2, 0.2, 1));
  EXPECT_NE(assign_splits(20, 0.2, 0.2, 1), assign_splits(20, 0.2, 0.2, 2));
}

TEST(Gen, CloudsManifestAndDeterminism) {
  const auto root = fresh_dir("gen");
  const auto cfg = parse_run_config(small_config(root));
  ASSERT_EQ(cmd_gen(cfg, quiet()), 0);
  const auto manifest = read_file(root / "data/manifest.tsv");
  const auto dataset = read_file(root / "data/dataset.ifds");
  const auto records = read_manifest(root / "data/manifest.tsv");
  ASSERT_EQ(records.size(), 5u);
  for (const auto& r : records) {
    std::ifstream in(root / "data" / r.cloud_path);
    std::size_t lines = 0;
    for (std::string l; std::getline(in, l);) ++lines;
    EXPECT_EQ(lines, 300u) << r.id;
    EXPECT_NO_THROW(load_mesh(root / "data" / r.mesh_path));
    EXPECT_EQ(load_voxels(root / "data" / r.input_path).resolution, 16);
  }
  EXPECT_EQ(std::count_if(records.begin(), records.end(), [](auto& r) { return r.split == Split::val; }), 1);
  EXPECT_EQ(std::count_if(records.begin(), records.end(), [](auto& r) { return r.split == Split::test; }), 1);
  const auto ds = read_dataset(root / "data/dataset.ifds");
  for (const auto& r : ds) EXPECT_EQ(r.input, load_voxels(root / "data" / r.input_path));

  fs::remove_all(root / "data");
  ASSERT_EQ(cmd_gen(cfg, quiet()), 0);
  EXPECT_EQ(read_file(root / "data/manifest.tsv"), manifest);
  EXPECT_EQ(read_file(root / "data/dataset.ifds"), dataset);
}

TEST(Gen, VoxelAndSingleViewInputs) {
  const auto root = fresh_dir("gen_tasks");
  {
    const auto cfg = parse_run_config("task = voxel_32\nnum_shapes = 2\nsamples_per_shape = 100\nshape_kinds = sphere\ndata_dir = " +
                                      (root / "v").string() + "\n");
    ASSERT_EQ(cmd_gen(cfg, quiet()), 0);
    const auto ds = read_dataset(root / "v/dataset.ifds");
    EXPECT_TRUE(ds[0].cloud_path.empty());
    EXPECT_EQ(ds[0].input, voxelize_mesh(load_mesh(root / "v" / ds[0].mesh_path), 32));
  }
  {
    const auto cfg = parse_run_config("task = single_view\ninput_res = 32\nnum_shapes = 1\nsamples_per_shape = 100\n"
                                      "shape_kinds = sphere\ndepth_res = 64\nview_direction = 0,0,-1\ndata_dir = " +
                                      (root / "s").string() + "\n");
    ASSERT_EQ(cmd_gen(cfg, quiet()), 0);
    const auto ds = read_dataset(root / "s/dataset.ifds");
    const auto cloud = load_xyz(root / "s" / ds[0].cloud_path);
    ASSERT_GT(cloud.size(), 100u);
    // the camera looks down -z from above, so only the upper half is seen
    for (const auto& p : cloud.points) EXPECT_GT(p.z(), -1e-9);
  }
}

// ---------------------------------------------------------------------------------------------
// train / reconstruct / eval

TEST(Train, DeterministicAndResumable) {
  const auto root = fresh_dir("train");
  const auto cfg = parse_run_config(small_config(root));
  ASSERT_EQ(cmd_gen(cfg, quiet()), 0);
  ASSERT_EQ(cmd_train(cfg, quiet()), 0);
  const auto ckpt = read_file(root / "runs/model.ifck");
  const auto log = read_file(root / "runs/loss.csv");
  EXPECT_EQ(std::count(log.begin(), log.end(), '\n'), 13);

  ASSERT_EQ(cmd_train(cfg, quiet()), 0);
  EXPECT_EQ(read_file(root / "runs/model.ifck"), ckpt);
  EXPECT_EQ(read_file(root / "runs/loss.csv"), log);

  // stop at step 8, then resume to 12
  fs::remove_all(root / "runs");
  ASSERT_EQ(cmd_train(with_override(cfg, "max_steps", "8"), quiet()), 0);
  auto o = quiet();
  o.resume = true;
  ASSERT_EQ(cmd_train(cfg, o), 0);
  EXPECT_EQ(read_file(root / "runs/model.ifck"), ckpt);
  EXPECT_EQ(read_file(root / "runs/loss.csv"), log);

  // a resumed checkpoint must match the configured architecture
  EXPECT_THROW(cmd_train(with_override(cfg, "hidden", "8"), o), ConfigError);
}

TEST(Train, DatasetResolutionMismatch) {
  const auto root = fresh_dir("mismatch");
  const auto cfg = parse_run_config(small_config(root));
  ASSERT_EQ(cmd_gen(cfg, quiet()), 0);
  EXPECT_THROW(cmd_train(with_override(cfg, "input_res", "32"), quiet()), ConfigError);
}

TEST(Reconstruct, WritesParsableObjPerShape) {
  const auto root = fresh_dir("recon");
  const auto cfg = parse_run_config(small_config(root));
  ASSERT_EQ(cmd_gen(cfg, quiet()), 0);
  ASSERT_EQ(cmd_train(cfg, quiet()), 0);
  ReconstructArgs a;
  a.split = "train";
  const int code = cmd_reconstruct(cfg, quiet(), a);
  EXPECT_TRUE(code == 0 || code == 3);
  for (const auto& r : read_manifest(root / "data/manifest.tsv")) {
    if (r.split != Split::train) continue;
    const auto path = root / "runs/recon" / (r.id + ".obj");
    ASSERT_TRUE(fs::exists(path));
    if (code == 0) EXPECT_NO_THROW(load_mesh(path));
  }
  // single input with field dump
  const auto first = read_manifest(root / "data/manifest.tsv").front();
  a.input = (root / "data" / first.cloud_path).string();
  a.output = (root / "single.obj").string();
  a.field = (root / "single.iffd").string();
  cmd_reconstruct(cfg, quiet(), a);
  EXPECT_EQ(load_field(root / "single.iffd").resolution, 24);
  EXPECT_TRUE(fs::exists(root / "single.obj"));
}

TEST(Reconstruct, EmptySurfaceGivesEmptyObjAndExit3) {
  const auto root = fresh_dir("empty");
  const auto cfg = parse_run_config(small_config(root));
  auto m = init_model<double>(cfg.model_config(), ModelKind::ifnet, 1);
  for (std::size_t i = 0; i < m.params.size(); ++i)
    for (auto& v : m.params.tensor(i).values()) v = 0;
  m.params["dec.out.bias"][0] = -5.0;  // sigmoid(-5) < 0.5 everywhere
  save_model(root / "runs/model.ifck", m);
  save_voxels(root / "in.ifvx", VoxelGrid(16));
  ReconstructArgs a;
  a.input = (root / "in.ifvx").string();
  a.output = (root / "out.obj").string();
  EXPECT_EQ(cmd_reconstruct(cfg, quiet(), a), kExitEmpty);
  ASSERT_TRUE(fs::exists(root / "out.obj"));
  EXPECT_EQ(fs::file_size(root / "out.obj"), 0u);
}

TEST(Eval, SelfEvaluationMeanRowAndFailures) {
  const auto root = fresh_dir("eval");
  save_mesh(root / "gt/a.off", icosphere(0.4, 3));
  save_mesh(root / "gt/b.off", box_mesh(Box{Vec3::Zero(), Vec3(0.3, 0.2, 0.1), 0.3}));
  save_mesh(root / "pred/a.obj", icosphere(0.4, 3));
  save_mesh(root / "pred/b.obj", box_mesh(Box{Vec3::Zero(), Vec3(0.3, 0.2, 0.1), 0.3}));
  const auto cfg = parse_run_config(small_config(root));
  EvalArgs a;
  a.pred_dir = (root / "pred").string();
  a.gt_dir = (root / "gt").string();
  a.csv = (root / "m.csv").string();
  ASSERT_EQ(cmd_eval(cfg, quiet(), a), 0);

  std::ifstream in(a.csv);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, kMetricsHeader);
  std::vector<std::vector<double>> vals;
  while (std::getline(in, line)) {
    std::stringstream ls(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    ASSERT_EQ(cells[1], "ok");
    vals.push_back({std::stod(cells[2]), std::stod(cells[3]), std::stod(cells[4])});
  }
  ASSERT_EQ(vals.size(), 3u);
  for (int r = 0; r < 2; ++r) {
    EXPECT_EQ(vals[r][0], 1.0);
    EXPECT_LE(vals[r][1], 1e-12);
    EXPECT_GE(vals[r][2], 0.999);
  }
  for (int k = 0; k < 3; ++k) EXPECT_NEAR(vals[2][k], (vals[0][k] + vals[1][k]) / 2, 1e-12);

  fs::remove(root / "pred/b.obj");
  EXPECT_EQ(cmd_eval(cfg, quiet(), a), kExitUsage);
  const auto csv = read_file(a.csv);
  EXPECT_NE(csv.find("b,FAILED,,,"), std::string::npos);
  EXPECT_NE(csv.find("mean,ok,1,"), std::string::npos);
}

// ---------------------------------------------------------------------------------------------
// binary exit codes

TEST(Binary, ExitCodes) {
  const auto root = fresh_dir("binary");
  write_file(root / "bad.cfg", "no_such_key = 1\n");
  EXPECT_EQ(run_cli("--config " + (root / "bad.cfg").string() + " gen"), 1);
  EXPECT_EQ(run_cli("gen"), 1);
  EXPECT_EQ(run_cli("frobnicate"), 1);
  EXPECT_EQ(run_cli("--help"), 0);

  const auto cfg_path = root / "run.cfg";
  write_file(cfg_path, small_config(root));
  EXPECT_EQ(run_cli("--config " + cfg_path.string() + " --seed 7 gen"), 0);
  EXPECT_EQ(run_cli("--config " + cfg_path.string() + " --deterministic --threads 2 train"), 0);

  // a NaN weight in the optimizer state aborts training with code 2
  auto s = load_train_state<double>(root / "runs/model.ifck");
  s.model.params.tensor(0)[0] = std::numeric_limits<double>::quiet_NaN();
  s.step = 0;
  save_train_state(root / "runs/model.ifck", s);
  EXPECT_EQ(run_cli("--config " + cfg_path.string() + " --resume train"), 2);
}

TEST(Binary, VerifyPasses) { EXPECT_EQ(run_cli("verify"), 0); }

TEST(Configs, ShippedConfigsLoadAndRoundTrip) {
  std::size_t n = 0;
  for (const auto& e : fs::directory_iterator(fs::path(IFNET_SOURCE_DIR) / "configs")) {
    if (e.path().extension() != ".cfg") continue;
    ++n;
    const auto c = load_run_config(e.path());
    std::string expected;
    std::istringstream in(read_file(e.path()));
    for (std::string line; std::getline(in, line);)
      if (!line.empty() && line[0] != '#') expected += line + "\n";
    EXPECT_EQ(serialize(c), expected) << e.path();
  }
  EXPECT_GE(n, 5u);
}

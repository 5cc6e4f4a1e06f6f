#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <cstring>
#include <fstream>

#include "ifnet/mesher/mesher.hpp"

using namespace ifnet;
namespace fs = std::filesystem;

namespace {

ModelConfig small_config() {
  ModelConfig c;
  c.encoder = {8, 2, {3, 4}, 1};
  c.query.distance = 1.0 / 8;
  c.decoder.hidden = {8};
  return c;
}

VoxelGrid ball(int n, double r) {
  VoxelGrid g(n);
  for (int z = 0; z < n; ++z)
    for (int y = 0; y < n; ++y)
      for (int x = 0; x < n; ++x) g.at(x, y, z) = g.center(x, y, z).norm() < r;
  return g;
}

Model<double> constant_model(double p) {
  auto m = init_model<double>(small_config(), ModelKind::ifnet, 1);
  for (std::size_t i = 0; i < m.params.size(); ++i)
    if (m.params.name(i).starts_with("dec.")) m.params.tensor(i).fill(0.0);
  m.params["dec.out.bias"][0] = std::log(p / (1 - p));
  return m;
}

OccupancyField analytic_field(int m, double r) {
  OccupancyField f;
  f.resolution = m;
  for (const auto& p : cell_centers(m)) f.values.push_back(1.0 / (1.0 + std::exp((p.norm() - r) * 40.0)));
  return f;
}

}  // namespace

TEST(MesherConfig, Validation) {
  EXPECT_NO_THROW(MesherConfig{}.validate());
  MesherConfig c;
  c.resolution = 1;
  EXPECT_THROW(c.validate(), ConfigError);
  c = MesherConfig{};
  c.iso = 1.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = MesherConfig{};
  c.chunk = 0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(EvaluateField, RiggedConstantModel) {
  MesherConfig cfg;
  cfg.resolution = 12;
  const auto f = evaluate_field(constant_model(0.7), ball(8, 0.3), cfg);
  ASSERT_EQ(f.values.size(), 12u * 12 * 12);
  for (double v : f.values) EXPECT_NEAR(v, 0.7, 1e-12);
  const auto r = extract_surface(f, 0.5);
  EXPECT_TRUE(r.empty);
  EXPECT_TRUE(r.mesh.faces.empty());
}

TEST(EvaluateField, OctantCentersAtResolutionTwo) {
  const auto m = init_model<double>(small_config(), ModelKind::ifnet, 2);
  const auto x = ball(8, 0.3);
  MesherConfig cfg;
  cfg.resolution = 2;
  const auto f = evaluate_field(m, x, cfg);
  ASSERT_EQ(f.values.size(), 8u);
  for (int z = 0; z < 2; ++z)
    for (int y = 0; y < 2; ++y)
      for (int xx = 0; xx < 2; ++xx) {
        const Vec3 p(xx ? 0.25 : -0.25, y ? 0.25 : -0.25, z ? 0.25 : -0.25);
        EXPECT_NEAR(f.at(xx, y, z), forward(m, x, {p})[0], 1e-12);
      }
}

TEST(EvaluateField, ChunkedMatchesUnchunked) {
  const auto m = init_model<float>(small_config(), ModelKind::ifnet, 3);
  const auto x = ball(8, 0.35);
  MesherConfig whole, chunked;
  whole.resolution = chunked.resolution = 20;
  whole.chunk = 20 * 20 * 20;
  chunked.chunk = 333;
  const auto a = evaluate_field(m, x, whole), b = evaluate_field(m, x, chunked);
  for (std::size_t i = 0; i < a.values.size(); ++i) EXPECT_NEAR(a.values[i], b.values[i], 1e-6);
}

TEST(EvaluateField, ThreadCountIndependent) {
  const auto m = init_model<float>(small_config(), ModelKind::ifnet, 4);
  MesherConfig cfg;
  cfg.resolution = 16;
  cfg.chunk = 500;
  set_num_threads(1);
  const auto a = evaluate_field(m, ball(8, 0.3), cfg);
  set_num_threads(4);
  const auto b = evaluate_field(m, ball(8, 0.3), cfg);
  set_num_threads(1);
  EXPECT_EQ(a, b);
}

TEST(EvaluateField, MemoryBudgetIsEnforced) {
  const auto m = init_model<float>(small_config(), ModelKind::ifnet, 5);
  MesherConfig cfg;
  cfg.resolution = 256;
  cfg.memory_budget_mb = 16;
  try {
    evaluate_field(m, ball(8, 0.3), cfg);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("smaller chunk"), std::string::npos);
  }
}

TEST(EvaluateField, InputResolutionMismatch) {
  MesherConfig cfg;
  cfg.resolution = 4;
  EXPECT_THROW(evaluate_field(constant_model(0.3), ball(16, 0.3), cfg), ConfigError);
}

TEST(ExtractSurface, ThresholdMonotonicity) {
  const auto m = init_model<double>(small_config(), ModelKind::ifnet, 6);
  MesherConfig cfg;
  cfg.resolution = 16;
  const auto f = evaluate_field(m, ball(8, 0.3), cfg);
  std::size_t prev = f.values.size() + 1;
  for (double t = 0.05; t < 1.0; t += 0.05) {
    const auto n = f.count_at_least(t);
    EXPECT_LE(n, prev);
    prev = n;
  }
}

TEST(ExtractSurface, AnalyticFieldClosedAndOriented) {
  const auto r = extract_surface(analytic_field(32, 0.3), 0.5);
  ASSERT_FALSE(r.empty);
  EXPECT_TRUE(check_closed(r.mesh).watertight());
  EXPECT_TRUE(consistently_oriented(r.mesh));
  EXPECT_GT(r.mesh.signed_volume(), 0.0);
  for (const auto& v : r.mesh.vertices) EXPECT_NEAR(v.norm(), 0.3, 2.0 / 32);
}

TEST(Reconstruct, InverseTransformApplied) {
  const auto m = constant_model(0.4);
  const auto b = init_model<double>(small_config(), ModelKind::baseline, 7);
  MesherConfig cfg;
  cfg.resolution = 10;
  const auto plain = reconstruct(b, ball(8, 0.3), cfg);
  ASSERT_FALSE(plain.empty);
  Transform t;
  t.scale = 0.5;
  t.translation = Vec3(1, 2, 3);
  const auto moved = reconstruct(b, ball(8, 0.3), cfg, t);
  ASSERT_EQ(plain.mesh.vertices.size(), moved.mesh.vertices.size());
  for (std::size_t i = 0; i < plain.mesh.vertices.size(); ++i)
    EXPECT_LT((moved.mesh.vertices[i] - t.inverse(plain.mesh.vertices[i])).norm(), 1e-12);
  EXPECT_TRUE(reconstruct(m, ball(8, 0.3), cfg).empty);
}

TEST(FieldIo, RoundTripAndErrors) {
  const auto dir = fs::temp_directory_path() / "ifnet_test_mesher";
  const auto f = analytic_field(8, 0.3);
  save_field(dir / "f.iffd", f);
  const auto back = load_field(dir / "f.iffd");
  ASSERT_EQ(back.resolution, 8);
  for (std::size_t i = 0; i < f.values.size(); ++i) EXPECT_EQ(back.values[i], static_cast<double>(static_cast<float>(f.values[i])));
  EXPECT_EQ(fs::file_size(dir / "f.iffd"), 12u + 4u * 512u);

  std::ifstream in(dir / "f.iffd", std::ios::binary);
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::ofstream(dir / "cut.iffd", std::ios::binary).write(bytes.data(), 100);
  try {
    load_field(dir / "cut.iffd");
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 12u);
  }
  const float bad = 1.5f;
  std::memcpy(bytes.data() + 12, &bad, 4);
  std::ofstream(dir / "bad.iffd", std::ios::binary).write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  EXPECT_THROW(load_field(dir / "bad.iffd"), FormatError);
}

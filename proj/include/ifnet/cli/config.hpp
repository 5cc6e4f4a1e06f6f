#pragma once

#include <charconv>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "ifnet/geometry/synthetic.hpp"
#include "ifnet/mesher/mesher.hpp"
#include "ifnet/metrics/metrics.hpp"
#include "ifnet/model/ifnet.hpp"
#include "ifnet/sampler/sampler.hpp"
#include "ifnet/trainer/trainer.hpp"

namespace ifnet::cli {

enum class Task { pointcloud_sparse, pointcloud_dense, voxel_32, voxel_128, single_view };

inline std::string to_string(Task t) {
  switch (t) {
    case Task::pointcloud_sparse: return "pointcloud_sparse";
    case Task::pointcloud_dense: return "pointcloud_dense";
    case Task::voxel_32: return "voxel_32";
    case Task::voxel_128: return "voxel_128";
    case Task::single_view: return "single_view";
  }
  return "?";
}

inline Task parse_task(const std::string& s) {
  for (auto t : {Task::pointcloud_sparse, Task::pointcloud_dense, Task::voxel_32, Task::voxel_128, Task::single_view})
    if (to_string(t) == s) return t;
  throw ConfigError("unknown task \"" + s + "\"");
}

inline bool is_pointcloud_task(Task t) { return t == Task::pointcloud_sparse || t == Task::pointcloud_dense; }
inline bool is_voxel_task(Task t) { return t == Task::voxel_32 || t == Task::voxel_128; }

/// Input resolution N the task defaults to.
inline int default_input_res(Task t) {
  switch (t) {
    case Task::pointcloud_sparse:
    case Task::voxel_32: return 32;
    default: return 128;
  }
}

/// Points per input cloud (point-cloud tasks).
inline std::size_t default_cloud_points(Task t) { return t == Task::pointcloud_sparse ? 300 : 3000; }

struct GenConfig {
  std::size_t num_shapes = 20;
  std::vector<ShapeKind> kinds{ShapeKind::sphere, ShapeKind::box, ShapeKind::union2, ShapeKind::capsule_figure};
  double val_fraction = 0.1;
  double test_fraction = 0.2;
  int mesh_resolution = 96;
  std::optional<std::size_t> cloud_points;
  Vec3 view_direction{0, 0, -1};
  int depth_res = 250;
};

struct PathConfig {
  std::string data_dir = "data";
  std::string checkpoint = "runs/model.ifck";
  std::string loss_log = "runs/loss.csv";
  std::string output_dir = "runs/recon";
  std::string eval_csv = "runs/metrics.csv";
};

struct RunConfig {
  Task task = Task::voxel_32;
  std::uint64_t seed = 0;
  ModelKind model = ModelKind::ifnet;
  std::optional<int> input_res;
  EncoderConfig encoder;
  std::optional<double> query_distance;
  DecoderConfig decoder;
  GenConfig gen;
  SamplerConfig sampler;
  TrainerConfig trainer;
  MesherConfig mesher;
  MetricConfig metrics;
  PathConfig paths;

  /// Keys and raw values as written, in file order.
  std::vector<std::pair<std::string, std::string>> entries;

  int resolution() const { return input_res.value_or(default_input_res(task)); }
  std::size_t cloud_points() const { return gen.cloud_points.value_or(default_cloud_points(task)); }

  ModelConfig model_config() const {
    ModelConfig c;
    c.encoder = encoder;
    c.encoder.resolution = resolution();
    c.query.distance = query_distance.value_or(1.0 / resolution());
    c.decoder = decoder;
    return c;
  }

  TrainerConfig trainer_config() const {
    TrainerConfig t = trainer;
    t.seed = seed;
    return t;
  }

  MetricConfig metric_config() const { return metrics; }

  void validate() const;
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ',')) out.push_back(trim(item));
  return out;
}

template <class T>
T parse_number(const std::string& key, const std::string& s) {
  T v{};
  const auto* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || p != end) throw ConfigError(key + ": cannot parse \"" + s + "\" as a number");
  return v;
}

template <class T>
T ranged(const std::string& key, const std::string& s, T lo, T hi) {
  const T v = parse_number<T>(key, s);
  if (!(v >= lo && v <= hi)) {
    std::ostringstream msg;
    msg << key << ": " << s << " is outside [" << lo << ", " << hi << "]";
    throw ConfigError(msg.str());
  }
  return v;
}

inline std::vector<int> int_list(const std::string& key, const std::string& s, int lo, int hi, bool allow_empty) {
  std::vector<int> out;
  if (trim(s).empty() || trim(s) == "-") {
    if (!allow_empty) throw ConfigError(key + ": empty list");
    return out;
  }
  for (const auto& item : split_list(s)) out.push_back(ranged<int>(key, item, lo, hi));
  return out;
}

inline double positive(const std::string& key, const std::string& s) {
  const double v = parse_number<double>(key, s);
  if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(key + ": must be finite and > 0, got " + s);
  return v;
}

inline std::string path_value(const std::string& key, const std::string& s) {
  if (s.empty()) throw ConfigError(key + ": empty path");
  return s;
}

using Setter = std::function<void(RunConfig&, const std::string&, const std::string&)>;

constexpr std::size_t kMaxCount = std::size_t(1) << 40;

inline const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table{
      {"task", [](RunConfig& c, const std::string&, const std::string& v) { c.task = parse_task(v); }},
      {"seed", [](RunConfig& c, const std::string& k, const std::string& v) { c.seed = parse_number<std::uint64_t>(k, v); }},
      {"data_dir", [](RunConfig& c, const std::string& k, const std::string& v) { c.paths.data_dir = path_value(k, v); }},
      {"checkpoint", [](RunConfig& c, const std::string& k, const std::string& v) { c.paths.checkpoint = path_value(k, v); }},
      {"loss_log", [](RunConfig& c, const std::string& k, const std::string& v) { c.paths.loss_log = path_value(k, v); }},
      {"output_dir", [](RunConfig& c, const std::string& k, const std::string& v) { c.paths.output_dir = path_value(k, v); }},
      {"eval_csv", [](RunConfig& c, const std::string& k, const std::string& v) { c.paths.eval_csv = path_value(k, v); }},
      // gen
      {"num_shapes", [](RunConfig& c, const std::string& k, const std::string& v) { c.gen.num_shapes = ranged<std::size_t>(k, v, 1, 1000000); }},
      {"shape_kinds",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         c.gen.kinds.clear();
         for (const auto& s : split_list(v)) c.gen.kinds.push_back(parse_shape_kind(s));
         if (c.gen.kinds.empty()) throw ConfigError(k + ": empty list");
       }},
      {"val_fraction", [](RunConfig& c, const std::string& k, const std::string& v) { c.gen.val_fraction = ranged<double>(k, v, 0.0, 1.0); }},
      {"test_fraction", [](RunConfig& c, const std::string& k, const std::string& v) { c.gen.test_fraction = ranged<double>(k, v, 0.0, 1.0); }},
      {"mesh_resolution", [](RunConfig& c, const std::string& k, const std::string& v) { c.gen.mesh_resolution = ranged<int>(k, v, 16, 512); }},
      {"cloud_points", [](RunConfig& c, const std::string& k, const std::string& v) { c.gen.cloud_points = ranged<std::size_t>(k, v, 1, kMaxCount); }},
      {"view_direction",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         const auto parts = split_list(v);
         if (parts.size() != 3) throw ConfigError(k + ": expected three comma-separated components");
         Vec3 d;
         for (int a = 0; a < 3; ++a) d[a] = parse_number<double>(k, parts[a]);
         if (!(d.norm() > 1e-12) || !d.allFinite()) throw ConfigError(k + ": must be a finite non-zero vector");
         c.gen.view_direction = d;
       }},
      {"depth_res", [](RunConfig& c, const std::string& k, const std::string& v) { c.gen.depth_res = ranged<int>(k, v, 8, 4096); }},
      // sampler
      {"samples_per_shape", [](RunConfig& c, const std::string& k, const std::string& v) { c.sampler.samples = ranged<std::size_t>(k, v, 1, kMaxCount); }},
      {"sigma1", [](RunConfig& c, const std::string& k, const std::string& v) { c.sampler.sigma1 = positive(k, v); }},
      {"sigma2", [](RunConfig& c, const std::string& k, const std::string& v) { c.sampler.sigma2 = positive(k, v); }},
      {"ratio", [](RunConfig& c, const std::string& k, const std::string& v) { c.sampler.ratio = ranged<double>(k, v, 0.0, 1.0); }},
      // model
      {"model",
       [](RunConfig& c, const std::string& k, const std::string& v) {
         if (v == "ifnet") c.model = ModelKind::ifnet;
         else if (v == "baseline") c.model = ModelKind::baseline;
         else throw ConfigError(k + ": expected ifnet or baseline, got \"" + v + "\"");
       }},
      {"input_res", [](RunConfig& c, const std::string& k, const std::string& v) { c.input_res = ranged<int>(k, v, 2, 512); }},
      {"scales", [](RunConfig& c, const std::string& k, const std::string& v) { c.encoder.scales = ranged<int>(k, v, 2, 10); }},
      {"channels", [](RunConfig& c, const std::string& k, const std::string& v) { c.encoder.channels = int_list(k, v, 1, 4096, false); }},
      {"convs_per_scale", [](RunConfig& c, const std::string& k, const std::string& v) { c.encoder.convs_per_scale = ranged<int>(k, v, 1, 16); }},
      {"query_distance", [](RunConfig& c, const std::string& k, const std::string& v) { c.query_distance = positive(k, v); }},
      {"hidden", [](RunConfig& c, const std::string& k, const std::string& v) { c.decoder.hidden = int_list(k, v, 1, 65536, true); }},
      // trainer
      {"batch_shapes", [](RunConfig& c, const std::string& k, const std::string& v) { c.trainer.batch_shapes = ranged<std::size_t>(k, v, 1, 100000); }},
      {"points_per_shape", [](RunConfig& c, const std::string& k, const std::string& v) { c.trainer.points = ranged<std::size_t>(k, v, 1, kMaxCount); }},
      {"learning_rate", [](RunConfig& c, const std::string& k, const std::string& v) { c.trainer.learning_rate = ranged<double>(k, v, 0.0, 10.0); }},
      {"beta1", [](RunConfig& c, const std::string& k, const std::string& v) { c.trainer.beta1 = ranged<double>(k, v, 0.0, 0.999999999); }},
      {"beta2", [](RunConfig& c, const std::string& k, const std::string& v) { c.trainer.beta2 = ranged<double>(k, v, 0.0, 0.999999999); }},
      {"epsilon", [](RunConfig& c, const std::string& k, const std::string& v) { c.trainer.epsilon = positive(k, v); }},
      {"max_steps", [](RunConfig& c, const std::string& k, const std::string& v) { c.trainer.max_steps = ranged<std::size_t>(k, v, 1, kMaxCount); }},
      {"val_interval", [](RunConfig& c, const std::string& k, const std::string& v) { c.trainer.val_interval = ranged<std::size_t>(k, v, 1, kMaxCount); }},
      {"patience", [](RunConfig& c, const std::string& k, const std::string& v) { c.trainer.patience = ranged<std::size_t>(k, v, 1, kMaxCount); }},
      {"val_points", [](RunConfig& c, const std::string& k, const std::string& v) { c.trainer.val_points = ranged<std::size_t>(k, v, 1, kMaxCount); }},
      {"precision", [](RunConfig& c, const std::string&, const std::string& v) { c.trainer.precision = parse_precision(v); }},
      // mesher
      {"mesh_res", [](RunConfig& c, const std::string& k, const std::string& v) { c.mesher.resolution = ranged<int>(k, v, 2, 1024); }},
      {"iso", [](RunConfig& c, const std::string& k, const std::string& v) {
         c.mesher.iso = ranged<double>(k, v, 0.0, 1.0);
         if (c.mesher.iso == 0.0 || c.mesher.iso == 1.0) throw ConfigError(k + ": must lie strictly inside (0, 1)");
       }},
      {"chunk", [](RunConfig& c, const std::string& k, const std::string& v) { c.mesher.chunk = ranged<std::size_t>(k, v, 1, kMaxCount); }},
      {"memory_budget_mb", [](RunConfig& c, const std::string& k, const std::string& v) { c.mesher.memory_budget_mb = ranged<std::size_t>(k, v, 1, kMaxCount); }},
      // metrics
      {"metric_points", [](RunConfig& c, const std::string& k, const std::string& v) { c.metrics.points = ranged<std::size_t>(k, v, 1, kMaxCount); }},
      {"metric_seed", [](RunConfig& c, const std::string& k, const std::string& v) { c.metrics.seed = parse_number<std::uint64_t>(k, v); }},
  };
  return table;
}

}  // namespace detail

inline std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& [k, _] : detail::setters()) keys.push_back(k);
  return keys;
}

inline void RunConfig::validate() const {
  const auto m = model_config();
  m.validate();
  if (task == Task::voxel_32 && m.encoder.resolution != 32) throw ConfigError("task voxel_32 needs input_res = 32");
  if (task == Task::voxel_128 && m.encoder.resolution != 128) throw ConfigError("task voxel_128 needs input_res = 128");
  if (gen.val_fraction + gen.test_fraction > 1.0) throw ConfigError("val_fraction + test_fraction must not exceed 1");
  sampler.validate();
  trainer_config().validate();
  mesher.validate();
  metrics.validate();
}

/// Applies `key = value` pairs in two passes (task first, so task defaults never depend on key
/// order), then range-checks the whole configuration.
inline RunConfig build_run_config(std::vector<std::pair<std::string, std::string>> entries) {
  RunConfig c;
  const auto& table = detail::setters();
  for (const auto& [k, v] : entries)
    if (k == "task") table.at(k)(c, k, v);
  for (const auto& [k, v] : entries) {
    auto it = table.find(k);
    if (it == table.end()) throw ConfigError("unknown config key \"" + k + "\"");
    if (k != "task") it->second(c, k, v);
  }
  c.entries = std::move(entries);
  c.validate();
  return c;
}

/// Lines are `key = value`; `#` starts a comment line; blank lines are ignored.
inline RunConfig parse_run_config(const std::string& text, const std::string& source = "<config>") {
  std::vector<std::pair<std::string, std::string>> entries;
  std::map<std::string, std::size_t> seen;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto t = detail::trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ParseError(source, line_no, "expected key = value");
    const auto key = detail::trim(t.substr(0, eq));
    const auto value = detail::trim(t.substr(eq + 1));
    if (key.empty()) throw ParseError(source, line_no, "missing key");
    if (!detail::setters().count(key)) throw ParseError(source, line_no, "unknown config key \"" + key + "\"");
    if (auto [it, fresh] = seen.emplace(key, line_no); !fresh)
      throw ParseError(source, line_no, "duplicate key \"" + key + "\" (first set on line " + std::to_string(it->second) + ")");
    entries.emplace_back(key, value);
  }
  try {
    return build_run_config(std::move(entries));
  } catch (const ConfigError& e) {
    throw ConfigError(source + ": " + e.what());
  }
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_run_config(buf.str(), path.string());
}

inline std::string serialize(const RunConfig& c) {
  std::string out;
  for (const auto& [k, v] : c.entries) out += k + " = " + v + "\n";
  return out;
}

/// Sets or replaces one key (used for command-line overrides) and re-validates.
inline RunConfig with_override(const RunConfig& c, const std::string& key, const std::string& value) {
  auto entries = c.entries;
  bool found = false;
  for (auto& [k, v] : entries)
    if (k == key) {
      v = value;
      found = true;
    }
  if (!found) entries.emplace_back(key, value);
  return build_run_config(std::move(entries));
}

}  // namespace ifnet::cli

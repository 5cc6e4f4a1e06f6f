#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "ifnet/model/checkpoint.hpp"
#include "ifnet/trainer/trainer.hpp"

namespace ifnet {

inline constexpr std::uint32_t kOptimizerFormatVersion = 1;

namespace detail {

template <class T>
void put_params(BinaryWriter& w, const ParamSet<T>& p) {
  w.put<std::uint32_t>(static_cast<std::uint32_t>(p.size()));
  for (std::size_t i = 0; i < p.size(); ++i) put_tensor(w, p.tensor(i));
}

template <class T>
ParamSet<T> get_params_like(BinaryReader& r, const ParamSet<T>& like, const char* what) {
  const auto count = r.get<std::uint32_t>(what);
  if (count != like.size()) r.fail(std::string(what) + ": " + std::to_string(count) + " tensors, expected " + std::to_string(like.size()));
  ParamSet<T> out;
  for (std::size_t i = 0; i < like.size(); ++i) {
    auto t = get_tensor<T>(r);
    if (t.shape() != like.tensor(i).shape()) r.fail(std::string(what) + ": shape mismatch in " + like.name(i));
    out.add(like.name(i), std::move(t));
  }
  return out;
}

}  // namespace detail

/// The IFCK model holds the best parameters; the "IFOP" appendix holds what resuming needs:
///   u32 version, u64 step, f64 best validation loss, u32 bad rounds, string RNG state,
///   current parameters, first moments, second moments (each: u32 count, tensors in model order).
template <class T>
BinaryWriter encode_train_state(const TrainState<T>& s) {
  BinaryWriter w;
  put_model(w, best_model(s));
  w.magic("IFOP");
  w.put<std::uint32_t>(kOptimizerFormatVersion);
  w.put<std::uint64_t>(s.step);
  w.put<double>(s.best_val);
  w.put<std::uint32_t>(s.bad_rounds);
  w.put_string(rng_state(s.rng));
  detail::put_params(w, s.model.params);
  detail::put_params(w, s.m);
  detail::put_params(w, s.v);
  return w;
}

template <class T>
void save_train_state(const std::filesystem::path& path, const TrainState<T>& s) {
  encode_train_state(s).write_file(path);
}

template <class T>
TrainState<T> load_train_state(const std::filesystem::path& path) {
  auto r = BinaryReader::from_file(path);
  const auto best = get_model<T>(r);
  if (r.at_end()) r.fail("checkpoint has no optimizer state; cannot resume");
  r.expect_magic("IFOP");
  const auto version = r.get<std::uint32_t>("optimizer version");
  if (version != kOptimizerFormatVersion)
    r.fail("optimizer state version " + std::to_string(version) + " is not supported (this build reads version " +
           std::to_string(kOptimizerFormatVersion) + ")");
  TrainState<T> s;
  s.step = r.get<std::uint64_t>("step");
  s.best_val = r.get<double>("best validation loss");
  s.bad_rounds = r.get<std::uint32_t>("bad rounds");
  const auto rng = r.get_string("rng state");
  try {
    restore_rng_state(s.rng, rng);
  } catch (...) {
    r.fail("corrupt rng state");
  }
  s.best = best.params;
  s.model = Model<T>{best.kind, best.config, detail::get_params_like(r, best.params, "current parameters")};
  s.m = detail::get_params_like(r, best.params, "first moments");
  s.v = detail::get_params_like(r, best.params, "second moments");
  if (!r.at_end()) r.fail("trailing bytes after optimizer state");
  return s;
}

// ---------------------------------------------------------------------------------------------
// Loss log

inline constexpr const char* kLossHeader = "step,train_loss_mean,train_loss_sum,val_loss,elapsed_s";

inline std::string format_loss_row(const LossRow& r) {
  std::ostringstream out;
  out << std::setprecision(std::numeric_limits<double>::max_digits10) << r.step << ',' << r.train_mean << ','
      << r.train_sum << ',';
  if (!std::isnan(r.val)) out << r.val;
  out << ',' << std::setprecision(6) << std::fixed << r.elapsed_s;
  return out.str();
}

/// Appends rows; on resume, rows past `keep_through_step` are dropped first.
class LossLog {
 public:
  LossLog(const std::filesystem::path& path, bool resume, std::uint64_t keep_through_step) : path_(path) {
    std::vector<std::string> kept;
    if (resume && std::filesystem::exists(path)) {
      std::ifstream in(path);
      std::string line;
      std::getline(in, line);
      if (line != kLossHeader) throw ConfigError("loss log " + path.string() + " has an unexpected header");
      while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (std::stoull(line.substr(0, line.find(','))) <= keep_through_step) kept.push_back(line);
      }
    }
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    out_.open(path, std::ios::binary | std::ios::trunc);
    if (!out_) throw Error("cannot open loss log " + path.string());
    out_ << kLossHeader << '\n';
    for (const auto& l : kept) out_ << l << '\n';
    out_.flush();
  }

  void append(const LossRow& r) {
    out_ << format_loss_row(r) << '\n';
    out_.flush();
  }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

}  // namespace ifnet

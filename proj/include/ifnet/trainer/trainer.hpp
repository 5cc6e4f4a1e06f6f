#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "ifnet/autodiff/ops.hpp"
#include "ifnet/core/error.hpp"
#include "ifnet/core/random.hpp"
#include "ifnet/model/ifnet.hpp"
#include "ifnet/sampler/sampler.hpp"

namespace ifnet {

enum class Precision { f32, f64 };

inline std::string to_string(Precision p) { return p == Precision::f32 ? "f32" : "f64"; }

inline Precision parse_precision(const std::string& s) {
  if (s == "f32") return Precision::f32;
  if (s == "f64") return Precision::f64;
  throw ConfigError("precision must be f32 or f64, got '" + s + "'");
}

struct TrainerConfig {
  std::size_t batch_shapes = 4;
  std::size_t points = 1024;  // |R| per shape
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t max_steps = 5000;
  std::size_t val_interval = 100;
  std::size_t patience = 10;  // validation rounds without improvement before stopping
  std::size_t val_points = 4096;
  std::uint64_t seed = 0;
  Precision precision = Precision::f32;

  void validate() const {
    if (batch_shapes < 1) throw ConfigError("trainer: batch_shapes must be >= 1");
    if (points < 1) throw ConfigError("trainer: points must be >= 1");
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw ConfigError("trainer: learning_rate must be finite and >= 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("trainer: betas must lie in [0, 1)");
    if (!(epsilon > 0.0)) throw ConfigError("trainer: epsilon must be > 0");
    if (max_steps < 1) throw ConfigError("trainer: max_steps must be >= 1");
    if (val_interval < 1) throw ConfigError("trainer: val_interval must be >= 1");
    if (patience < 1) throw ConfigError("trainer: patience must be >= 1");
    if (val_points < 1) throw ConfigError("trainer: val_points must be >= 1");
  }
};

// ---------------------------------------------------------------------------------------------
// Optimizer

template <class T>
ParamSet<T> zeros_like(const ParamSet<T>& p) {
  ParamSet<T> z;
  for (std::size_t i = 0; i < p.size(); ++i) z.add(p.name(i), Tensor<T>(p.tensor(i).shape(), T(0)));
  return z;
}

/// One Adam update at step t (1-based). A null gradient counts as zero.
template <class T>
void adam_step(ParamSet<T>& params, const std::vector<const Tensor<T>*>& grads, ParamSet<T>& m, ParamSet<T>& v,
               std::uint64_t t, const TrainerConfig& cfg) {
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = params.tensor(k);
    auto& mk = m.tensor(k);
    auto& vk = v.tensor(k);
    const Tensor<T>* g = grads[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = g ? static_cast<double>((*g)[i]) : 0.0;
      const double mi = cfg.beta1 * mk[i] + (1.0 - cfg.beta1) * gi;
      const double vi = cfg.beta2 * vk[i] + (1.0 - cfg.beta2) * gi * gi;
      mk[i] = static_cast<T>(mi);
      vk[i] = static_cast<T>(vi);
      p[i] = static_cast<T>(p[i] - cfg.learning_rate * (mi / c1) / (std::sqrt(vi / c2) + cfg.epsilon));
    }
    if (!p.all_finite()) throw NumericalError("optimizer produced non-finite values in " + params.name(k));
  }
}

// ---------------------------------------------------------------------------------------------
// State

template <class T>
struct TrainState {
  Model<T> model;     // current parameters
  ParamSet<T> best;   // parameters at the best validation loss so far
  ParamSet<T> m, v;   // Adam moments
  std::uint64_t step = 0;
  double best_val = std::numeric_limits<double>::infinity();
  std::uint32_t bad_rounds = 0;
  Rng rng;
};

template <class T>
TrainState<T> init_train_state(Model<T> model, const TrainerConfig& cfg) {
  TrainState<T> s;
  s.best = model.params;
  s.m = zeros_like(model.params);
  s.v = zeros_like(model.params);
  s.model = std::move(model);
  s.rng.seed(derive_seed(cfg.seed, 0x7472));
  return s;
}

template <class T>
Model<T> best_model(const TrainState<T>& s) {
  return Model<T>{s.model.kind, s.model.config, s.best};
}

// ---------------------------------------------------------------------------------------------
// Loss

struct LossValue {
  double mean = 0;
  double sum = 0;
  std::size_t count = 0;
};

/// Sum and mean BCE of `logits` against 0/1 labels, accumulated in double.
template <class T>
LossValue bce_totals(const Tensor<T>& logits, const std::vector<double>& labels) {
  LossValue l;
  for (std::size_t i = 0; i < labels.size(); ++i) l.sum += kernels::bce_from_logit(static_cast<double>(logits[i]), labels[i]);
  l.count = labels.size();
  l.mean = l.count ? l.sum / static_cast<double>(l.count) : 0.0;
  return l;
}

/// Records the mini-batch loss (mean over all |B|.|R| points) on `tape`; sum and mean are both reported.
template <class T>
ad::Var<T> loss_minibatch(const Model<T>& model, const BoundParams<T>& params, ad::Tape<T>& tape, const Batch& batch,
                          LossValue* totals = nullptr) {
  if (batch.shapes() == 0) throw ConfigError("loss_minibatch: empty batch");
  std::vector<ad::Var<T>> logits;
  std::vector<T> labels;
  std::vector<double> label_values;
  for (std::size_t b = 0; b < batch.shapes(); ++b) {
    const auto& x = *batch.inputs[b];
    check_input(model.config, x);
    const auto rows = decoder_inputs(model, params, tape.constant(voxel_tensor<T>(x)), batch.points[b]);
    logits.push_back(decode(model.config, params, rows).logits);
    for (double l : batch.labels[b]) {
      labels.push_back(static_cast<T>(l));
      label_values.push_back(l);
    }
  }
  auto all = logits.size() == 1 ? logits[0] : ad::concat(logits, 0);
  auto loss = ad::bce_loss(all, std::move(labels), ad::Reduction::mean);
  if (totals) *totals = bce_totals(all.value(), label_values);
  return loss;
}

// ---------------------------------------------------------------------------------------------
// Validation

struct ValidationSet {
  std::vector<const VoxelGrid*> inputs;
  std::vector<std::vector<Vec3>> points;
  std::vector<std::vector<double>> labels;

  bool empty() const { return inputs.empty(); }
};

/// A frozen subsample of up to `n` points per shape, chosen once from `seed`.
inline ValidationSet make_validation_set(const std::vector<ShapeRecord>& records, std::size_t n, std::uint64_t seed) {
  ValidationSet v;
  for (std::size_t k = 0; k < records.size(); ++k) {
    const auto& rec = records[k];
    if (rec.samples.empty()) throw ConfigError("validation shape " + rec.id + " has no samples");
    Rng rng(derive_seed(seed, 0x76616c + k));
    std::vector<std::size_t> order(rec.samples.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const std::size_t take = std::min(n, order.size());
    for (std::size_t i = 0; i < take; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, order.size() - 1);
      std::swap(order[i], order[pick(rng)]);
    }
    std::vector<Vec3> pts;
    std::vector<double> lab;
    for (std::size_t i = 0; i < take; ++i) {
      pts.push_back(rec.samples[order[i]].p);
      lab.push_back(rec.samples[order[i]].o);
    }
    v.inputs.push_back(&rec.input);
    v.points.push_back(std::move(pts));
    v.labels.push_back(std::move(lab));
  }
  return v;
}

/// Mean BCE over all validation points. Consumes no randomness.
template <class T>
double validate(const Model<T>& model, const ValidationSet& val) {
  if (val.empty()) throw ConfigError("validate: no validation shapes");
  double sum = 0;
  std::size_t count = 0;
  for (std::size_t k = 0; k < val.inputs.size(); ++k) {
    const auto e = encode_values(model, *val.inputs[k]);
    const auto logits = decode_values(model, e, val.points[k]);
    const auto l = bce_totals(logits, val.labels[k]);
    sum += l.sum;
    count += l.count;
  }
  return sum / static_cast<double>(count);
}

// ---------------------------------------------------------------------------------------------
// Loop

struct LossRow {
  std::uint64_t step = 0;
  double train_mean = 0;
  double train_sum = 0;
  double val = std::numeric_limits<double>::quiet_NaN();  // NaN when not validated at this step
  double elapsed_s = 0;
};

enum class StopReason { max_steps, early_stop };

template <class T>
struct TrainCallbacks {
  std::function<void(const LossRow&)> on_row;
  std::function<void(const TrainState<T>&)> on_checkpoint;  // after every validation round and at the end
};

/// Shapes for one step: all of them when there are at most |B|, else |B| distinct ones drawn uniformly.
inline std::vector<std::size_t> pick_batch_shapes(std::size_t available, std::size_t batch, Rng& rng) {
  std::vector<std::size_t> ids(available);
  std::iota(ids.begin(), ids.end(), std::size_t{0});
  if (available <= batch) return ids;
  for (std::size_t i = 0; i < batch; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, available - 1);
    std::swap(ids[i], ids[pick(rng)]);
  }
  ids.resize(batch);
  return ids;
}

/// Runs optimizer steps state.step + 1 .. cfg.max_steps, or until patience runs out.
template <class T>
StopReason train(const std::vector<ShapeRecord>& train_set, const ValidationSet& val, const TrainerConfig& cfg,
                 TrainState<T>& state, const TrainCallbacks<T>& cb = {}) {
  cfg.validate();
  if (train_set.empty()) throw ConfigError("train: no training shapes");
  for (const auto& r : train_set) check_input(state.model.config, r.input);
  for (const auto* x : val.inputs) check_input(state.model.config, *x);
  const auto start = std::chrono::steady_clock::now();
  StopReason reason = StopReason::max_steps;

  while (state.step < cfg.max_steps) {
    const auto ids = pick_batch_shapes(train_set.size(), cfg.batch_shapes, state.rng);
    const auto batch = make_batch(train_set, ids, cfg.points, state.rng);
    const std::uint64_t step = state.step + 1;

    LossValue totals;
    std::vector<const Tensor<T>*> grads;
    ad::Tape<T> tape;
    try {
      BoundParams<T> params(tape, state.model.params, true);
      auto loss = loss_minibatch(state.model, params, tape, batch, &totals);
      if (!std::isfinite(totals.sum)) throw NumericalError("non-finite loss");
      tape.backward(loss);
      for (std::size_t k = 0; k < params.size(); ++k) grads.push_back(tape.grad(params.at(k)));
      adam_step(state.model.params, grads, state.m, state.v, step, cfg);
    } catch (const NumericalError& e) {
      throw NumericalError("training aborted at step " + std::to_string(step) + " (last loss " +
                           std::to_string(totals.mean) + "): " + e.what());
    }
    state.step = step;

    LossRow row{step, totals.mean, totals.sum};
    const bool round = step % cfg.val_interval == 0 || step == cfg.max_steps;
    if (round) {
      if (val.empty()) {
        state.best = state.model.params;
      } else {
        row.val = validate(state.model, val);
        if (row.val < state.best_val) {
          state.best_val = row.val;
          state.best = state.model.params;
          state.bad_rounds = 0;
        } else {
          ++state.bad_rounds;
        }
      }
    }
    row.elapsed_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (cb.on_row) cb.on_row(row);
    if (round && cb.on_checkpoint) cb.on_checkpoint(state);
    if (round && state.bad_rounds >= cfg.patience) {
      reason = StopReason::early_stop;
      break;
    }
  }
  return reason;
}

}  // namespace ifnet

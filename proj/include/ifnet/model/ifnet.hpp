#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "ifnet/autodiff/kernels.hpp"
#include "ifnet/autodiff/ops.hpp"
#include "ifnet/core/parallel.hpp"
#include "ifnet/core/random.hpp"
#include "ifnet/geometry/voxel_grid.hpp"
#include "ifnet/model/config.hpp"
#include "ifnet/model/params.hpp"

namespace ifnet {

/// ifnet: multi-scale feature grids queried at p and its six neighbours.
/// baseline: the same conv trunk pooled to one latent vector z, decoded together with p.
enum class ModelKind : std::uint32_t { ifnet = 1, baseline = 2 };

inline std::string to_string(ModelKind k) { return k == ModelKind::ifnet ? "ifnet" : "baseline"; }

template <class T>
struct Model {
  ModelKind kind = ModelKind::ifnet;
  ModelConfig config;
  ParamSet<T> params;

  int decoder_input_width() const {
    return kind == ModelKind::ifnet ? config.feature_width() : config.encoder.channels.back() + 3;
  }
};

inline std::string conv_name(int scale, int conv) {
  return "enc.s" + std::to_string(scale + 1) + ".conv" + std::to_string(conv);
}
inline std::string fc_name(std::size_t layer) { return "dec.fc" + std::to_string(layer); }

template <class T>
Model<T> init_model(const ModelConfig& config, ModelKind kind, std::uint64_t seed) {
  config.validate();
  Model<T> m{kind, config, {}};
  Rng rng(seed);
  int in = 1;
  for (int s = 0; s < config.encoder.scales; ++s)
    for (int c = 0; c < config.encoder.convs_per_scale; ++c) {
      const int out = config.encoder.channels[s];
      init_layer(m.params, conv_name(s, c), {std::size_t(out), std::size_t(in), 3, 3, 3}, std::size_t(in) * 27, rng);
      in = out;
    }
  int width = m.decoder_input_width();
  for (std::size_t l = 0; l < config.decoder.hidden.size(); ++l) {
    const int out = config.decoder.hidden[l];
    init_layer(m.params, fc_name(l), {std::size_t(out), std::size_t(width)}, std::size_t(width), rng);
    width = out;
  }
  init_layer(m.params, "dec.out", {1, std::size_t(width)}, std::size_t(width), rng);
  return m;
}

template <class T>
Tensor<T> voxel_tensor(const VoxelGrid& x) {
  const auto n = static_cast<std::size_t>(x.resolution);
  Tensor<T> t({1, n, n, n});
  for (std::size_t i = 0; i < x.data.size(); ++i) t[i] = static_cast<T>(x.data[i]);
  return t;
}

inline void check_input(const ModelConfig& config, const VoxelGrid& x) {
  if (x.resolution != config.encoder.resolution)
    throw ConfigError("input resolution " + std::to_string(x.resolution) + " does not match the model's " +
                      std::to_string(config.encoder.resolution));
}

/// The 7 positions {p + a e_i d}: p, +x, -x, +y, -y, +z, -z, each clamped into the closed cube.
inline std::array<Vec3, 7> query_points(const Vec3& p, double d) {
  std::array<Vec3, 7> q;
  q.fill(p);
  for (int axis = 0; axis < 3; ++axis) {
    q[1 + 2 * axis][axis] += d;
    q[2 + 2 * axis][axis] -= d;
  }
  for (auto& v : q) v = v.cwiseMax(-0.5).cwiseMin(0.5);
  return q;
}

/// Point-major expansion: entry 7 * i + j is position j of point i.
inline std::shared_ptr<const std::vector<Vec3>> expand_queries(const std::vector<Vec3>& points, double d) {
  auto out = std::make_shared<std::vector<Vec3>>();
  out->reserve(points.size() * 7);
  for (const auto& p : points) {
    const auto q = query_points(p, d);
    out->insert(out->end(), q.begin(), q.end());
  }
  return out;
}

inline void require_points_in_domain(const std::vector<Vec3>& points) {
  for (std::size_t i = 0; i < points.size(); ++i)
    if (!((points[i].array() >= -0.5).all() && (points[i].array() <= 0.5).all()))
      throw Error("query point " + std::to_string(i) + " lies outside the canonical cube");
}

// ---------------------------------------------------------------------------------------------
// Recorded (differentiable) path

/// Multi-scale grids F_1..F_n; F_1 at the input resolution, each later scale pooled once more.
template <class T>
std::vector<ad::Var<T>> encode(const ModelConfig& config, const BoundParams<T>& p, ad::Var<T> x) {
  std::vector<ad::Var<T>> grids;
  ad::Var<T> h = x;
  for (int s = 0; s < config.encoder.scales; ++s) {
    if (s > 0) h = ad::downsample2(h);
    for (int c = 0; c < config.encoder.convs_per_scale; ++c) {
      const auto name = conv_name(s, c);
      h = ad::relu(ad::conv3d(h, p[name + ".weight"], p[name + ".bias"]));
    }
    grids.push_back(h);
  }
  return grids;
}

/// [Q, 7 * sum F_k]; scale-major, then position, then channel.
template <class T>
ad::Var<T> extract_features(const std::vector<ad::Var<T>>& grids, std::shared_ptr<const std::vector<Vec3>> expanded) {
  const std::size_t q = expanded->size() / 7;
  std::vector<ad::Var<T>> parts;
  for (const auto& g : grids) {
    const std::size_t c = g.shape()[0];
    parts.push_back(ad::reshape(ad::trilinear_sample(g, expanded), {q, 7 * c}));
  }
  return ad::concat(parts, 1);
}

template <class T>
struct Decoded {
  ad::Var<T> logits;  // [Q]
  ad::Var<T> probabilities;
};

template <class T>
Decoded<T> decode(const ModelConfig& config, const BoundParams<T>& p, ad::Var<T> features) {
  ad::Var<T> h = features;
  for (std::size_t l = 0; l < config.decoder.hidden.size(); ++l)
    h = ad::relu(ad::linear(h, p[fc_name(l) + ".weight"], p[fc_name(l) + ".bias"]));
  auto logits = ad::reshape(ad::linear(h, p["dec.out.weight"], p["dec.out.bias"]), {h.shape()[0]});
  return {logits, ad::sigmoid(logits)};
}

/// Decoder input rows for one shape: IF-Net features, or the baseline's (z, p).
template <class T>
ad::Var<T> decoder_inputs(const Model<T>& m, const BoundParams<T>& p, ad::Var<T> x, const std::vector<Vec3>& points) {
  require_points_in_domain(points);
  const auto grids = encode(m.config, p, x);
  if (m.kind == ModelKind::ifnet) return extract_features(grids, expand_queries(points, m.config.query.distance));
  auto& tape = *x.tape;
  auto z = ad::repeat_rows(ad::global_mean_pool(grids.back()), points.size());
  Tensor<T> coords({points.size(), 3});
  for (std::size_t i = 0; i < points.size(); ++i)
    for (int a = 0; a < 3; ++a) coords[3 * i + a] = static_cast<T>(points[i][a]);
  return ad::concat<T>({z, tape.constant(std::move(coords))}, 1);
}

// ---------------------------------------------------------------------------------------------
// Inference path: same kernels, no tape

template <class T>
struct Encoding {
  std::vector<Tensor<T>> grids;
};

template <class T>
void relu_inplace(Tensor<T>& t) {
  for (auto& v : t.values()) v = v > T(0) ? v : T(0);
}

template <class T>
Encoding<T> encode_values(const Model<T>& m, const VoxelGrid& x) {
  check_input(m.config, x);
  Encoding<T> e;
  Tensor<T> h = voxel_tensor<T>(x);
  for (int s = 0; s < m.config.encoder.scales; ++s) {
    if (s > 0) h = kernels::maxpool2(h).out;
    for (int c = 0; c < m.config.encoder.convs_per_scale; ++c) {
      const auto name = conv_name(s, c);
      h = kernels::conv3d(h, m.params[name + ".weight"], &m.params[name + ".bias"]);
      relu_inplace(h);
    }
    e.grids.push_back(h);
  }
  if (m.kind == ModelKind::baseline) {
    // keep only the pooled latent as a [C, 1, 1, 1] "grid"
    const Tensor<T>& last = e.grids.back();
    const std::size_t c = last.dim(0), per = last.size() / c;
    Tensor<T> z({c, 1, 1, 1});
    for (std::size_t i = 0; i < c; ++i) {
      T sum = 0;
      for (std::size_t j = 0; j < per; ++j) sum += last[i * per + j];
      z[i] = sum / static_cast<T>(per);
    }
    e.grids = {std::move(z)};
  }
  return e;
}

/// Occupancy logits for one chunk of points.
template <class T>
Tensor<T> decode_values(const Model<T>& m, const Encoding<T>& e, const std::vector<Vec3>& points) {
  const std::size_t q = points.size();
  const auto width = static_cast<std::size_t>(m.decoder_input_width());
  Tensor<T> features({q, width});
  if (m.kind == ModelKind::ifnet) {
    const auto expanded = expand_queries(points, m.config.query.distance);
    std::size_t offset = 0;
    for (const auto& g : e.grids) {
      const std::size_t c = g.dim(0);
      const auto s = kernels::trilinear_sample(g, std::span<const Vec3>(*expanded));
      for (std::size_t i = 0; i < q; ++i) std::copy(s.data() + i * 7 * c, s.data() + (i + 1) * 7 * c, features.data() + i * width + offset);
      offset += 7 * c;
    }
  } else {
    const std::size_t c = e.grids[0].dim(0);
    for (std::size_t i = 0; i < q; ++i) {
      std::copy(e.grids[0].data(), e.grids[0].data() + c, features.data() + i * width);
      for (int a = 0; a < 3; ++a) features[i * width + c + a] = static_cast<T>(points[i][a]);
    }
  }
  Tensor<T> h = std::move(features);
  for (std::size_t l = 0; l < m.config.decoder.hidden.size(); ++l) {
    h = kernels::linear(h, m.params[fc_name(l) + ".weight"], m.params[fc_name(l) + ".bias"]);
    relu_inplace(h);
  }
  auto logits = kernels::linear(h, m.params["dec.out.weight"], m.params["dec.out.bias"]);
  logits.reshape({q});
  if (!logits.all_finite()) throw NumericalError("decode: non-finite logits");
  return logits;
}

/// Probabilities at `points`; encodes once and decodes in chunks of `chunk` points.
template <class T>
std::vector<T> forward(const Model<T>& m, const VoxelGrid& x, const std::vector<Vec3>& points, std::size_t chunk = 8192) {
  require_points_in_domain(points);
  if (chunk == 0) throw ConfigError("forward: chunk size must be positive");
  const auto e = encode_values(m, x);
  std::vector<T> out(points.size());
  const std::size_t chunks = (points.size() + chunk - 1) / chunk;
  parallel_for(0, chunks, 1, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t c = lo; c < hi; ++c) {
      const std::size_t b = c * chunk, end = std::min(points.size(), b + chunk);
      const std::vector<Vec3> part(points.begin() + b, points.begin() + end);
      const auto logits = decode_values(m, e, part);
      for (std::size_t i = 0; i < part.size(); ++i) out[b + i] = kernels::sigmoid(logits[i]);
    }
  });
  return out;
}

}  // namespace ifnet

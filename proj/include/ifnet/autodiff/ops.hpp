#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "ifnet/autodiff/kernels.hpp"
#include "ifnet/autodiff/tape.hpp"

namespace ifnet::ad {

namespace detail {

template <class T>
void add_into(Tensor<T>& dst, const Tensor<T>& src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

template <class T>
Tape<T>& tape_of(std::initializer_list<Var<T>> vars) {
  Tape<T>* t = vars.begin()->tape;
  for (const auto& v : vars)
    if (v.tape != t) throw Error("autodiff: operands recorded on different tapes");
  return *t;
}

inline std::uint64_t mix(std::uint64_t h, std::uint64_t v) {
  h ^= v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
  return h;
}

}  // namespace detail

template <class T>
Var<T> conv3d(Var<T> x, Var<T> w, Var<T> b) {
  auto& tape = detail::tape_of({x, w, b});
  auto y = kernels::conv3d(x.value(), w.value(), &b.value());
  return tape.record(std::move(y), {x, w, b}, [x, w, b](Tape<T>& t, std::size_t self) {
    const auto& g = t.accumulator(self);
    if (t.requires_grad(x)) detail::add_into(t.accumulator(x.id), kernels::conv3d_input_grad(g, w.value()));
    Tensor<T>* dw = t.requires_grad(w) ? &t.accumulator(w.id) : nullptr;
    Tensor<T>* db = t.requires_grad(b) ? &t.accumulator(b.id) : nullptr;
    if (dw || db) kernels::conv3d_param_grad(x.value(), g, dw, db);
  }, "conv3d");
}

/// 2x2x2 max pooling; the gradient goes to the first maximal cell of each window.
template <class T>
Var<T> downsample2(Var<T> x) {
  auto pooled = kernels::maxpool2(x.value());
  std::uint64_t h = 0x70;
  for (auto i : pooled.argmax) h = detail::mix(h, i);
  x.tape->note_branches(h);
  auto argmax = std::make_shared<const std::vector<std::size_t>>(std::move(pooled.argmax));
  return x.tape->record(std::move(pooled.out), {x}, [x, argmax](Tape<T>& t, std::size_t self) {
    const auto& g = t.accumulator(self);
    auto& dx = t.accumulator(x.id);
    for (std::size_t o = 0; o < g.size(); ++o) dx[(*argmax)[o]] += g[o];
  }, "downsample2");
}

/// Samples a [C, K, K, K] grid at query points; result [Q, C]. Differentiable in the grid only.
template <class T>
Var<T> trilinear_sample(Var<T> grid, std::shared_ptr<const std::vector<Vec3>> queries) {
  auto y = kernels::trilinear_sample(grid.value(), std::span<const Vec3>(*queries));
  return grid.tape->record(std::move(y), {grid}, [grid, queries](Tape<T>& t, std::size_t self) {
    kernels::trilinear_sample_grad(t.accumulator(self), std::span<const Vec3>(*queries), t.accumulator(grid.id));
  }, "trilinear_sample");
}

template <class T>
Var<T> trilinear_sample(Var<T> grid, std::vector<Vec3> queries) {
  return trilinear_sample(grid, std::make_shared<const std::vector<Vec3>>(std::move(queries)));
}

template <class T>
Var<T> linear(Var<T> x, Var<T> w, Var<T> b) {
  auto& tape = detail::tape_of({x, w, b});
  auto y = kernels::linear(x.value(), w.value(), b.value());
  return tape.record(std::move(y), {x, w, b}, [x, w, b](Tape<T>& t, std::size_t self) {
    Tensor<T>* dx = t.requires_grad(x) ? &t.accumulator(x.id) : nullptr;
    Tensor<T>* dw = t.requires_grad(w) ? &t.accumulator(w.id) : nullptr;
    Tensor<T>* db = t.requires_grad(b) ? &t.accumulator(b.id) : nullptr;
    kernels::linear_grad(x.value(), w.value(), t.accumulator(self), dx, dw, db);
  }, "linear");
}

template <class T>
Var<T> relu(Var<T> x) {
  Tensor<T> y = x.value();
  std::uint64_t h = 0x52, bits = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const bool on = y[i] > T(0);
    bits = (bits << 1) | (on ? 1u : 0u);
    if (i % 64 == 63) h = detail::mix(h, bits), bits = 0;
    if (!on) y[i] = T(0);
  }
  x.tape->note_branches(detail::mix(h, bits));
  return x.tape->record(std::move(y), {x}, [x](Tape<T>& t, std::size_t self) {
    const auto& g = t.accumulator(self);
    const auto& xv = x.value();
    auto& dx = t.accumulator(x.id);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (xv[i] > T(0)) dx[i] += g[i];
  }, "relu");
}

template <class T>
Var<T> sigmoid(Var<T> x) {
  Tensor<T> y = x.value();
  for (auto& v : y.values()) v = kernels::sigmoid(v);
  return x.tape->record(std::move(y), {x}, [x](Tape<T>& t, std::size_t self) {
    const auto& g = t.accumulator(self);
    const auto& yv = t.value(self);
    auto& dx = t.accumulator(x.id);
    for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] * yv[i] * (T(1) - yv[i]);
  }, "sigmoid");
}

template <class T>
Var<T> add(Var<T> a, Var<T> b) {
  auto& tape = detail::tape_of({a, b});
  if (a.shape() != b.shape()) throw Error("add: shape mismatch " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  Tensor<T> y = a.value();
  detail::add_into(y, b.value());
  return tape.record(std::move(y), {a, b}, [a, b](Tape<T>& t, std::size_t self) {
    if (t.requires_grad(a)) detail::add_into(t.accumulator(a.id), t.accumulator(self));
    if (t.requires_grad(b)) detail::add_into(t.accumulator(b.id), t.accumulator(self));
  }, "add");
}

template <class T>
Var<T> reshape(Var<T> x, Shape shape) {
  Tensor<T> y = x.value().reshaped(std::move(shape));
  return x.tape->record(std::move(y), {x}, [x](Tape<T>& t, std::size_t self) {
    const auto& g = t.accumulator(self);
    auto& dx = t.accumulator(x.id);
    for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i];
  }, "reshape");
}

/// Concatenation along an axis; all other dimensions must agree.
template <class T>
Var<T> concat(const std::vector<Var<T>>& xs, std::size_t axis) {
  if (xs.empty()) throw Error("concat: no inputs");
  Tape<T>& tape = *xs.front().tape;
  const Shape& first = xs.front().shape();
  if (axis >= first.size()) throw Error("concat: axis " + std::to_string(axis) + " out of range for " + shape_string(first));
  Shape out_shape = first;
  out_shape[axis] = 0;
  bool needs = false;
  for (const auto& x : xs) {
    if (x.tape != &tape) throw Error("autodiff: operands recorded on different tapes");
    const Shape& s = x.shape();
    bool ok = s.size() == first.size();
    for (std::size_t a = 0; ok && a < s.size(); ++a) ok = a == axis || s[a] == first[a];
    if (!ok) throw Error("concat: " + shape_string(s) + " does not match " + shape_string(first) + " off axis " + std::to_string(axis));
    out_shape[axis] += s[axis];
    needs = needs || tape.requires_grad(x);
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t a = 0; a < axis; ++a) outer *= first[a];
  for (std::size_t a = axis + 1; a < first.size(); ++a) inner *= first[a];
  const std::size_t out_block = out_shape[axis] * inner;

  Tensor<T> y(out_shape);
  std::size_t offset = 0;
  for (const auto& x : xs) {
    const std::size_t block = x.shape()[axis] * inner;
    const T* src = x.value().data();
    for (std::size_t o = 0; o < outer; ++o) std::copy(src + o * block, src + (o + 1) * block, y.data() + o * out_block + offset);
    offset += block;
  }
  return tape.record_if(std::move(y), needs, [xs, axis, outer, inner, out_block](Tape<T>& t, std::size_t self) {
    const auto& g = t.accumulator(self);
    std::size_t off = 0;
    for (const auto& x : xs) {
      const std::size_t block = x.shape()[axis] * inner;
      if (t.requires_grad(x)) {
        auto& dx = t.accumulator(x.id);
        for (std::size_t o = 0; o < outer; ++o)
          for (std::size_t i = 0; i < block; ++i) dx[o * block + i] += g[o * out_block + off + i];
      }
      off += block;
    }
  }, "concat");
}

/// Mean over all non-channel axes: [C, ...] -> [C].
template <class T>
Var<T> global_mean_pool(Var<T> x) {
  const std::size_t c = x.shape()[0], per = x.value().size() / c;
  Tensor<T> y({c});
  for (std::size_t i = 0; i < c; ++i) {
    T sum = 0;
    for (std::size_t j = 0; j < per; ++j) sum += x.value()[i * per + j];
    y[i] = sum / static_cast<T>(per);
  }
  return x.tape->record(std::move(y), {x}, [x, c, per](Tape<T>& t, std::size_t self) {
    const auto& g = t.accumulator(self);
    auto& dx = t.accumulator(x.id);
    for (std::size_t i = 0; i < c; ++i)
      for (std::size_t j = 0; j < per; ++j) dx[i * per + j] += g[i] / static_cast<T>(per);
  }, "global_mean_pool");
}

/// [C] -> [Q, C], every row a copy of the input.
template <class T>
Var<T> repeat_rows(Var<T> z, std::size_t q) {
  if (z.shape().size() != 1) throw Error("repeat_rows: expected a vector, got " + shape_string(z.shape()));
  const std::size_t c = z.shape()[0];
  Tensor<T> y({q, c});
  for (std::size_t r = 0; r < q; ++r) std::copy(z.value().data(), z.value().data() + c, y.data() + r * c);
  return z.tape->record(std::move(y), {z}, [z, q, c](Tape<T>& t, std::size_t self) {
    const auto& g = t.accumulator(self);
    auto& dz = t.accumulator(z.id);
    for (std::size_t r = 0; r < q; ++r)
      for (std::size_t i = 0; i < c; ++i) dz[i] += g[r * c + i];
  }, "repeat_rows");
}

enum class Reduction { mean, sum };

/// Binary cross-entropy on logits (any shape with Q elements) against labels in {0, 1}.
template <class T>
Var<T> bce_loss(Var<T> logits, std::shared_ptr<const std::vector<T>> labels, Reduction reduction = Reduction::mean) {
  const auto& x = logits.value();
  if (labels->size() != x.size())
    throw Error("bce_loss: " + std::to_string(labels->size()) + " labels for " + std::to_string(x.size()) + " logits");
  for (std::size_t i = 0; i < labels->size(); ++i)
    if ((*labels)[i] != T(0) && (*labels)[i] != T(1))
      throw Error("bce_loss: label " + std::to_string(i) + " is not binary");
  T sum = 0;
  for (std::size_t i = 0; i < x.size(); ++i) sum += kernels::bce_from_logit(x[i], (*labels)[i]);
  const T scale = reduction == Reduction::mean ? T(1) / static_cast<T>(x.size()) : T(1);
  Tensor<T> y({1}, sum * scale);
  return logits.tape->record(std::move(y), {logits}, [logits, labels, scale](Tape<T>& t, std::size_t self) {
    const T g = t.accumulator(self)[0] * scale;
    const auto& xv = logits.value();
    auto& dx = t.accumulator(logits.id);
    for (std::size_t i = 0; i < xv.size(); ++i) dx[i] += g * (kernels::sigmoid(xv[i]) - (*labels)[i]);
  }, "bce_loss");
}

template <class T>
Var<T> bce_loss(Var<T> logits, std::vector<T> labels, Reduction reduction = Reduction::mean) {
  return bce_loss(logits, std::make_shared<const std::vector<T>>(std::move(labels)), reduction);
}

/// Sum of elementwise products with a constant tensor; result [1].
template <class T>
Var<T> weighted_sum(Var<T> x, std::shared_ptr<const Tensor<T>> weights) {
  if (weights->shape() != x.shape()) throw Error("weighted_sum: shape mismatch");
  T sum = 0;
  for (std::size_t i = 0; i < weights->size(); ++i) sum += (*weights)[i] * x.value()[i];
  return x.tape->record(Tensor<T>({1}, sum), {x}, [x, weights](Tape<T>& t, std::size_t self) {
    const T g = t.accumulator(self)[0];
    auto& dx = t.accumulator(x.id);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += g * (*weights)[i];
  }, "weighted_sum");
}

}  // namespace ifnet::ad

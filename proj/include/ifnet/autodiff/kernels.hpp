#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "ifnet/autodiff/tensor.hpp"
#include "ifnet/core/parallel.hpp"
#include "ifnet/geometry/mesh.hpp"

// Tape-free numeric kernels. Every kernel is deterministic: work is partitioned by shape only,
// and reductions run in a fixed order.
namespace ifnet::kernels {

template <class T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;
template <class T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;
template <class T>
using StridedMap = Eigen::Map<RowMatrix<T>, 0, Eigen::OuterStride<>>;
template <class T>
using ConstStridedMap = Eigen::Map<const RowMatrix<T>, 0, Eigen::OuterStride<>>;

inline void require(bool ok, const std::string& what) {
  if (!ok) throw Error(what);
}

// ---------------------------------------------------------------------------------------------
// 3x3x3 convolution, zero padding 1, stride 1 (cross-correlation)

struct VolumeDims {
  std::size_t channels, depth, height, width;
  std::size_t plane() const { return height * width; }
  std::size_t volume() const { return depth * height * width; }
};

inline VolumeDims volume_dims(const Shape& s, const char* op) {
  require(s.size() == 4, std::string(op) + ": expected [C, D, H, W], got " + shape_string(s));
  return {s[0], s[1], s[2], s[3]};
}

/// Output planes handled per im2col slab; depends only on the shapes.
inline std::size_t conv_slab_planes(const VolumeDims& in) {
  const std::size_t per_plane = in.channels * 27 * in.plane();
  return std::max<std::size_t>(1, (std::size_t{1} << 20) / per_plane);
}

// Column matrix for output planes [z0, z1): row (ci * 27 + tap), column (z - z0) * H * W + y * W + x.
template <class T>
void im2col(const T* x, const VolumeDims& in, std::size_t z0, std::size_t z1, T* cols) {
  const std::size_t H = in.height, W = in.width, plane = in.plane();
  const std::size_t ncols = (z1 - z0) * plane;
  for (std::size_t ci = 0; ci < in.channels; ++ci) {
    const T* src = x + ci * in.volume();
    for (int kz = 0; kz < 3; ++kz)
      for (int ky = 0; ky < 3; ++ky)
        for (int kx = 0; kx < 3; ++kx) {
          T* dst = cols + (ci * 27 + kz * 9 + ky * 3 + kx) * ncols;
          for (std::size_t z = z0; z < z1; ++z) {
            const long zz = static_cast<long>(z) + kz - 1;
            T* dplane = dst + (z - z0) * plane;
            if (zz < 0 || zz >= static_cast<long>(in.depth)) {
              std::fill(dplane, dplane + plane, T(0));
              continue;
            }
            for (std::size_t y = 0; y < H; ++y) {
              const long yy = static_cast<long>(y) + ky - 1;
              T* drow = dplane + y * W;
              if (yy < 0 || yy >= static_cast<long>(H)) {
                std::fill(drow, drow + W, T(0));
                continue;
              }
              const T* srow = src + static_cast<std::size_t>(zz) * plane + static_cast<std::size_t>(yy) * W;
              // drow[x] = srow[x + kx - 1] where in range
              if (kx == 0) {
                drow[0] = T(0);
                std::copy(srow, srow + W - 1, drow + 1);
              } else if (kx == 1) {
                std::copy(srow, srow + W, drow);
              } else {
                std::copy(srow + 1, srow + W, drow);
                drow[W - 1] = T(0);
              }
            }
          }
        }
  }
}

template <class T>
Tensor<T> conv3d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>* bias) {
  const VolumeDims in = volume_dims(x.shape(), "conv3d");
  require(w.rank() == 5 && w.dim(1) == in.channels && w.dim(2) == 3 && w.dim(3) == 3 && w.dim(4) == 3,
          "conv3d: weight " + shape_string(w.shape()) + " does not match input " + shape_string(x.shape()));
  const std::size_t co = w.dim(0);
  require(!bias || (bias->rank() == 1 && bias->dim(0) == co), "conv3d: bias shape mismatch");
  Tensor<T> out({co, in.depth, in.height, in.width});
  const ConstMatrixMap<T> wm(w.data(), co, in.channels * 27);
  const std::size_t slab = conv_slab_planes(in);
  const std::size_t slabs = (in.depth + slab - 1) / slab;
  parallel_for(0, slabs, 1, [&](std::size_t s0, std::size_t s1) {
    std::vector<T> cols;
    for (std::size_t s = s0; s < s1; ++s) {
      const std::size_t z0 = s * slab, z1 = std::min(in.depth, z0 + slab);
      const std::size_t ncols = (z1 - z0) * in.plane();
      cols.resize(in.channels * 27 * ncols);
      im2col(x.data(), in, z0, z1, cols.data());
      const ConstMatrixMap<T> cm(cols.data(), in.channels * 27, ncols);
      StridedMap<T> om(out.data() + z0 * in.plane(), co, ncols, Eigen::OuterStride<>(in.volume()));
      om.noalias() = wm * cm;
      if (bias)
        for (std::size_t c = 0; c < co; ++c) om.row(c).array() += (*bias)[c];
    }
  });
  return out;
}

/// Gradient with respect to the input: correlation of dy with the spatially flipped,
/// channel-transposed kernel.
template <class T>
Tensor<T> conv3d_input_grad(const Tensor<T>& dy, const Tensor<T>& w) {
  const std::size_t co = w.dim(0), ci = w.dim(1);
  Tensor<T> flipped({ci, co, 3, 3, 3});
  for (std::size_t o = 0; o < co; ++o)
    for (std::size_t i = 0; i < ci; ++i)
      for (std::size_t k = 0; k < 27; ++k) flipped[(i * co + o) * 27 + k] = w[(o * ci + i) * 27 + (26 - k)];
  return conv3d(dy, flipped, static_cast<const Tensor<T>*>(nullptr));
}

/// Accumulates weight and bias gradients; slabs are reduced in order.
template <class T>
void conv3d_param_grad(const Tensor<T>& x, const Tensor<T>& dy, Tensor<T>* dw, Tensor<T>* db) {
  const VolumeDims in = volume_dims(x.shape(), "conv3d");
  const std::size_t co = dy.dim(0);
  const std::size_t slab = conv_slab_planes(in);
  if (dw) {
    MatrixMap<T> dwm(dw->data(), co, in.channels * 27);
    std::vector<T> cols;
    for (std::size_t z0 = 0; z0 < in.depth; z0 += slab) {
      const std::size_t z1 = std::min(in.depth, z0 + slab);
      const std::size_t ncols = (z1 - z0) * in.plane();
      cols.resize(in.channels * 27 * ncols);
      im2col(x.data(), in, z0, z1, cols.data());
      const ConstMatrixMap<T> cm(cols.data(), in.channels * 27, ncols);
      const ConstStridedMap<T> gm(dy.data() + z0 * in.plane(), co, ncols, Eigen::OuterStride<>(in.volume()));
      dwm.noalias() += gm * cm.transpose();
    }
  }
  if (db) {
    for (std::size_t c = 0; c < co; ++c) {
      T sum = 0;
      const T* g = dy.data() + c * in.volume();
      for (std::size_t i = 0; i < in.volume(); ++i) sum += g[i];
      (*db)[c] += sum;
    }
  }
}

// ---------------------------------------------------------------------------------------------
// 2x2x2 max pooling

template <class T>
struct PoolResult {
  Tensor<T> out;
  std::vector<std::size_t> argmax;  // flat input index per output element
};

/// Ties go to the lowest flat index inside the window.
template <class T>
PoolResult<T> maxpool2(const Tensor<T>& x) {
  const VolumeDims in = volume_dims(x.shape(), "downsample2");
  require(in.depth % 2 == 0 && in.height % 2 == 0 && in.width % 2 == 0,
          "downsample2: spatial dimensions must be even, got " + shape_string(x.shape()));
  const std::size_t D = in.depth / 2, H = in.height / 2, W = in.width / 2;
  PoolResult<T> r{Tensor<T>({in.channels, D, H, W}), {}};
  r.argmax.resize(r.out.size());
  std::size_t o = 0;
  for (std::size_t c = 0; c < in.channels; ++c)
    for (std::size_t z = 0; z < D; ++z)
      for (std::size_t y = 0; y < H; ++y)
        for (std::size_t xx = 0; xx < W; ++xx, ++o) {
          std::size_t best = 0;
          T best_value = 0;
          bool first = true;
          for (std::size_t dz = 0; dz < 2; ++dz)
            for (std::size_t dy = 0; dy < 2; ++dy)
              for (std::size_t dx = 0; dx < 2; ++dx) {
                const std::size_t idx = c * in.volume() + (2 * z + dz) * in.plane() + (2 * y + dy) * in.width + 2 * xx + dx;
                if (first || x[idx] > best_value) {
                  best = idx;
                  best_value = x[idx];
                  first = false;
                }
              }
          r.out[o] = best_value;
          r.argmax[o] = best;
        }
  return r;
}

// ---------------------------------------------------------------------------------------------
// Trilinear sampling of a [C, K, K, K] grid aligned with the canonical cube

struct TrilinearStencil {
  std::array<std::size_t, 8> index;  // flat spatial index (z * K * K + y * K + x)
  std::array<double, 8> weight;
  std::array<double, 3> t;           // fractional offset per axis
};

/// (1 - t) a + t b, exact at t = 0, t = 1, t = 1/2 and for a == b.
template <class T>
T blend(T a, T b, T t) {
  return a == b ? a : (T(1) - t) * a + t * b;
}

/// Continuous grid coordinate u = (p + 0.5) * K - 0.5, clamped to [0, K - 1]; corners ordered
/// with x varying fastest.
inline TrilinearStencil trilinear_stencil(const Vec3& p, std::size_t k) {
  std::array<std::size_t, 3> i0{}, i1{};
  std::array<double, 3> t{};
  for (int a = 0; a < 3; ++a) {
    const double u = std::clamp((p[a] + 0.5) * static_cast<double>(k) - 0.5, 0.0, static_cast<double>(k - 1));
    if (k == 1) {
      i0[a] = i1[a] = 0;
      t[a] = 0.0;
      continue;
    }
    const auto base = std::min(static_cast<std::size_t>(std::floor(u)), k - 2);
    i0[a] = base;
    i1[a] = base + 1;
    t[a] = u - static_cast<double>(base);
  }
  TrilinearStencil s;
  s.t = t;
  for (int c = 0; c < 8; ++c) {
    const std::size_t x = (c & 1) ? i1[0] : i0[0];
    const std::size_t y = (c & 2) ? i1[1] : i0[1];
    const std::size_t z = (c & 4) ? i1[2] : i0[2];
    s.index[c] = (z * k + y) * k + x;
    s.weight[c] = ((c & 1) ? t[0] : 1 - t[0]) * ((c & 2) ? t[1] : 1 - t[1]) * ((c & 4) ? t[2] : 1 - t[2]);
  }
  return s;
}

inline std::size_t grid_resolution(const Shape& s, const char* op) {
  require(s.size() == 4 && s[1] == s[2] && s[2] == s[3], std::string(op) + ": expected a cubic [C, K, K, K] grid, got " + shape_string(s));
  return s[1];
}

inline void require_in_domain(std::span<const Vec3> queries) {
  for (std::size_t q = 0; q < queries.size(); ++q)
    for (int a = 0; a < 3; ++a)
      if (!(queries[q][a] >= -0.5 && queries[q][a] <= 0.5))
        throw Error("trilinear_sample: query " + std::to_string(q) + " lies outside the canonical cube");
}

template <class T>
Tensor<T> trilinear_sample(const Tensor<T>& grid, std::span<const Vec3> queries) {
  const std::size_t k = grid_resolution(grid.shape(), "trilinear_sample");
  const std::size_t C = grid.dim(0), cells = k * k * k;
  require(!queries.empty(), "trilinear_sample: no queries");
  require_in_domain(queries);
  // cell-major copy so the channel loop is contiguous
  std::vector<T> cell_major(cells * C);
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t i = 0; i < cells; ++i) cell_major[i * C + c] = grid[c * cells + i];
  Tensor<T> out({queries.size(), C});
  parallel_for(0, queries.size(), 2048, [&](std::size_t lo, std::size_t hi) {
    for (std::size_t q = lo; q < hi; ++q) {
      const auto s = trilinear_stencil(queries[q], k);
      const T tx = static_cast<T>(s.t[0]), ty = static_cast<T>(s.t[1]), tz = static_cast<T>(s.t[2]);
      std::array<const T*, 8> corner;
      for (int i = 0; i < 8; ++i) corner[i] = cell_major.data() + s.index[i] * C;
      T* row = out.data() + q * C;
      for (std::size_t c = 0; c < C; ++c) {
        const T x00 = blend(corner[0][c], corner[1][c], tx), x10 = blend(corner[2][c], corner[3][c], tx);
        const T x01 = blend(corner[4][c], corner[5][c], tx), x11 = blend(corner[6][c], corner[7][c], tx);
        row[c] = blend(blend(x00, x10, ty), blend(x01, x11, ty), tz);
      }
    }
  });
  return out;
}

template <class T>
void trilinear_sample_grad(const Tensor<T>& dout, std::span<const Vec3> queries, Tensor<T>& dgrid) {
  const std::size_t k = grid_resolution(dgrid.shape(), "trilinear_sample");
  const std::size_t C = dgrid.dim(0), cells = k * k * k;
  std::vector<T> cell_major(cells * C, T(0));
  for (std::size_t q = 0; q < queries.size(); ++q) {
    const auto s = trilinear_stencil(queries[q], k);
    const T* g = dout.data() + q * C;
    for (int corner = 0; corner < 8; ++corner) {
      const T w = static_cast<T>(s.weight[corner]);
      T* dst = cell_major.data() + s.index[corner] * C;
      for (std::size_t c = 0; c < C; ++c) dst[c] += w * g[c];
    }
  }
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t i = 0; i < cells; ++i) dgrid[c * cells + i] += cell_major[i * C + c];
}

// ---------------------------------------------------------------------------------------------
// Affine map per row: y = x W^T + b

template <class T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  require(x.rank() == 2 && w.rank() == 2 && w.dim(1) == x.dim(1),
          "linear: input " + shape_string(x.shape()) + " does not match weight " + shape_string(w.shape()));
  require(b.rank() == 1 && b.dim(0) == w.dim(0), "linear: bias shape mismatch");
  const std::size_t q = x.dim(0), fi = x.dim(1), fo = w.dim(0);
  Tensor<T> y({q, fo});
  MatrixMap<T> ym(y.data(), q, fo);
  ym.noalias() = ConstMatrixMap<T>(x.data(), q, fi) * ConstMatrixMap<T>(w.data(), fo, fi).transpose();
  ym.rowwise() += Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>(b.data(), fo);
  return y;
}

template <class T>
void linear_grad(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& dy, Tensor<T>* dx, Tensor<T>* dw, Tensor<T>* db) {
  const std::size_t q = x.dim(0), fi = x.dim(1), fo = w.dim(0);
  const ConstMatrixMap<T> gm(dy.data(), q, fo);
  if (dx) MatrixMap<T>(dx->data(), q, fi).noalias() += gm * ConstMatrixMap<T>(w.data(), fo, fi);
  if (dw) MatrixMap<T>(dw->data(), fo, fi).noalias() += gm.transpose() * ConstMatrixMap<T>(x.data(), q, fi);
  if (db) {
    for (std::size_t r = 0; r < q; ++r)
      for (std::size_t c = 0; c < fo; ++c) (*db)[c] += dy[r * fo + c];
  }
}

// ---------------------------------------------------------------------------------------------
// Elementwise

template <class T>
T sigmoid(T x) {
  return x >= 0 ? T(1) / (T(1) + std::exp(-x)) : std::exp(x) / (T(1) + std::exp(x));
}

/// softplus(x) = log(1 + e^x), evaluated without overflow.
template <class T>
T softplus(T x) {
  return std::max(x, T(0)) + std::log1p(std::exp(-std::abs(x)));
}

/// Binary cross-entropy from a logit: softplus(-x) for label 1, softplus(x) for label 0.
template <class T>
T bce_from_logit(T logit, T label) {
  return label > T(0.5) ? softplus(-logit) : softplus(logit);
}

}  // namespace ifnet::kernels

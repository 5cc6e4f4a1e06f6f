#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "ifnet/autodiff/grad_check.hpp"
#include "ifnet/autodiff/ops.hpp"
#include "ifnet/autodiff/tensor_io.hpp"

using namespace ifnet;
using namespace ifnet::ad;
using T3 = Tensor<double>;

namespace {

T3 random_tensor(Shape s, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  Rng rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  T3 t(std::move(s));
  for (auto& v : t.values()) v = u(rng);
  return t;
}

// Direct 7-loop cross-correlation with zero padding.
T3 naive_conv(const T3& x, const T3& w, const T3& b) {
  const std::size_t ci = x.dim(0), D = x.dim(1), H = x.dim(2), W = x.dim(3), co = w.dim(0);
  T3 y({co, D, H, W});
  for (std::size_t o = 0; o < co; ++o)
    for (std::size_t z = 0; z < D; ++z)
      for (std::size_t yy = 0; yy < H; ++yy)
        for (std::size_t xx = 0; xx < W; ++xx) {
          double s = b[o];
          for (std::size_t i = 0; i < ci; ++i)
            for (int kz = 0; kz < 3; ++kz)
              for (int ky = 0; ky < 3; ++ky)
                for (int kx = 0; kx < 3; ++kx) {
                  const long sz = long(z) + kz - 1, sy = long(yy) + ky - 1, sx = long(xx) + kx - 1;
                  if (sz < 0 || sy < 0 || sx < 0 || sz >= long(D) || sy >= long(H) || sx >= long(W)) continue;
                  s += w[(((o * ci + i) * 3 + kz) * 3 + ky) * 3 + kx] * x[((i * D + sz) * H + sy) * W + sx];
                }
          y[((o * D + z) * H + yy) * W + xx] = s;
        }
  return y;
}

// Textbook trilinear blend: interpolate along x, then y, then z.
double direct_trilinear(const T3& g, std::size_t c, const Vec3& p) {
  const std::size_t k = g.dim(1);
  auto at = [&](std::size_t x, std::size_t y, std::size_t z) { return g[((c * k + z) * k + y) * k + x]; };
  std::size_t lo[3], hi[3];
  double f[3];
  for (int a = 0; a < 3; ++a) {
    double u = (p[a] + 0.5) * k - 0.5;
    u = std::min(std::max(u, 0.0), double(k - 1));
    lo[a] = std::min<std::size_t>(std::size_t(u), k - 2);
    hi[a] = lo[a] + 1;
    f[a] = u - lo[a];
  }
  auto lerp = [](double a, double b, double t) { return a + t * (b - a); };
  const double c00 = lerp(at(lo[0], lo[1], lo[2]), at(hi[0], lo[1], lo[2]), f[0]);
  const double c10 = lerp(at(lo[0], hi[1], lo[2]), at(hi[0], hi[1], lo[2]), f[0]);
  const double c01 = lerp(at(lo[0], lo[1], hi[2]), at(hi[0], lo[1], hi[2]), f[0]);
  const double c11 = lerp(at(lo[0], hi[1], hi[2]), at(hi[0], hi[1], hi[2]), f[0]);
  return lerp(lerp(c00, c10, f[1]), lerp(c01, c11, f[1]), f[2]);
}

Vec3 random_point(Rng& rng) {
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  return {u(rng), u(rng), u(rng)};
}

}  // namespace

TEST(Conv3d, IdentityKernel) {
  const auto x = random_tensor({2, 3, 4, 5}, 1);
  T3 w({2, 2, 3, 3, 3}, 0.0), b({2}, 0.0);
  w[(0 * 2 + 0) * 27 + 13] = 1.0;
  w[(1 * 2 + 1) * 27 + 13] = 1.0;
  EXPECT_EQ(kernels::conv3d(x, w, &b), x);
}

TEST(Conv3d, BoxFilterOnDelta) {
  T3 x({1, 5, 5, 5}, 0.0), w({1, 1, 3, 3, 3}, 1.0), b({1}, 0.0);
  x[(2 * 5 + 2) * 5 + 2] = 1.0;
  const auto y = kernels::conv3d(x, w, &b);
  for (int z = 0; z < 5; ++z)
    for (int yy = 0; yy < 5; ++yy)
      for (int xx = 0; xx < 5; ++xx) {
        const bool near = std::abs(z - 2) <= 1 && std::abs(yy - 2) <= 1 && std::abs(xx - 2) <= 1;
        EXPECT_EQ(y[(z * 5 + yy) * 5 + xx], near ? 1.0 : 0.0);
      }
}

TEST(Conv3d, MatchesNaiveLoops) {
  for (auto shape : {Shape{1, 4, 4, 4}, Shape{3, 5, 6, 7}}) {
    const auto x = random_tensor(shape, 2);
    const auto w = random_tensor({4, shape[0], 3, 3, 3}, 3);
    const auto b = random_tensor({4}, 4);
    const auto y = kernels::conv3d(x, w, &b);
    const auto ref = naive_conv(x, w, b);
    for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(y[i], ref[i], 1e-12);
  }
}

TEST(Conv3d, ShapeMismatchThrows) {
  T3 x({2, 4, 4, 4}), w({1, 3, 3, 3, 3}), b({1});
  EXPECT_THROW(kernels::conv3d(x, w, &b), Error);
}

TEST(Conv3d, ThreadCountIsBitIdentical) {
  const auto x = random_tensor({8, 24, 24, 24}, 5);
  const auto w = random_tensor({8, 8, 3, 3, 3}, 6);
  const auto b = random_tensor({8}, 7);
  set_num_threads(1);
  const auto a = kernels::conv3d(x, w, &b);
  set_num_threads(4);
  const auto c = kernels::conv3d(x, w, &b);
  set_num_threads(1);
  EXPECT_EQ(a, c);
}

TEST(Downsample2, RampTakesWindowMax) {
  T3 x({2, 4, 6, 8});
  Rng rng(8);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = double((i * 7919) % 101);
  const auto r = kernels::maxpool2(x);
  ASSERT_EQ(r.out.shape(), (Shape{2, 2, 3, 4}));
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t z = 0; z < 2; ++z)
      for (std::size_t y = 0; y < 3; ++y)
        for (std::size_t xx = 0; xx < 4; ++xx) {
          double m = -1;
          for (int d = 0; d < 8; ++d)
            m = std::max(m, x[((c * 4 + 2 * z + (d >> 2)) * 6 + 2 * y + (d >> 1 & 1)) * 8 + 2 * xx + (d & 1)]);
          EXPECT_EQ(r.out[((c * 2 + z) * 3 + y) * 4 + xx], m);
        }
}

TEST(Downsample2, ConstantInputGradientGoesToFirstCell) {
  Tape<double> tape;
  auto x = tape.variable(T3({1, 2, 2, 2}, 3.0));
  auto y = downsample2(x);
  EXPECT_EQ(y.value()[0], 3.0);
  tape.backward(y);
  const auto& g = *tape.grad(x);
  EXPECT_EQ(g[0], 1.0);
  for (std::size_t i = 1; i < 8; ++i) EXPECT_EQ(g[i], 0.0);
}

TEST(Downsample2, TieGoesToLowerIndex) {
  Tape<double> tape;
  T3 v({1, 2, 2, 2}, 0.0);
  v[3] = 5.0;
  v[6] = 5.0;
  auto x = tape.variable(v);
  tape.backward(downsample2(x));
  EXPECT_EQ((*tape.grad(x))[3], 1.0);
  EXPECT_EQ((*tape.grad(x))[6], 0.0);
}

TEST(Downsample2, OddDimensionsThrow) {
  EXPECT_THROW(kernels::maxpool2(T3({1, 3, 4, 4})), Error);
}

TEST(Trilinear, ConstantGrid) {
  const T3 g({2, 5, 5, 5}, 0.25);
  Rng rng(9);
  std::vector<Vec3> q;
  for (int i = 0; i < 50; ++i) q.push_back(random_point(rng));
  q.push_back(Vec3(0.5, -0.5, 0.5));
  const auto out = kernels::trilinear_sample(g, std::span<const Vec3>(q));
  for (auto v : out.values()) EXPECT_EQ(v, 0.25);
}

TEST(Trilinear, NodeAndMidpoint) {
  const auto g = random_tensor({3, 4, 4, 4}, 10);
  const int k = 4;
  auto center = [&](int i) { return -0.5 + (i + 0.5) / k; };
  std::vector<Vec3> q{{center(1), center(2), center(3)}, {0.5 * (center(1) + center(2)), center(0), center(3)}};
  const auto out = kernels::trilinear_sample(g, std::span<const Vec3>(q));
  for (std::size_t c = 0; c < 3; ++c) {
    EXPECT_EQ(out[c], g[((c * k + 3) * k + 2) * k + 1]);
    EXPECT_EQ(out[3 + c], 0.5 * (g[((c * k + 3) * k + 0) * k + 1] + g[((c * k + 3) * k + 0) * k + 2]));
  }
}

TEST(Trilinear, MatchesDirectFormula) {
  Rng rng(11);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t k = 2 + trial % 7;
    const auto g = random_tensor({2, k, k, k}, 100 + trial);
    std::vector<Vec3> q{random_point(rng)};
    const auto out = kernels::trilinear_sample(g, std::span<const Vec3>(q));
    for (std::size_t c = 0; c < 2; ++c) EXPECT_NEAR(out[c], direct_trilinear(g, c, q[0]), 1e-12);
  }
}

TEST(Trilinear, OutsideDomainThrows) {
  const T3 g({1, 4, 4, 4}, 1.0);
  std::vector<Vec3> q{{0.0, 0.5000001, 0.0}};
  EXPECT_THROW(kernels::trilinear_sample(g, std::span<const Vec3>(q)), Error);
}

TEST(Linear, IdentityAndBias) {
  const auto x = random_tensor({5, 3}, 12);
  T3 eye({3, 3}, 0.0), zero({3}, 0.0);
  for (int i = 0; i < 3; ++i) eye[i * 4] = 1.0;
  EXPECT_EQ(kernels::linear(x, eye, zero), x);
  const T3 w0({2, 3}, 0.0);
  const T3 b({2}, std::vector<double>{0.5, -2.0});
  const auto y = kernels::linear(x, w0, b);
  for (std::size_t r = 0; r < 5; ++r) {
    EXPECT_EQ(y[2 * r], 0.5);
    EXPECT_EQ(y[2 * r + 1], -2.0);
  }
}

TEST(Linear, MatchesNaiveLoops) {
  const auto x = random_tensor({7, 5}, 13), w = random_tensor({4, 5}, 14), b = random_tensor({4}, 15);
  const auto y = kernels::linear(x, w, b);
  for (std::size_t r = 0; r < 7; ++r)
    for (std::size_t o = 0; o < 4; ++o) {
      double s = b[o];
      for (std::size_t i = 0; i < 5; ++i) s += x[r * 5 + i] * w[o * 5 + i];
      EXPECT_NEAR(y[r * 4 + o], s, 1e-12);
    }
}

TEST(Elementwise, ReluSigmoidConcatIdentities) {
  Tape<double> tape;
  auto x = tape.constant(random_tensor({4, 3}, 16, 0.0, 2.0));
  EXPECT_EQ(relu(x).value(), x.value());
  EXPECT_EQ(concat<double>({x}, 1).value(), x.value());
  auto z = tape.constant(T3({1}, 0.0));
  EXPECT_EQ(sigmoid(z).value()[0], 0.5);
  auto big = tape.constant(T3({2}, std::vector<double>{800.0, -800.0}));
  EXPECT_EQ(sigmoid(big).value()[0], 1.0);
  EXPECT_EQ(sigmoid(big).value()[1], 0.0);
}

TEST(Concat, OrderAlongAxis) {
  Tape<double> tape;
  auto a = tape.constant(T3({2, 1}, std::vector<double>{1, 2}));
  auto b = tape.constant(T3({2, 2}, std::vector<double>{3, 4, 5, 6}));
  const auto y = concat<double>({a, b}, 1).value();
  EXPECT_EQ(y.shape(), (Shape{2, 3}));
  EXPECT_EQ(y.storage(), (std::vector<double>{1, 3, 4, 2, 5, 6}));
  EXPECT_THROW(concat<double>({a, b}, 0), Error);
}

TEST(BceLoss, ReferenceValues) {
  Tape<double> tape;
  auto zero = tape.constant(T3({3}, 0.0));
  EXPECT_NEAR(bce_loss(zero, std::vector<double>{0, 1, 1}).value()[0], std::log(2.0), 1e-15);
  auto pos = tape.constant(T3({1}, 40.0));
  EXPECT_LT(bce_loss(pos, std::vector<double>{1}).value()[0], 1e-17);
  auto neg = tape.constant(T3({1}, -40.0));
  EXPECT_NEAR(bce_loss(neg, std::vector<double>{1}).value()[0], 40.0, 1e-12);
  EXPECT_THROW(bce_loss(zero, std::vector<double>{0, 0.5, 1}), Error);
}

TEST(BceLoss, MatchesHighPrecisionReference) {
  const auto x = random_tensor({200}, 17, -30.0, 30.0);
  std::vector<double> labels(200);
  for (std::size_t i = 0; i < 200; ++i) labels[i] = double(i % 3 == 0);
  long double ref = 0;
  for (std::size_t i = 0; i < 200; ++i) {
    const long double z = labels[i] > 0 ? -(long double)x[i] : (long double)x[i];
    ref += std::log1p(std::exp(z));
  }
  ref /= 200;
  Tape<double> tape;
  EXPECT_NEAR(bce_loss(tape.constant(x), labels).value()[0], double(ref), 1e-12);
  EXPECT_NEAR(bce_loss(tape.constant(x), labels, Reduction::sum).value()[0], double(ref * 200), 1e-10);
}

TEST(Tape, NonFiniteForwardThrows) {
  Tape<double> tape;
  EXPECT_THROW(tape.constant(T3({2}, std::vector<double>{1.0, std::nan("")})), NumericalError);
  auto x = tape.constant(T3({1}, 1000.0));
  EXPECT_THROW(linear(x.tape->constant(T3({1, 1}, 1e300)), x.tape->constant(T3({1, 1}, 1e300)), x.tape->constant(T3({1}, 0.0))),
               NumericalError);
}

TEST(Tape, FanOutAccumulates) {
  // y = relu(x) + relu(x) versus the duplicated-input construction relu(x1) + relu(x2)
  const auto v = random_tensor({6}, 18);
  Tape<double> t1;
  auto x = t1.variable(v);
  t1.backward(weighted_sum(add(relu(x), sigmoid(x)), std::make_shared<const T3>(T3({6}, 1.0))));
  Tape<double> t2;
  auto a = t2.variable(v);
  auto b = t2.variable(v);
  t2.backward(weighted_sum(add(relu(a), sigmoid(b)), std::make_shared<const T3>(T3({6}, 1.0))));
  for (std::size_t i = 0; i < 6; ++i) EXPECT_NEAR((*t1.grad(x))[i], (*t2.grad(a))[i] + (*t2.grad(b))[i], 1e-15);
}

TEST(Tape, ConstantsReceiveNoGradient) {
  Tape<double> tape;
  auto c = tape.constant(T3({2}, 1.0));
  auto v = tape.variable(T3({2}, 2.0));
  tape.backward(weighted_sum(add(c, v), std::make_shared<const T3>(T3({2}, 1.0))));
  EXPECT_EQ(tape.grad(c), nullptr);
  ASSERT_NE(tape.grad(v), nullptr);
}

// ---------------------------------------------------------------------------------------------
// Finite differences

TEST(GradCheck, Conv3d) {
  const auto r = grad_check([](Tape<double>&, const std::vector<Var<double>>& in) { return conv3d(in[0], in[1], in[2]); },
                            {random_tensor({2, 4, 4, 4}, 20), random_tensor({3, 2, 3, 3, 3}, 21), random_tensor({3}, 22)});
  EXPECT_TRUE(r.passed(1e-6)) << r.max_rel_error << " at " << r.worst;
  EXPECT_EQ(r.excluded, 0u);
}

TEST(GradCheck, Downsample2) {
  const auto r = grad_check([](Tape<double>&, const std::vector<Var<double>>& in) { return downsample2(in[0]); },
                            {random_tensor({2, 4, 4, 2}, 23)});
  EXPECT_TRUE(r.passed(1e-6)) << r.max_rel_error;
}

TEST(GradCheck, Downsample2TieIsExcludedNotFailed) {
  T3 x({1, 2, 2, 2}, 0.0);
  x[1] = x[5] = 1.0;
  const auto r = grad_check([](Tape<double>&, const std::vector<Var<double>>& in) { return downsample2(in[0]); }, {x});
  EXPECT_GE(r.excluded, 2u);
  EXPECT_TRUE(r.passed(1e-6)) << r.max_rel_error;
}

TEST(GradCheck, TrilinearGrid) {
  Rng rng(24);
  std::vector<Vec3> q;
  for (int i = 0; i < 40; ++i) q.push_back(random_point(rng));
  q.push_back(Vec3(0.5, 0.5, -0.5));
  auto queries = std::make_shared<const std::vector<Vec3>>(q);
  const auto r = grad_check([&](Tape<double>&, const std::vector<Var<double>>& in) { return trilinear_sample(in[0], queries); },
                            {random_tensor({2, 4, 4, 4}, 25)});
  EXPECT_TRUE(r.passed(1e-6)) << r.max_rel_error;
}

TEST(GradCheck, Linear) {
  const auto r = grad_check([](Tape<double>&, const std::vector<Var<double>>& in) { return linear(in[0], in[1], in[2]); },
                            {random_tensor({6, 5}, 26), random_tensor({3, 5}, 27), random_tensor({3}, 28)});
  EXPECT_TRUE(r.passed(1e-6)) << r.max_rel_error;
}

TEST(GradCheck, ReluAwayFromZero) {
  auto x = random_tensor({30}, 29);
  for (auto& v : x.values()) v += v >= 0 ? 0.1 : -0.1;
  const auto r = grad_check([](Tape<double>&, const std::vector<Var<double>>& in) { return relu(in[0]); }, {x});
  EXPECT_TRUE(r.passed(1e-6)) << r.max_rel_error;
  EXPECT_EQ(r.excluded, 0u);
}

TEST(GradCheck, ReluAtZeroIsExcluded) {
  const auto r = grad_check([](Tape<double>&, const std::vector<Var<double>>& in) { return relu(in[0]); },
                            {T3({3}, std::vector<double>{0.0, 1.0, -1.0})});
  EXPECT_EQ(r.excluded, 1u);
  EXPECT_TRUE(r.passed(1e-6));
}

TEST(GradCheck, SigmoidConcatPoolRepeatReshape) {
  const auto r = grad_check(
      [](Tape<double>&, const std::vector<Var<double>>& in) {
        auto pooled = global_mean_pool(in[0]);                          // [2]
        auto rows = repeat_rows(pooled, 3);                             // [3, 2]
        auto flat = reshape(in[1], {3, 4});                             // [3, 4]
        return sigmoid(concat<double>({rows, flat, in[2]}, 1));         // [3, 7]
      },
      {random_tensor({2, 2, 2, 2}, 30), random_tensor({12}, 31), random_tensor({3, 1}, 32)});
  EXPECT_TRUE(r.passed(1e-6)) << r.max_rel_error;
}

TEST(GradCheck, BceLoss) {
  std::vector<double> labels{1, 0, 0, 1, 1};
  for (auto reduction : {Reduction::mean, Reduction::sum}) {
    const auto r = grad_check([&](Tape<double>&, const std::vector<Var<double>>& in) { return bce_loss(in[0], labels, reduction); },
                              {random_tensor({5}, 33, -4.0, 4.0)});
    EXPECT_TRUE(r.passed(1e-6)) << r.max_rel_error;
  }
}

TEST(GradCheck, DetectsWrongAdjoint) {
  // relu forward with an adjoint that forgets the mask
  const auto r = grad_check(
      [](Tape<double>& t, const std::vector<Var<double>>& in) {
        auto x = in[0];
        T3 y = x.value();
        for (auto& v : y.values()) v = std::max(v, 0.0);
        return t.record(std::move(y), {x}, [x](Tape<double>& tp, std::size_t self) {
          auto& dx = tp.accumulator(x.id);
          for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += tp.accumulator(self)[i];
        }, "bad_relu");
      },
      {T3({4}, std::vector<double>{-1.0, 2.0, -0.5, 0.3})});
  EXPECT_FALSE(r.passed(1e-6));
}

TEST(TensorIo, RoundTripAndVersion) {
  const auto path = std::filesystem::temp_directory_path() / "ifnet_test_autodiff" / "t.iftn";
  const auto t = random_tensor({2, 3, 4}, 34);
  save_tensor(path, t);
  EXPECT_EQ(load_tensor(path), t);
  EXPECT_EQ(std::filesystem::file_size(path), 4u + 4 + 4 + 3 * 8 + 24 * 8);
  {
    BinaryWriter w;
    w.magic("IFTN");
    w.put<std::uint32_t>(9);
    w.write_file(path);
  }
  try {
    load_tensor(path);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("9"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("expected 1"), std::string::npos);
  }
}

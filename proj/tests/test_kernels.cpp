#include <doctest.h>

#include <cmath>
#include <functional>
#include <random>

#include "gcnn/error.hpp"
#include "gcnn/kernels.hpp"

using namespace gcnn;
using namespace gcnn::kernels;

namespace {

const IcosphereHierarchy& mesh() {
  static const auto h = IcosphereHierarchy::build(3);
  return h;
}

Tensor rnd(const Shape& dims, std::uint64_t seed, double lo = -1, double hi = 1) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(dims);
  for (double& v : t.values()) v = u(rng);
  return t;
}

double dot(const Tensor& a, const Tensor& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double rel(double a, double n) { return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-6}); }

// Max relative error between an analytic gradient and central differences
// of f with respect to every entry of x.
double fd_error(Tensor& x, const Tensor& analytic, const std::function<double()>& f, double h = 1e-5) {
  double worst = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double s = x[i];
    x[i] = s + h;
    const double up = f();
    x[i] = s - h;
    const double dn = f();
    x[i] = s;
    worst = std::max(worst, rel(analytic[i], (up - dn) / (2 * h)));
  }
  return worst;
}

// Naive mesh convolution straight from the definition.
Tensor mesh_conv_naive(const Tensor& x, const SamplerIndexMap& m, const Tensor& w, const Tensor& b) {
  const std::size_t B = x.dim(0), N = x.dim(1), C = x.dim(2), F = w.dim(2), P = m.points;
  Tensor out({B, N, F});
  for (std::size_t s = 0; s < B; ++s)
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t f = 0; f < F; ++f) {
        double acc = b[f];
        for (std::size_t p = 0; p < P; ++p)
          for (std::size_t c = 0; c < C; ++c)
            acc += x[(s * N + m.at(n, p)) * C + c] * w[(p * C + c) * F + f];
        out[(s * N + n) * F + f] = acc;
      }
  return out;
}

Tensor conv2d_naive(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t stride, std::size_t pad) {
  const std::size_t B = x.dim(0), H = x.dim(1), W = x.dim(2), C = x.dim(3);
  const std::size_t K = w.dim(0), F = w.dim(3);
  const std::size_t OH = (H + 2 * pad - K) / stride + 1, OW = (W + 2 * pad - K) / stride + 1;
  Tensor out({B, OH, OW, F});
  for (std::size_t s = 0; s < B; ++s)
    for (std::size_t i = 0; i < OH; ++i)
      for (std::size_t j = 0; j < OW; ++j)
        for (std::size_t f = 0; f < F; ++f) {
          double acc = b[f];
          for (std::size_t ki = 0; ki < K; ++ki)
            for (std::size_t kj = 0; kj < K; ++kj) {
              const long r = static_cast<long>(i * stride + ki) - static_cast<long>(pad);
              const long c = static_cast<long>(j * stride + kj) - static_cast<long>(pad);
              if (r < 0 || c < 0 || r >= static_cast<long>(H) || c >= static_cast<long>(W)) continue;
              for (std::size_t ch = 0; ch < C; ++ch)
                acc += x[((s * H + r) * W + c) * C + ch] * w[((ki * K + kj) * C + ch) * F + f];
            }
          out[((s * OH + i) * OW + j) * F + f] = acc;
        }
  return out;
}

}  // namespace

TEST_CASE("mesh conv matches the definition") {
  const auto& l2 = mesh().level(2);
  const auto map = build_index_map(mesh(), 2, RectangularPatch{3, 3, l2.mean_edge_length()});
  const Tensor x = rnd({2, 162, 3}, 1), w = rnd({9, 3, 4}, 2), b = rnd({4}, 3);
  const Tensor fast = mesh_conv_forward(x, map, w, b);
  const Tensor ref = mesh_conv_naive(x, map, w, b);
  for (std::size_t i = 0; i < ref.size(); ++i) CHECK(fast[i] == doctest::Approx(ref[i]).epsilon(1e-12));
}

TEST_CASE("mesh conv identity filters") {
  const auto& l2 = mesh().level(2);
  const Tensor x = rnd({1, 162, 1}, 4);
  const auto id = build_index_map(mesh(), 2, RectangularPatch{1, 1, 0.1});
  CHECK(mesh_conv_forward(x, id, Tensor({1, 1, 1}, 1.0), Tensor({1}, 0.0)) == x);

  const auto m5 = build_index_map(mesh(), 2, RectangularPatch{5, 5, l2.mean_edge_length()});
  Tensor delta({25, 1, 1}, 0.0);
  delta[12] = 1.0;
  CHECK(mesh_conv_forward(x, m5, delta, Tensor({1}, 0.0)) == x);
}

TEST_CASE("mesh conv gradients") {
  const auto& l1 = mesh().level(1);
  const auto map = build_index_map(mesh(), 1, RectangularPatch{3, 3, l1.mean_edge_length()});
  Tensor x = rnd({2, 42, 2}, 5), w = rnd({9, 2, 3}, 6), b = rnd({3}, 7);
  const Tensor y = rnd({2, 42, 3}, 8);
  auto loss = [&] { return dot(mesh_conv_forward(x, map, w, b), y); };
  const auto g = mesh_conv_backward(x, map, w, y);
  CHECK(fd_error(w, g.weights, loss) < 1e-6);
  CHECK(fd_error(b, g.bias, loss) < 1e-6);
  CHECK(fd_error(x, g.input, loss) < 1e-6);
}

TEST_CASE("mesh conv errors") {
  const auto map = build_index_map(mesh(), 1, RectangularPatch{3, 3, 0.2});
  CHECK_THROWS_AS(mesh_conv_forward(Tensor({1, 41, 2}), map, Tensor({9, 2, 3}), Tensor({3})), ShapeError);
  CHECK_THROWS_AS(mesh_conv_forward(Tensor({1, 42, 2}), map, Tensor({8, 2, 3}), Tensor({3})), ShapeError);
  Tensor bad({1, 42, 2}, 0.0);
  bad[5] = std::nan("");
  CHECK_THROWS_AS(mesh_conv_forward(bad, map, Tensor({9, 2, 3}), Tensor({3})), NumericError);
}

TEST_CASE("mesh mean pool") {
  const auto& g = mesh().pooling_groups(1);  // 162 -> 42
  const Tensor c({2, 162, 3}, 1.75);
  const Tensor pooled = mesh_mean_pool_forward(c, g);
  CHECK(pooled.dims() == Shape{2, 42, 3});
  for (double v : pooled.values()) CHECK(v == 1.75);

  const Tensor x = rnd({2, 162, 3}, 9), y = rnd({2, 42, 3}, 10);
  const double lhs = dot(mesh_mean_pool_forward(x, g), y);
  const double rhs = dot(x, mesh_mean_pool_backward(y, g, 162));
  CHECK(std::abs(lhs - rhs) <= 1e-12 * std::max(1.0, std::abs(lhs)));

  const Tensor x2 = rnd({2, 162, 3}, 11);
  Tensor sum({2, 162, 3});
  for (std::size_t i = 0; i < sum.size(); ++i) sum[i] = 0.5 * x[i] + 2.0 * x2[i];
  const Tensor a = mesh_mean_pool_forward(x, g), b = mesh_mean_pool_forward(x2, g), s = mesh_mean_pool_forward(sum, g);
  for (std::size_t i = 0; i < s.size(); ++i) CHECK(std::abs(s[i] - (0.5 * a[i] + 2.0 * b[i])) < 1e-12);

  CHECK_THROWS_AS(mesh_mean_pool_forward(Tensor({1, 160, 3}), g), ShapeError);
}

TEST_CASE("batch norm training statistics") {
  auto st = BatchNormState::identity(3);
  const Tensor x = rnd({4, 10, 3}, 12, -3, 5);
  const Tensor y = batch_norm_forward(x, st, Mode::Train);
  for (std::size_t c = 0; c < 3; ++c) {
    double m = 0, v = 0;
    for (std::size_t i = c; i < y.size(); i += 3) m += y[i];
    m /= 40;
    for (std::size_t i = c; i < y.size(); i += 3) v += (y[i] - m) * (y[i] - m);
    v /= 40;
    CHECK(std::abs(m) < 1e-10);
    CHECK(std::abs(v - 1.0) < 1e-3);  // epsilon shrinks the variance slightly
  }
  for (double r : st.running_var) CHECK(r > 0);
  CHECK_THROWS_AS(batch_norm_forward(Tensor({1, 10, 3}), st, Mode::Train), ConfigError);
}

TEST_CASE("batch norm eval is near identity with unit statistics") {
  auto st = BatchNormState::identity(2);
  const Tensor x = rnd({1, 5, 2}, 13);
  const Tensor y = batch_norm_forward(x, st, Mode::Eval);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(std::abs(y[i] - x[i] / std::sqrt(1 + st.epsilon)) < 1e-15);
}

TEST_CASE("batch norm gradients") {
  auto st = BatchNormState::identity(3);
  st.scale = {1.3, 0.7, -0.4};
  st.shift = {0.1, -0.2, 0.5};
  Tensor x = rnd({4, 10, 3}, 14);
  const Tensor y = rnd({4, 10, 3}, 15);
  auto loss = [&] {
    auto s = st;
    return dot(batch_norm_forward(x, s, Mode::Train), y);
  };
  BatchNormCache cache;
  auto s0 = st;
  batch_norm_forward(x, s0, Mode::Train, &cache);
  const auto g = batch_norm_backward(y, st, cache);
  CHECK(fd_error(x, g.input, loss) < 1e-5);
  Tensor scale({3}, st.scale), shift({3}, st.shift);
  auto loss_scale = [&] {
    auto s = st;
    s.scale.assign(scale.values().begin(), scale.values().end());
    s.shift.assign(shift.values().begin(), shift.values().end());
    return dot(batch_norm_forward(x, s, Mode::Train), y);
  };
  CHECK(fd_error(scale, Tensor({3}, g.scale), loss_scale) < 1e-5);
  CHECK(fd_error(shift, Tensor({3}, g.shift), loss_scale) < 1e-5);
}

TEST_CASE("relu") {
  const Tensor x({3}, std::vector<double>{-1, 0, 2});
  CHECK(relu_forward(x) == Tensor({3}, std::vector<double>{0, 0, 2}));
  CHECK(relu_backward(x, Tensor({3}, 1.0)) == Tensor({3}, std::vector<double>{0, 0, 1}));
  const Tensor neg({4}, -0.5);
  CHECK(relu_forward(neg) == Tensor({4}, 0.0));
  CHECK(relu_backward(neg, Tensor({4}, 3.0)) == Tensor({4}, 0.0));

  Tensor r = rnd({50}, 16);
  for (double& v : r.values())
    if (std::abs(v) < 1e-3) v = 0.5;
  const Tensor y = rnd({50}, 17);
  CHECK(fd_error(r, relu_backward(r, y), [&] { return dot(relu_forward(r), y); }) < 1e-8);
}

TEST_CASE("fully connected") {
  Tensor eye({3, 3}, 0.0);
  for (int i = 0; i < 3; ++i) eye[i * 4] = 1.0;
  const Tensor x = rnd({2, 3}, 18);
  CHECK(fully_connected_forward(x, eye, Tensor({3}, 0.0)) == x);

  Tensor in = rnd({3, 4, 2}, 19), w = rnd({8, 5}, 20), b = rnd({5}, 21);
  const Tensor y = rnd({3, 5}, 22);
  const Tensor out = fully_connected_forward(in, w, b);
  CHECK(out.dims() == Shape{3, 5});
  for (std::size_t s = 0; s < 3; ++s)
    for (std::size_t h = 0; h < 5; ++h) {
      double acc = b[h];
      for (std::size_t d = 0; d < 8; ++d) acc += in[s * 8 + d] * w[d * 5 + h];
      CHECK(out[s * 5 + h] == doctest::Approx(acc).epsilon(1e-12));
    }
  auto loss = [&] { return dot(fully_connected_forward(in, w, b), y); };
  const auto g = fully_connected_backward(in, w, y);
  CHECK(fd_error(w, g.weights, loss) < 1e-6);
  CHECK(fd_error(b, g.bias, loss) < 1e-6);
  CHECK(fd_error(in, g.input, loss) < 1e-6);
  CHECK_THROWS_AS(fully_connected_forward(rnd({2, 7}, 1), w, b), ShapeError);
}

TEST_CASE("softmax cross-entropy") {
  const std::vector<int> l0{0, 1};
  CHECK(softmax_cross_entropy(Tensor({2, 2}, 0.3), l0).loss == doctest::Approx(std::log(2.0)).epsilon(1e-14));
  const std::vector<int> first{0};
  CHECK(softmax_cross_entropy(Tensor({1, 2}, std::vector<double>{20, -20}), first).loss < 1e-15);
  const auto big = softmax_cross_entropy(Tensor({1, 2}, std::vector<double>{1000, -1000}), first);
  CHECK(std::isfinite(big.loss));

  Tensor z = rnd({4, 3}, 23, -2, 2);
  const std::vector<int> lab{2, 0, 1, 1};
  const auto r = softmax_cross_entropy(z, lab);
  CHECK(fd_error(z, r.grad_logits, [&] { return softmax_cross_entropy(z, lab).loss; }) < 1e-6);
  const std::vector<int> bad{0, 3, 1, 1};
  CHECK_THROWS_AS(softmax_cross_entropy(z, bad), IndexError);
  const std::vector<int> negative{0, -1, 1, 1};
  CHECK_THROWS_AS(softmax_cross_entropy(z, negative), IndexError);
}

TEST_CASE("sgd step") {
  std::vector<double> p{1.0, -2.0};
  const std::vector<double> g{2.0, 1.0};
  sgd_step(p, g, 0.0);
  CHECK(p == std::vector<double>{1.0, -2.0});
  std::vector<double> q{1.0};
  sgd_step(q, std::vector<double>{2.0}, 0.02);
  CHECK(q[0] == doctest::Approx(0.96).epsilon(1e-15));

  // (p - 3)^2 shrinks after one step.
  std::vector<double> w{0.0};
  const double before = (w[0] - 3) * (w[0] - 3);
  sgd_step(w, std::vector<double>{2 * (w[0] - 3)}, 0.1);
  CHECK((w[0] - 3) * (w[0] - 3) < before);

  std::vector<double> keep{1.0, 2.0};
  CHECK_THROWS_AS(sgd_step(keep, std::vector<double>{0.5, std::nan("")}, 0.1), NumericError);
  CHECK(keep == std::vector<double>{1.0, 2.0});
  CHECK_THROWS_AS(sgd_step(keep, std::vector<double>{0.5}, 0.1), ShapeError);
}

TEST_CASE("image conv extents and parameters") {
  CHECK(conv_output_extent(224, 11, 4, 1) == 54);
  CHECK(conv_output_extent(27, 5, 1, 2) == 27);
  CHECK(conv_output_extent(13, 3, 1, 1) == 13);
  CHECK(11 * 11 * 2 * 64 == 15488);
  CHECK_THROWS_AS(conv_output_extent(3, 5, 1, 0), ConfigError);
  const Tensor out = image_conv2d_forward(Tensor({1, 224, 224, 2}, 0.1), Tensor({11, 11, 2, 2}, 0.01),
                                          Tensor({2}, 0.0), 4, 1);
  CHECK(out.dims() == Shape{1, 54, 54, 2});
}

TEST_CASE("image conv matches the definition and its gradients") {
  for (auto [stride, pad] : {std::pair<std::size_t, std::size_t>{1, 0}, {1, 1}, {2, 1}, {3, 2}}) {
    Tensor x = rnd({2, 8, 8, 2}, 24), w = rnd({3, 3, 2, 3}, 25), b = rnd({3}, 26);
    const Tensor fast = image_conv2d_forward(x, w, b, stride, pad);
    const Tensor ref = conv2d_naive(x, w, b, stride, pad);
    REQUIRE(fast.dims() == ref.dims());
    for (std::size_t i = 0; i < ref.size(); ++i) CHECK(fast[i] == doctest::Approx(ref[i]).epsilon(1e-12));

    const Tensor y = rnd(ref.dims(), 27);
    auto loss = [&] { return dot(image_conv2d_forward(x, w, b, stride, pad), y); };
    const auto g = image_conv2d_backward(x, w, y, stride, pad);
    CHECK(fd_error(w, g.weights, loss) < 1e-6);
    CHECK(fd_error(b, g.bias, loss) < 1e-6);
    CHECK(fd_error(x, g.input, loss) < 1e-6);
  }
}

TEST_CASE("image mean pool") {
  Tensor x = rnd({1, 8, 8, 1}, 28);
  const Tensor p = image_mean_pool2d_forward(x, 2, 2);
  CHECK(p.dims() == Shape{1, 4, 4, 1});
  CHECK(p[0] == doctest::Approx((x[0] + x[1] + x[8] + x[9]) / 4));
  CHECK(image_mean_pool2d_forward(Tensor({1, 27, 27, 3}), 3, 2).dims() == Shape{1, 13, 13, 3});

  const Tensor y = rnd(p.dims(), 29);
  const double lhs = dot(p, y);
  const double rhs = dot(x, image_mean_pool2d_backward(y, x.dims(), 2, 2));
  CHECK(std::abs(lhs - rhs) < 1e-12);
  Tensor x3 = rnd({1, 9, 9, 2}, 30);
  const Tensor y3 = rnd(image_mean_pool2d_forward(x3, 3, 2).dims(), 31);
  CHECK(fd_error(x3, image_mean_pool2d_backward(y3, x3.dims(), 3, 2),
                 [&] { return dot(image_mean_pool2d_forward(x3, 3, 2), y3); }) < 1e-8);
}

TEST_CASE("forward passes are bit-reproducible") {
  const auto map = build_index_map(mesh(), 2, RectangularPatch{5, 5, mesh().level(2).mean_edge_length()});
  const Tensor x = rnd({3, 162, 2}, 32), w = rnd({25, 2, 4}, 33), b = rnd({4}, 34);
  CHECK(mesh_conv_forward(x, map, w, b) == mesh_conv_forward(x, map, w, b));
  auto s1 = BatchNormState::identity(2), s2 = BatchNormState::identity(2);
  CHECK(batch_norm_forward(x, s1, Mode::Train) == batch_norm_forward(x, s2, Mode::Train));
}

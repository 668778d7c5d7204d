// SPDX-License-Identifier: Apache-2.0

// Differentiating through gradients: backward() emits graph nodes, so a
// scalar built from first-order gradients can be differentiated again.
// That is the whole mechanism behind the gradient penalty, so it gets its
// own suite with exact oracles and nested finite differences.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "organ/graph.hpp"
#include "organ/rng.hpp"
#include "organ/tensor.hpp"

using namespace organ;
using T = Tensor<double>;

namespace {

T random_tensor(std::vector<int> shape, Rng& rng, double lo = -1.0,
                double hi = 1.0) {
  T t(std::move(shape));
  for (std::int64_t i = 0; i < t.numel(); ++i)
    t.data[i] = lo + (hi - lo) * rng.uniform_real();
  return t;
}

// Gradient-penalty style scalar: differentiate `inner` wrt ids[0], take the
// squared-norm-based penalty, return it as a node.  All inputs beyond
// ids[0] are parameters.
using InnerFn =
    std::function<int(Graph<double>&, const std::vector<int>& ids)>;

int penalty_node(Graph<double>& g, const std::vector<int>& ids,
                 const InnerFn& inner) {
  int d = inner(g, ids);
  auto grads = g.backward(d);
  auto it = grads.find(ids[0]);
  int gx = it != grads.end()
               ? it->second
               : g.constant(T::zeros(g.value(ids[0]).shape));
  int norm = g.sqrt_(g.sum_all(g.mul(gx, gx)));
  int diff = g.shift(norm, -1.0);
  return g.mul(diff, diff);
}

double penalty_value(const std::vector<T>& inputs, const InnerFn& inner) {
  Graph<double> g;
  std::vector<int> ids;
  for (const auto& t : inputs) ids.push_back(g.input(t, true));
  return g.value(penalty_node(g, ids, inner)).data[0];
}

// Second-order check: autodiff gradient of the penalty wrt every parameter
// input against central differences of the penalty value.
void check_penalty_gradients(std::vector<T> inputs, const InnerFn& inner,
                             Rng& rng, double tol = 1e-3,
                             int probes_per_input = 4) {
  Graph<double> g;
  std::vector<int> ids;
  for (const auto& t : inputs) ids.push_back(g.input(t, true));
  int pen = penalty_node(g, ids, inner);
  auto grads = g.backward(pen);
  const double h = 1e-5;
  for (std::size_t i = 1; i < inputs.size(); ++i) {
    auto it = grads.find(ids[i]);
    for (int probe = 0; probe < probes_per_input; ++probe) {
      const std::int64_t e =
          static_cast<std::int64_t>(rng.uniform_int(0, inputs[i].numel() - 1));
      const double ad = it == grads.end() ? 0.0 : g.value(it->second).data[e];
      auto plus = inputs;
      auto minus = inputs;
      plus[i].data[e] += h;
      minus[i].data[e] -= h;
      const double fd =
          (penalty_value(plus, inner) - penalty_value(minus, inner)) / (2 * h);
      const double denom = std::max(1e-7, std::abs(ad) + std::abs(fd));
      CHECK_MESSAGE(std::abs(ad - fd) / denom < tol,
                    "param ", i, " elem ", e, ": ad=", ad, " fd=", fd);
    }
  }
}

}  // namespace

TEST_CASE("grad-of-grad of sum of squares is exact") {
  // f = sum(x^2), df/dx = 2x, s = sum((df/dx)^2) = 4 sum(x^2), ds/dx = 8x
  Rng rng(31);
  auto x = random_tensor({7}, rng);
  Graph<double> g;
  int xi = g.input(x, true);
  int f = g.sum_all(g.mul(xi, xi));
  auto g1 = g.backward(f);
  int gx = g1.at(xi);
  for (std::int64_t i = 0; i < x.numel(); ++i)
    CHECK(g.value(gx).data[i] == doctest::Approx(2 * x.data[i]).epsilon(1e-12));
  int s = g.sum_all(g.mul(gx, gx));
  auto g2 = g.backward(s);
  const auto& ggx = g.value(g2.at(xi));
  for (std::int64_t i = 0; i < x.numel(); ++i)
    CHECK(ggx.data[i] == doctest::Approx(8 * x.data[i]).epsilon(1e-12));
}

TEST_CASE("linear critic: penalty and its weight gradient in closed form") {
  // D(x) = w . x  =>  grad_x D = w, penalty = (|w| - 1)^2,
  // d penalty / dw = 2 (|w| - 1) w / |w|
  Rng rng(32);
  for (int trial = 0; trial < 5; ++trial) {
    auto x = random_tensor({6}, rng);
    auto w = random_tensor({6}, rng, 0.3, 1.2);
    Graph<double> g;
    int xi = g.input(x, true);
    int wi = g.input(w, true);
    int pen = penalty_node(
        g, {xi, wi},
        [](Graph<double>& gg, const std::vector<int>& ids) {
          return gg.sum_all(gg.mul(ids[0], ids[1]));
        });
    const double norm = std::sqrt((w.data * w.data).sum());
    CHECK(std::abs(g.value(pen).data[0] - (norm - 1) * (norm - 1)) <= 1e-10);
    auto grads = g.backward(pen);
    const auto& dw = g.value(grads.at(wi));
    for (int i = 0; i < 6; ++i) {
      const double expect = 2 * (norm - 1) * w.data[i] / norm;
      CHECK(std::abs(dw.data[i] - expect) <= 1e-10);
    }
    CHECK(grads.count(xi) == 0);  // second derivative wrt x is zero
  }
}

TEST_CASE("unit-norm linear critic gives exactly zero penalty") {
  Graph<double> g;
  T w({4});
  w.data << 0.5, 0.5, 0.5, 0.5;  // |w| = 1
  T x({4});
  x.data << 1, -2, 3, 4;
  int xi = g.input(x, true);
  int wi = g.input(w, true);
  int pen = penalty_node(g, {xi, wi},
                         [](Graph<double>& gg, const std::vector<int>& ids) {
                           return gg.sum_all(gg.mul(ids[0], ids[1]));
                         });
  CHECK(std::abs(g.value(pen).data[0]) <= 1e-10);
}

TEST_CASE("constant critic: zero gradient, penalty exactly one") {
  Graph<double> g;
  Rng rng(33);
  auto x = random_tensor({5}, rng);
  int xi = g.input(x, true);
  int pen = penalty_node(g, {xi},
                         [](Graph<double>& gg, const std::vector<int>& ids) {
                           (void)ids;
                           return gg.scalar(3.25);
                         });
  CHECK(g.value(pen).data[0] == 1.0);
}

TEST_CASE("tanh second derivative matches the analytic form") {
  // f = sum(tanh x), g1 = 1 - t^2, s = sum(g1), ds/dx = -2 t (1 - t^2)
  Rng rng(34);
  auto x = random_tensor({9}, rng, -1.5, 1.5);
  Graph<double> g;
  int xi = g.input(x, true);
  int f = g.sum_all(g.tanh_(xi));
  int gx = g.backward(f).at(xi);
  int s = g.sum_all(gx);
  const auto& ggx = g.value(g.backward(s).at(xi));
  for (std::int64_t i = 0; i < x.numel(); ++i) {
    const double t = std::tanh(x.data[i]);
    CHECK(ggx.data[i] ==
          doctest::Approx(-2 * t * (1 - t * t)).epsilon(1e-9));
  }
}

TEST_CASE("penalty gradients through a dense leaky-relu critic") {
  Rng rng(35);
  auto x = random_tensor({2, 6}, rng, 0.1, 0.9);
  auto w1 = random_tensor({6, 4}, rng);
  auto w2 = random_tensor({4, 1}, rng);
  check_penalty_gradients(
      {x, w1, w2},
      [](Graph<double>& g, const std::vector<int>& ids) {
        int h = g.leaky_relu(g.matmul(ids[0], ids[1]), 0.2);
        return g.sum_all(g.matmul(h, ids[2]));
      },
      rng);
}

TEST_CASE("penalty gradients through a conv critic") {
  Rng rng(36);
  auto x = random_tensor({1, 1, 4, 4, 4}, rng, 0.1, 0.9);
  auto w = random_tensor({2, 1, 2, 2, 2}, rng);
  auto v = random_tensor({2 * 2 * 2 * 2, 1}, rng);
  check_penalty_gradients(
      {x, w, v},
      [](Graph<double>& g, const std::vector<int>& ids) {
        int h = g.leaky_relu(g.conv3d(ids[0], ids[1], 2, 0), 0.2);
        int flat = g.reshape(h, {1, 16});
        return g.sum_all(g.matmul(flat, ids[2]));
      },
      rng);
}

TEST_CASE("penalty gradients through reductions and sigmoid gates") {
  // miniature squeeze-excite shaped path
  Rng rng(37);
  auto x = random_tensor({2, 3, 2, 2, 2}, rng, 0.1, 0.9);
  auto wg = random_tensor({3, 3}, rng);
  check_penalty_gradients(
      {x, wg},
      [](Graph<double>& g, const std::vector<int>& ids) {
        int pooled = g.scale(g.reduce_spatial(ids[0]), 1.0 / 8.0);  // (N,C)
        int gate = g.sigmoid(g.matmul(pooled, ids[1]));
        int scaled = g.mul(ids[0], g.broadcast_spatial(gate, 2, 2, 2));
        return g.mean_all(scaled);
      },
      rng);
}

TEST_CASE("penalty gradients through a transposed-conv path") {
  Rng rng(38);
  auto x = random_tensor({1, 2, 2, 2, 2}, rng, 0.1, 0.9);
  auto w = random_tensor({2, 1, 4, 4, 4}, rng, -0.5, 0.5);
  check_penalty_gradients(
      {x, w},
      [](Graph<double>& g, const std::vector<int>& ids) {
        int y = g.conv_transpose3d(ids[0], ids[1], 2, 1);
        return g.mean_all(g.mul(y, y));
      },
      rng);
}

TEST_CASE("third derivatives also come out of the tape") {
  // f = sum(x^4): f' = 4x^3, f'' = 12x^2, f''' = 24x
  Graph<double> g;
  T x({3});
  x.data << 0.7, -1.1, 2.0;
  int xi = g.input(x, true);
  int x2 = g.mul(xi, xi);
  int f = g.sum_all(g.mul(x2, x2));
  int d1 = g.backward(f).at(xi);
  int d2 = g.backward(g.sum_all(d1)).at(xi);
  int d3 = g.backward(g.sum_all(d2)).at(xi);
  for (int i = 0; i < 3; ++i)
    CHECK(g.value(d3).data[i] ==
          doctest::Approx(24 * x.data[i]).epsilon(1e-12));
}

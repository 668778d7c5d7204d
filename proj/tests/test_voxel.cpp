// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "organ/rng.hpp"
#include "organ/voxel.hpp"

using namespace organ;

namespace {

VoxelGrid random_grid(int dim, Rng& rng, double density = 0.5) {
  VoxelGrid g(dim);
  for (auto& v : g.occupancy) v = rng.bernoulli(density) ? 1 : 0;
  return g;
}

}  // namespace

TEST_CASE("to_signed maps occupancy to +/-1") {
  VoxelGrid empty(4);
  auto s = to_signed<double>(empty);
  CHECK((s.values == -1.0).all());

  VoxelGrid full(4);
  for (auto& v : full.occupancy) v = 1;
  auto sf = to_signed<double>(full);
  CHECK((sf.values == 1.0).all());

  Rng rng(7);
  auto g = random_grid(8, rng);
  auto sm = to_signed<double>(g);
  for (std::size_t i = 0; i < g.occupancy.size(); ++i)
    CHECK(sm.values[static_cast<Eigen::Index>(i)] == (g.occupancy[i] ? 1.0 : -1.0));
}

TEST_CASE("binarize thresholds at > threshold") {
  SignedGrid<double> s(1);
  s.values[0] = 0.3;
  CHECK(binarize(s, 0.0).occupancy[0] == 1);
  s.values[0] = -0.3;
  CHECK(binarize(s, 0.0).occupancy[0] == 0);
  s.values[0] = 0.0;  // exactly at threshold -> empty
  CHECK(binarize(s, 0.0).occupancy[0] == 0);
  CHECK_THROWS_AS(binarize(s, 1.0), ShapeError);
}

TEST_CASE("binarize(to_signed(g), 0) is the identity on occupancy") {
  Rng rng(42);
  for (int trial = 0; trial < 20; ++trial) {
    auto g = random_grid(8, rng, 0.3 + 0.03 * (trial % 10));
    auto back = binarize(to_signed<float>(g), 0.0f);
    CHECK(back.occupancy == g.occupancy);
  }
}

TEST_CASE("l1_loss basics") {
  VoxelGrid a(4), b(4);
  for (auto& v : a.occupancy) v = 1;
  CHECK(l1_loss(to_signed<double>(a), to_signed<double>(a)) == 0.0);
  // all +1 vs all -1: every cell differs by 2
  CHECK(l1_loss(to_signed<double>(a), to_signed<double>(b)) == doctest::Approx(2.0));

  Rng rng(3);
  auto g1 = random_grid(6, rng);
  auto g2 = random_grid(6, rng);
  const double ab = l1_loss(to_signed<double>(g1), to_signed<double>(g2));
  const double ba = l1_loss(to_signed<double>(g2), to_signed<double>(g1));
  CHECK(ab == ba);
  CHECK(ab >= 0.0);
  CHECK((ab == 0.0) == (g1.occupancy == g2.occupancy));

  SignedGrid<double> s3(3);
  CHECK_THROWS_AS(l1_loss(to_signed<double>(g1), s3), ShapeError);
}

TEST_CASE("missing_count is the one-sided difference") {
  VoxelGrid complete(2), fractured(2);
  for (auto& v : complete.occupancy) v = 1;
  CHECK(missing_count(fractured, complete) == 8);
  CHECK(missing_count(complete, complete) == 0);

  // extra voxel in fractured that complete lacks does not contribute
  VoxelGrid c2(2), f2(2);
  c2.set(0, 0, 0, true);
  f2.set(1, 1, 1, true);
  CHECK(missing_count(f2, c2) == 1);

  VoxelGrid other(3);
  CHECK_THROWS_AS(missing_count(other, c2), ShapeError);
}

TEST_CASE("l1 between signed complete/fractured equals 2*missing/dim^3 when subset") {
  Rng rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    auto complete = random_grid(8, rng, 0.4);
    auto fractured = complete;
    for (auto& v : fractured.occupancy)
      if (v && rng.bernoulli(0.3)) v = 0;
    const double l1 = l1_loss(to_signed<double>(fractured), to_signed<double>(complete));
    const double expect =
        2.0 * static_cast<double>(missing_count(fractured, complete)) / (8.0 * 8 * 8);
    CHECK(l1 == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("occupied_count bounds and json export") {
  VoxelGrid g(4);
  g.set(1, 2, 3, true);
  CHECK(occupied_count(g) == 1);
  const std::string js = grid_to_json(g);
  CHECK(js.find("\"dim\":4") != std::string::npos);
  CHECK(js.find("\"occupancy\"") != std::string::npos);
}

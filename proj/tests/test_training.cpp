// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "organ/training.hpp"

using namespace organ;
using T = Tensor<double>;

namespace {

ArchConfig tiny_arch() {
  ArchConfig a;
  a.dim = 16;
  a.enc_channels = {4, 8, 16, 32};
  a.dec_channels = {16, 8, 4};
  a.n_classes = 3;
  a.label_embed = 8;
  a.label_channels = 2;
  a.se_ratio = 2;
  a.critic_dense = 32;
  return a;
}

TrainConfig tiny_config() {
  TrainConfig c;
  c.batch_size = 2;
  c.epochs = 1;
  c.seed = 17;
  return c;
}

VoxelGrid blob(int dim, int cx, int cy, int cz, int r) {
  VoxelGrid g(dim);
  for (int x = 0; x < dim; ++x)
    for (int y = 0; y < dim; ++y)
      for (int z = 0; z < dim; ++z)
        if ((x - cx) * (x - cx) + (y - cy) * (y - cy) + (z - cz) * (z - cz) <=
            r * r)
          g.set(x, y, z, true);
  return g;
}

std::vector<SamplePair> tiny_corpus(int dim, int pairs_per_object = 2) {
  std::vector<VoxelGrid> objects = {blob(dim, 8, 8, 8, 4),
                                    blob(dim, 6, 9, 8, 3)};
  std::vector<int> labels = {0, 1};
  FractureParams fp;
  fp.seed = 5;
  return fracture_objects(objects, labels, fp, pairs_per_object);
}

}  // namespace

TEST_CASE("train config validation") {
  TrainConfig c;
  CHECK_NOTHROW(c.validate());
  c.gen_sign = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.beta1 = 1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.gen_every = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("grids_to_batch maps occupancy to the signed domain") {
  VoxelGrid g(4);
  g.set(0, 0, 0, true);
  g.set(3, 3, 3, true);
  auto t = grids_to_batch<double>({&g, &g});
  CHECK(t.shape == std::vector<int>{2, 1, 4, 4, 4});
  CHECK(t.data[0] == 1.0);
  CHECK(t.data[1] == -1.0);
  CHECK(t.data[63] == 1.0);
  CHECK(t.data.sum() == doctest::Approx(2 * (2.0 - 62.0)));
}

TEST_CASE("interpolate blends per sample and stays on the segment") {
  Rng rng(3);
  T real({3, 1, 2, 2, 2});
  T fake({3, 1, 2, 2, 2});
  real.data.setConstant(1.0);
  fake.data.setConstant(-1.0);
  auto x = interpolate(real, fake, rng);
  // each element of sample i equals 2 eps_i - 1 for one shared eps_i
  for (int i = 0; i < 3; ++i) {
    const double first = x.data[i * 8];
    CHECK(first >= -1.0);
    CHECK(first <= 1.0);
    for (int j = 1; j < 8; ++j) CHECK(x.data[i * 8 + j] == first);
  }
  // samples get different draws almost surely
  CHECK(x.data[0] != x.data[8]);

  Rng rng2(3);
  auto y = interpolate(real, fake, rng2);
  CHECK((x.data == y.data).all());
}

TEST_CASE("completion loss oracle") {
  Graph<double> g;
  int a = g.input(T::full({1, 1, 2, 2, 2}, 1.0), false);
  int b = g.input(T::full({1, 1, 2, 2, 2}, -1.0), false);
  CHECK(g.value(completion_loss(g, a, b)).data[0] == doctest::Approx(2.0));
  CHECK(g.value(completion_loss(g, a, a)).data[0] == doctest::Approx(0.0));
}

TEST_CASE("adam matches a hand-stepped reference") {
  TrainConfig cfg;
  cfg.lr = 0.01;
  ArchConfig a = tiny_arch();
  (void)a;
  ModelParams<double> p;
  p.tensors["w"] = T::from({2}, {1.0, -2.0});
  AdamState<double> st;

  // reference: scalar adam on each coordinate
  double m[2] = {0, 0}, v[2] = {0, 0}, ref[2] = {1.0, -2.0};
  std::vector<std::array<double, 2>> gs = {{0.3, -0.1}, {-0.2, 0.4},
                                           {0.05, 0.9}};
  for (std::size_t t = 1; t <= gs.size(); ++t) {
    std::map<std::string, T> grads;
    grads.emplace("w", T::from({2}, {gs[t - 1][0], gs[t - 1][1]}));
    adam_step(p, grads, st, cfg);
    for (int i = 0; i < 2; ++i) {
      m[i] = cfg.beta1 * m[i] + (1 - cfg.beta1) * gs[t - 1][i];
      v[i] = cfg.beta2 * v[i] + (1 - cfg.beta2) * gs[t - 1][i] * gs[t - 1][i];
      const double mh = m[i] / (1 - std::pow(cfg.beta1, double(t)));
      const double vh = v[i] / (1 - std::pow(cfg.beta2, double(t)));
      ref[i] -= cfg.lr * mh / (std::sqrt(vh) + cfg.adam_eps);
      CHECK(p.tensors.at("w").data[i] == doctest::Approx(ref[i]).epsilon(1e-12));
    }
  }
  CHECK(st.t == 3);
}

TEST_CASE("adam first step moves by about lr") {
  TrainConfig cfg;
  cfg.lr = 0.002;
  ModelParams<double> p;
  p.tensors["w"] = T::from({1}, {5.0});
  AdamState<double> st;
  std::map<std::string, T> grads;
  grads.emplace("w", T::from({1}, {0.73}));
  adam_step(p, grads, st, cfg);
  // after bias correction the first update is lr * g / (|g| + eps)
  CHECK(std::abs(p.tensors.at("w").data[0] - (5.0 - cfg.lr)) < 1e-6);
}

TEST_CASE("gradient penalty: autodiff parameter gradient matches FD") {
  auto arch = tiny_arch();
  auto params = init_params<double>(arch, 21);
  Rng rng(22);
  T xhat({2, 1, 16, 16, 16});
  for (std::int64_t i = 0; i < xhat.numel(); ++i)
    xhat.data[i] = rng.uniform_symmetric(1.0);
  const std::vector<int> labels = {0, 1};

  auto gp_value = [&](ModelParams<double>& ps) {
    Graph<double> g;
    std::map<std::string, int> ids;
    int gp = gradient_penalty(g, ps, arch, xhat, labels, ids);
    return g.value(gp).data[0];
  };

  Graph<double> g;
  std::map<std::string, int> ids;
  int gp = gradient_penalty(g, params, arch, xhat, labels, ids);
  CHECK(std::isfinite(g.value(gp).data[0]));
  CHECK(g.value(gp).data[0] >= 0.0);
  auto grads = g.backward(gp);

  const double h = 1e-5;
  for (const std::string name : {"crit.fc2.w", "crit.enc0.conv.w"}) {
    const int id = ids.at(name);
    REQUIRE(grads.count(id) == 1);
    for (std::int64_t e : {std::int64_t(0), std::int64_t(3)}) {
      const double ad = g.value(grads.at(id)).data[e];
      auto pp = params;
      auto pm = params;
      pp.tensors.at(name).data[e] += h;
      pm.tensors.at(name).data[e] -= h;
      const double fd = (gp_value(pp) - gp_value(pm)) / (2 * h);
      const double denom = std::max(1e-7, std::abs(ad) + std::abs(fd));
      CHECK_MESSAGE(std::abs(ad - fd) / denom < 1e-3, name, "[", e,
                    "]: ad=", ad, " fd=", fd);
    }
  }
}

TEST_CASE("schedule: critic every batch, generator every fifth") {
  auto corpus = tiny_corpus(16, 5);  // 2 objects x 5 = 10 pairs
  Trainer<double> tr(tiny_arch(), tiny_config());
  for (int b = 0; b < 10; ++b) {
    std::vector<const SamplePair*> batch = {&corpus[b % corpus.size()]};
    auto s = tr.step(batch);
    CHECK(s.finite);
    const bool expect_gen = (b + 1) % 5 == 0;
    CHECK(s.gen_stepped == expect_gen);
  }
  CHECK(tr.critic_steps() == 10);
  CHECK(tr.gen_steps() == 2);
  CHECK(tr.batches_seen() == 10);
}

TEST_CASE("epoch runs and reports finite stats") {
  auto corpus = tiny_corpus(16, 3);  // 6 pairs, batch 2 -> 3 batches
  auto cfg = tiny_config();
  cfg.gen_every = 2;
  Trainer<double> tr(tiny_arch(), cfg);
  auto s = tr.run_epoch(corpus);
  CHECK(s.finite);
  CHECK(tr.epoch() == 1);
  CHECK(tr.critic_steps() == 3);
  CHECK(tr.gen_steps() == 1);
  CHECK(std::isfinite(s.critic_loss));
  CHECK(std::isfinite(s.gp));
  CHECK(s.gp >= 0.0);
}

TEST_CASE("training is bitwise deterministic in the seed") {
  auto corpus = tiny_corpus(16, 2);
  auto cfg = tiny_config();
  cfg.gen_every = 2;
  Trainer<double> a(tiny_arch(), cfg), b(tiny_arch(), cfg);
  a.run_epoch(corpus);
  b.run_epoch(corpus);
  for (const auto& [k, v] : a.params().tensors) {
    INFO("tensor ", k);
    CHECK((v.data == b.params().tensors.at(k).data).all());
  }
  for (const auto& [k, v] : a.params().stats)
    CHECK((v.data == b.params().stats.at(k).data).all());
}

TEST_CASE("critic updates only critic parameters and vice versa") {
  auto corpus = tiny_corpus(16, 2);
  Trainer<double> tr(tiny_arch(), tiny_config());
  auto before = tr.params().tensors;
  std::vector<const SamplePair*> batch = {&corpus[0], &corpus[1]};
  tr.step(batch);  // first step: critic only (gen_every = 5)
  int crit_changed = 0, gen_changed = 0;
  for (const auto& [k, v] : tr.params().tensors) {
    const bool changed = (v.data != before.at(k).data).any();
    if (k.rfind("crit.", 0) == 0 && changed) ++crit_changed;
    if (k.rfind("gen.", 0) == 0 && changed) ++gen_changed;
  }
  CHECK(crit_changed > 0);
  CHECK(gen_changed == 0);
}

TEST_CASE("pure completion steps fit a single pair") {
  auto corpus = tiny_corpus(16, 1);
  auto cfg = tiny_config();
  cfg.lr = 2e-3;
  Trainer<double> tr(tiny_arch(), cfg);
  std::vector<const SamplePair*> batch = {&corpus[0]};
  const double first = tr.completion_step(batch);
  double last = first;
  for (int i = 0; i < 30; ++i) last = tr.completion_step(batch);
  CHECK(last < first);
  CHECK(std::isfinite(last));
}

// SPDX-License-Identifier: Apache-2.0
#pragma once

// Adversarial completion training.  The critic minimizes
//   mean D(fake) - mean D(real) + lambda * mean (|grad_xhat D(xhat)|_2 - 1)^2
// with xhat drawn on the line between real and generated samples; the
// generator minimizes sign * mean D(fake) + k * mean |fake - real|.  The
// critic runs every batch, the generator every gen_every batches.

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "organ/fracture.hpp"
#include "organ/graph.hpp"
#include "organ/network.hpp"
#include "organ/rng.hpp"
#include "organ/tensor.hpp"
#include "organ/voxel.hpp"

namespace organ {

struct TrainConfig {
  int epochs = 400;
  int batch_size = 64;
  double lr = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.9;
  double adam_eps = 1e-8;
  double gp_lambda = 10.0;
  double completion_k = 100.0;
  int gen_every = 5;   // one generator step per this many batches
  int gen_sign = -1;   // sign on the critic score inside the generator loss
  std::uint64_t seed = 1;
  int checkpoint_keep = 3;

  void validate() const {
    if (epochs < 1) throw ConfigError("epochs must be positive");
    if (batch_size < 1) throw ConfigError("batch_size must be positive");
    if (lr <= 0) throw ConfigError("lr must be positive");
    if (beta1 < 0 || beta1 >= 1 || beta2 < 0 || beta2 >= 1)
      throw ConfigError("adam betas must lie in [0,1)");
    if (adam_eps <= 0) throw ConfigError("adam_eps must be positive");
    if (gp_lambda < 0) throw ConfigError("gp_lambda must be non-negative");
    if (completion_k < 0) throw ConfigError("completion_k must be non-negative");
    if (gen_every < 1) throw ConfigError("gen_every must be positive");
    if (gen_sign != 1 && gen_sign != -1)
      throw ConfigError("gen_sign must be +1 or -1");
    if (checkpoint_keep < 1) throw ConfigError("checkpoint_keep must be positive");
  }
};

// ---- batch assembly ----

template <typename Scalar>
Tensor<Scalar> grids_to_batch(const std::vector<const VoxelGrid*>& grids) {
  if (grids.empty()) throw ShapeError("empty batch");
  const int dim = grids[0]->dim;
  Tensor<Scalar> t({static_cast<int>(grids.size()), 1, dim, dim, dim});
  const std::int64_t vol = std::int64_t(dim) * dim * dim;
  for (std::size_t i = 0; i < grids.size(); ++i) {
    if (grids[i]->dim != dim) throw ShapeError("mixed grid sizes in batch");
    for (std::int64_t j = 0; j < vol; ++j)
      t.data[i * vol + j] = grids[i]->occupancy[j] ? Scalar(1) : Scalar(-1);
  }
  return t;
}

// Per-sample blend between real and fake, epsilon uniform in [0,1].
template <typename Scalar>
Tensor<Scalar> interpolate(const Tensor<Scalar>& real,
                           const Tensor<Scalar>& fake, Rng& rng) {
  if (real.shape != fake.shape)
    throw ShapeError("interpolate shape mismatch");
  Tensor<Scalar> out(real.shape);
  const int n = real.shape[0];
  const std::int64_t per = real.numel() / n;
  for (int i = 0; i < n; ++i) {
    const Scalar eps = static_cast<Scalar>(rng.uniform_real());
    out.data.segment(i * per, per) =
        real.data.segment(i * per, per) * eps +
        fake.data.segment(i * per, per) * (Scalar(1) - eps);
  }
  return out;
}

// ---- loss builders ----

template <typename Scalar>
int completion_loss(Graph<Scalar>& g, int fake, int real) {
  return g.mean_all(g.abs_(g.sub(fake, real)));
}

// Mean squared distance of per-sample gradient norms from 1.  The critic is
// mounted (or re-mounted via `ids`) trainable so the penalty's own parameter
// gradients flow in the enclosing backward pass.
template <typename Scalar>
int gradient_penalty(Graph<Scalar>& g, ModelParams<Scalar>& params,
                     const ArchConfig& arch, const Tensor<Scalar>& xhat_value,
                     const std::vector<int>& labels,
                     std::map<std::string, int>& ids) {
  int xhat = g.input(xhat_value, true);
  auto r = critic_forward(g, params, arch, xhat, labels, true, &ids);
  ids = r.param_ids;
  auto grads = g.backward(g.sum_all(r.out));
  auto it = grads.find(xhat);
  int gx = it != grads.end()
               ? it->second
               : g.constant(Tensor<Scalar>::zeros(xhat_value.shape));
  int per_sample_sq = g.reduce_spatial(g.mul(gx, gx));  // (N,1)
  int norm = g.sqrt_(per_sample_sq);
  int diff = g.shift(norm, -1.0);
  return g.mean_all(g.mul(diff, diff));
}

// ---- Adam ----

template <typename Scalar>
struct AdamState {
  std::map<std::string, Tensor<Scalar>> m, v;
  std::int64_t t = 0;
};

template <typename Scalar>
void adam_step(ModelParams<Scalar>& params,
               const std::map<std::string, Tensor<Scalar>>& grads,
               AdamState<Scalar>& st, const TrainConfig& cfg) {
  st.t += 1;
  const double c1 = 1.0 - std::pow(cfg.beta1, double(st.t));
  const double c2 = 1.0 - std::pow(cfg.beta2, double(st.t));
  for (const auto& [name, grad] : grads) {
    auto& p = params.tensors.at(name);
    auto mi = st.m.find(name);
    if (mi == st.m.end()) {
      st.m.emplace(name, Tensor<Scalar>::zeros(p.shape));
      st.v.emplace(name, Tensor<Scalar>::zeros(p.shape));
    }
    auto& m = st.m.at(name);
    auto& v = st.v.at(name);
    m.data = m.data * static_cast<Scalar>(cfg.beta1) +
             grad.data * static_cast<Scalar>(1.0 - cfg.beta1);
    v.data = v.data * static_cast<Scalar>(cfg.beta2) +
             grad.data.square() * static_cast<Scalar>(1.0 - cfg.beta2);
    p.data -= static_cast<Scalar>(cfg.lr) * (m.data / static_cast<Scalar>(c1)) /
              ((v.data / static_cast<Scalar>(c2)).sqrt() +
               static_cast<Scalar>(cfg.adam_eps));
  }
}

// ---- trainer ----

struct StepStats {
  double critic_loss = 0;
  double wasserstein = 0;  // mean D(real) - mean D(fake)
  double gp = 0;
  double gen_loss = 0;
  double completion = 0;
  bool gen_stepped = false;
  bool finite = true;
};

template <typename Scalar>
class Trainer {
 public:
  Trainer(const ArchConfig& arch, const TrainConfig& cfg)
      : arch_(arch),
        cfg_(cfg),
        params_(init_params<Scalar>(arch, cfg.seed)),
        rng_(Rng::child(cfg.seed, 0x747261696e)) {
    arch_.validate();
    cfg_.validate();
  }

  // One critic update on the batch; a generator update too when the
  // schedule says so.
  StepStats step(const std::vector<const SamplePair*>& batch) {
    StepStats s = critic_step(batch);
    ++batches_seen_;
    if (batches_seen_ % cfg_.gen_every == 0) {
      const StepStats gs = generator_step(batch);
      s.gen_loss = gs.gen_loss;
      s.completion = gs.completion;
      s.gen_stepped = true;
      s.finite = s.finite && gs.finite;
    }
    return s;
  }

  // Shuffles, batches, and averages the per-step stats.
  StepStats run_epoch(const std::vector<SamplePair>& corpus) {
    if (corpus.empty()) throw ConfigError("empty training corpus");
    std::vector<std::size_t> order(corpus.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t i = order.size(); i > 1; --i) {
      const std::size_t j =
          static_cast<std::size_t>(rng_.uniform_int(0, std::int64_t(i) - 1));
      std::swap(order[i - 1], order[j]);
    }
    StepStats avg;
    int steps = 0, gen_steps = 0;
    for (std::size_t at = 0; at < order.size(); at += cfg_.batch_size) {
      std::vector<const SamplePair*> batch;
      for (std::size_t i = at;
           i < std::min(order.size(), at + cfg_.batch_size); ++i)
        batch.push_back(&corpus[order[i]]);
      const StepStats s = step(batch);
      avg.critic_loss += s.critic_loss;
      avg.wasserstein += s.wasserstein;
      avg.gp += s.gp;
      avg.finite = avg.finite && s.finite;
      if (s.gen_stepped) {
        avg.gen_loss += s.gen_loss;
        avg.completion += s.completion;
        ++gen_steps;
      }
      ++steps;
    }
    avg.critic_loss /= steps;
    avg.wasserstein /= steps;
    avg.gp /= steps;
    if (gen_steps) {
      avg.gen_loss /= gen_steps;
      avg.completion /= gen_steps;
      avg.gen_stepped = true;
    }
    ++epoch_;
    return avg;
  }

  // A generator-only pass, used by the fit tests: no adversarial term.
  double completion_step(const std::vector<const SamplePair*>& batch) {
    Graph<Scalar> g;
    auto frac = collect(batch, /*fractured=*/true);
    auto comp = collect(batch, /*fractured=*/false);
    int xi = g.input(grids_to_batch<Scalar>(frac), false);
    int ri = g.constant(grids_to_batch<Scalar>(comp));
    auto r = generator_forward(g, params_, arch_, xi, labels_of(batch), true,
                               true);
    int loss = completion_loss(g, r.out, ri);
    auto grads = g.backward(loss);
    apply(grads, g, r.param_ids, gen_adam_);
    ++gen_steps_;
    return g.value(loss).data[0];
  }

  ModelParams<Scalar>& params() { return params_; }
  const ModelParams<Scalar>& params() const { return params_; }
  const ArchConfig& arch() const { return arch_; }
  const TrainConfig& config() const { return cfg_; }
  AdamState<Scalar>& gen_adam() { return gen_adam_; }
  AdamState<Scalar>& critic_adam() { return critic_adam_; }
  Rng& rng() { return rng_; }
  int epoch() const { return epoch_; }
  std::int64_t batches_seen() const { return batches_seen_; }
  std::int64_t critic_steps() const { return critic_steps_; }
  std::int64_t gen_steps() const { return gen_steps_; }
  void restore_counters(int epoch, std::int64_t batches, std::int64_t crit,
                        std::int64_t gen) {
    epoch_ = epoch;
    batches_seen_ = batches;
    critic_steps_ = crit;
    gen_steps_ = gen;
  }

 private:
  ArchConfig arch_;
  TrainConfig cfg_;
  ModelParams<Scalar> params_;
  AdamState<Scalar> gen_adam_, critic_adam_;
  Rng rng_;
  int epoch_ = 0;
  std::int64_t batches_seen_ = 0;
  std::int64_t critic_steps_ = 0;
  std::int64_t gen_steps_ = 0;

  static std::vector<const VoxelGrid*> collect(
      const std::vector<const SamplePair*>& batch, bool fractured) {
    std::vector<const VoxelGrid*> out;
    out.reserve(batch.size());
    for (const auto* p : batch)
      out.push_back(fractured ? &p->fractured : &p->complete);
    return out;
  }

  static std::vector<int> labels_of(const std::vector<const SamplePair*>& b) {
    std::vector<int> out;
    out.reserve(b.size());
    for (const auto* p : b) out.push_back(p->label);
    return out;
  }

  void apply(const std::unordered_map<int, int>& grads, Graph<Scalar>& g,
             const std::map<std::string, int>& ids, AdamState<Scalar>& adam) {
    std::map<std::string, Tensor<Scalar>> named;
    for (const auto& [name, id] : ids) {
      auto it = grads.find(id);
      if (it != grads.end()) named.emplace(name, g.value(it->second));
    }
    adam_step(params_, named, adam, cfg_);
  }

  StepStats critic_step(const std::vector<const SamplePair*>& batch) {
    Graph<Scalar> g;
    const auto labels = labels_of(batch);
    auto frac_t = grids_to_batch<Scalar>(collect(batch, true));
    auto real_t = grids_to_batch<Scalar>(collect(batch, false));

    // fakes come from a frozen generator; its parameters are mounted
    // without gradients, so nothing leaks back into it
    int xi = g.input(frac_t, false);
    auto gen = generator_forward(g, params_, arch_, xi, labels, true, false);
    const Tensor<Scalar> fake_t = g.value(gen.out);

    std::map<std::string, int> crit_ids;
    int ri = g.input(real_t, false);
    auto d_real = critic_forward(g, params_, arch_, ri, labels, true,
                                 &crit_ids);
    crit_ids = d_real.param_ids;
    auto d_fake =
        critic_forward(g, params_, arch_, gen.out, labels, true, &crit_ids);
    crit_ids = d_fake.param_ids;

    const Tensor<Scalar> xhat = interpolate(real_t, fake_t, rng_);
    int gp = gradient_penalty(g, params_, arch_, xhat, labels, crit_ids);

    int w_gap = g.sub(g.mean_all(d_fake.out), g.mean_all(d_real.out));
    int loss = g.add(w_gap, g.scale(gp, cfg_.gp_lambda));

    auto grads = g.backward(loss);
    apply(grads, g, crit_ids, critic_adam_);
    ++critic_steps_;

    StepStats s;
    s.critic_loss = double(g.value(loss).data[0]);
    s.wasserstein = -double(g.value(w_gap).data[0]);
    s.gp = double(g.value(gp).data[0]);
    s.finite = std::isfinite(s.critic_loss);
    return s;
  }

  StepStats generator_step(const std::vector<const SamplePair*>& batch) {
    Graph<Scalar> g;
    const auto labels = labels_of(batch);
    int xi = g.input(grids_to_batch<Scalar>(collect(batch, true)), false);
    int ri = g.constant(grids_to_batch<Scalar>(collect(batch, false)));

    auto gen = generator_forward(g, params_, arch_, xi, labels, true, true);
    auto d_fake = critic_forward(g, params_, arch_, gen.out, labels, false);
    int comp = completion_loss(g, gen.out, ri);
    int loss = g.add(g.scale(g.mean_all(d_fake.out), double(cfg_.gen_sign)),
                     g.scale(comp, cfg_.completion_k));

    auto grads = g.backward(loss);
    apply(grads, g, gen.param_ids, gen_adam_);
    ++gen_steps_;

    StepStats s;
    s.gen_loss = double(g.value(loss).data[0]);
    s.completion = double(g.value(comp).data[0]);
    s.gen_stepped = true;
    s.finite = std::isfinite(s.gen_loss);
    return s;
  }
};

}  // namespace organ

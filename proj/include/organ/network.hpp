// SPDX-License-Identifier: Apache-2.0
#pragma once

// Conditional encoder-decoder generator and critic.  Layers are composed
// from graph primitives so everything stays differentiable, including the
// critic's gradient wrt its input (needed by the gradient penalty).

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "organ/graph.hpp"
#include "organ/rng.hpp"
#include "organ/tensor.hpp"

namespace organ {

struct ArchConfig {
  int dim = 32;         // cubic input side
  int in_channels = 1;
  std::vector<int> enc_channels = {32, 64, 128, 256};
  std::vector<int> dec_channels = {128, 64, 32};  // final layer emits 1 chan
  int n_classes = 5;
  int label_embed = 64;
  int label_channels = 8;  // label block concatenated at the bottleneck
  int se_ratio = 4;
  int critic_dense = 512;
  double leaky_slope = 0.2;
  int kernel = 4;
  int stride = 2;
  int pad = 1;
  bool use_skips = true;
  bool use_se = true;

  int stages() const { return static_cast<int>(enc_channels.size()); }

  // Side length after `stage` strided convolutions.
  int side_at(int stage) const {
    int s = dim;
    for (int i = 0; i < stage; ++i)
      s = (s + 2 * pad - kernel) / stride + 1;
    return s;
  }

  int bottleneck_side() const { return side_at(stages()); }

  void validate() const {
    if (dim < 4) throw ConfigError("dim must be at least 4");
    if (in_channels < 1) throw ConfigError("in_channels must be positive");
    if (enc_channels.empty()) throw ConfigError("encoder has no stages");
    if (dec_channels.size() + 1 != enc_channels.size())
      throw ConfigError(
          "decoder must have one fewer listed stage than the encoder (the "
          "final layer always emits one channel)");
    for (int c : enc_channels)
      if (c < 1) throw ConfigError("encoder channels must be positive");
    for (int c : dec_channels)
      if (c < 1) throw ConfigError("decoder channels must be positive");
    if (n_classes < 1) throw ConfigError("n_classes must be positive");
    if (label_embed < 1 || label_channels < 1)
      throw ConfigError("label embedding sizes must be positive");
    if (se_ratio < 1) throw ConfigError("se_ratio must be positive");
    if (critic_dense < 1) throw ConfigError("critic_dense must be positive");
    if (kernel < 1 || stride < 1 || pad < 0)
      throw ConfigError("bad convolution geometry");
    int s = dim;
    for (int i = 0; i < stages(); ++i) {
      const int span = s + 2 * pad - kernel;
      if (span < 0 || span % stride != 0 || span / stride + 1 < 1)
        throw ConfigError("dim " + std::to_string(dim) +
                          " does not tile through stage " + std::to_string(i));
      const int next = span / stride + 1;
      // decoder must invert each stage exactly
      if ((next - 1) * stride - 2 * pad + kernel != s)
        throw ConfigError("stage " + std::to_string(i) +
                          " is not invertible by the transposed convolution");
      s = next;
    }
  }
};

template <typename Scalar>
struct ModelParams {
  std::map<std::string, Tensor<Scalar>> tensors;  // trainable
  std::map<std::string, Tensor<Scalar>> stats;    // BN running stats

  std::int64_t count() const {
    std::int64_t n = 0;
    for (const auto& [k, v] : tensors) n += v.numel();
    return n;
  }
};

namespace detail {

template <typename Scalar>
Tensor<Scalar> uniform_init(std::vector<int> shape, std::int64_t fan_in,
                            Rng& rng) {
  Tensor<Scalar> t(std::move(shape));
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (std::int64_t i = 0; i < t.numel(); ++i)
    t.data[i] = static_cast<Scalar>(rng.uniform_symmetric(bound));
  return t;
}

}  // namespace detail

// Deterministic parameter construction; tensor draw order is fixed by the
// architecture, so one seed always produces identical networks.
template <typename Scalar>
ModelParams<Scalar> init_params(const ArchConfig& a, std::uint64_t seed) {
  a.validate();
  ModelParams<Scalar> p;
  Rng rng = Rng::child(seed, 0x6e657470);  // distinct stream per purpose

  auto conv = [&](const std::string& name, int co, int ci, int k) {
    p.tensors[name + ".w"] = detail::uniform_init<Scalar>(
        {co, ci, k, k, k}, std::int64_t(ci) * k * k * k, rng);
    p.tensors[name + ".b"] = Tensor<Scalar>::zeros({co});
  };
  auto deconv = [&](const std::string& name, int ci, int co, int k) {
    p.tensors[name + ".w"] = detail::uniform_init<Scalar>(
        {ci, co, k, k, k}, std::int64_t(ci) * k * k * k, rng);
    p.tensors[name + ".b"] = Tensor<Scalar>::zeros({co});
  };
  auto dense = [&](const std::string& name, int fi, int fo) {
    p.tensors[name + ".w"] = detail::uniform_init<Scalar>({fi, fo}, fi, rng);
    p.tensors[name + ".b"] = Tensor<Scalar>::zeros({fo});
  };
  auto bn = [&](const std::string& name, int c) {
    p.tensors[name + ".gamma"] = Tensor<Scalar>::full({c}, Scalar(1));
    p.tensors[name + ".beta"] = Tensor<Scalar>::zeros({c});
    p.stats[name + ".mean"] = Tensor<Scalar>::zeros({c});
    p.stats[name + ".var"] = Tensor<Scalar>::full({c}, Scalar(1));
  };
  auto se = [&](const std::string& name, int c) {
    if (!a.use_se) return;
    const int hidden = std::max(1, c / a.se_ratio);
    dense(name + ".fc1", c, hidden);
    dense(name + ".fc2", hidden, c);
    // Bias the gates open (sigmoid(2) ~ 0.88) so a fresh block starts close
    // to an identity and excitation is learned rather than imposed.
    p.tensors[name + ".fc2.b"] = Tensor<Scalar>::full({c}, Scalar(2));
  };

  // generator encoder
  int ci = a.in_channels;
  for (int i = 0; i < a.stages(); ++i) {
    const std::string s = "gen.enc" + std::to_string(i);
    conv(s + ".conv", a.enc_channels[i], ci, a.kernel);
    bn(s + ".bn", a.enc_channels[i]);
    se(s + ".se", a.enc_channels[i]);
    ci = a.enc_channels[i];
  }

  // label pathway into the bottleneck
  const int bs = a.bottleneck_side();
  p.tensors["gen.label.embed"] = detail::uniform_init<Scalar>(
      {a.n_classes, a.label_embed}, a.n_classes, rng);
  dense("gen.label.fc", a.label_embed, a.label_channels * bs * bs * bs);

  // generator decoder; skip concatenation doubles the input channels
  int cur = a.enc_channels.back() + a.label_channels;
  for (std::size_t i = 0; i < a.dec_channels.size(); ++i) {
    const std::string s = "gen.dec" + std::to_string(i);
    deconv(s + ".conv", cur, a.dec_channels[i], a.kernel);
    bn(s + ".bn", a.dec_channels[i]);
    se(s + ".se", a.dec_channels[i]);
    cur = a.dec_channels[i];
    if (a.use_skips)
      cur += a.enc_channels[a.stages() - 2 - static_cast<int>(i)];
  }
  deconv("gen.out.conv", cur, 1, a.kernel);

  // critic
  ci = a.in_channels;
  for (int i = 0; i < a.stages(); ++i) {
    const std::string s = "crit.enc" + std::to_string(i);
    conv(s + ".conv", a.enc_channels[i], ci, a.kernel);
    se(s + ".se", a.enc_channels[i]);
    ci = a.enc_channels[i];
  }
  p.tensors["crit.label.embed"] = detail::uniform_init<Scalar>(
      {a.n_classes, a.label_embed}, a.n_classes, rng);
  const int flat = a.enc_channels.back() * bs * bs * bs;
  dense("crit.fc1", flat + a.label_embed, a.critic_dense);
  dense("crit.fc2", a.critic_dense, 1);
  return p;
}

template <typename Scalar>
struct ForwardResult {
  int out = -1;
  std::map<std::string, int> param_ids;  // graph input id per parameter
};

namespace detail {

// Lazily mounts named parameters into the graph, remembering the node ids
// so the training step can look up gradients afterwards.
template <typename Scalar>
struct NetCtx {
  Graph<Scalar>& g;
  ModelParams<Scalar>& params;
  const ArchConfig& arch;
  bool trainable;
  bool training;  // batch stats + running updates vs stored stats
  std::map<std::string, int> ids;

  int p(const std::string& name) {
    auto it = ids.find(name);
    if (it != ids.end()) return it->second;
    auto pt = params.tensors.find(name);
    if (pt == params.tensors.end())
      throw ConfigError("unknown parameter: " + name);
    const int id = g.input(pt->second, trainable);
    ids.emplace(name, id);
    return id;
  }

  int dense(int x, const std::string& name) {
    const int n = g.shape(x)[0];
    return g.add(g.matmul(x, p(name + ".w")),
                 g.broadcast_batch(p(name + ".b"), n));
  }

  int conv(int x, const std::string& name) {
    const int n = g.shape(x)[0];
    int y = g.conv3d(x, p(name + ".w"), arch.stride, arch.pad);
    const std::vector<int> s = g.shape(y);
    return g.add(y, g.broadcast_spatial(
                        g.broadcast_batch(p(name + ".b"), n), s[2], s[3],
                        s[4]));
  }

  int deconv(int x, const std::string& name) {
    const int n = g.shape(x)[0];
    int y = g.conv_transpose3d(x, p(name + ".w"), arch.stride, arch.pad);
    const std::vector<int> s = g.shape(y);
    return g.add(y, g.broadcast_spatial(
                        g.broadcast_batch(p(name + ".b"), n), s[2], s[3],
                        s[4]));
  }

  int batch_norm(int x, const std::string& name, double momentum = 0.99,
                 double eps = 1e-5) {
    const std::vector<int> s = g.shape(x);
    const int n = s[0];
    const double count = double(n) * s[2] * s[3] * s[4];
    int mean, var;
    if (training) {
      mean = g.scale(g.reduce_batch(g.reduce_spatial(x)), 1.0 / count);
      int centered = g.sub(
          x, g.broadcast_spatial(g.broadcast_batch(mean, n), s[2], s[3],
                                 s[4]));
      var = g.scale(
          g.reduce_batch(g.reduce_spatial(g.mul(centered, centered))),
          1.0 / count);
      auto& rm = params.stats.at(name + ".mean");
      auto& rv = params.stats.at(name + ".var");
      rm.data = rm.data * static_cast<Scalar>(momentum) +
                g.value(mean).data * static_cast<Scalar>(1.0 - momentum);
      rv.data = rv.data * static_cast<Scalar>(momentum) +
                g.value(var).data * static_cast<Scalar>(1.0 - momentum);
    } else {
      mean = g.constant(params.stats.at(name + ".mean"));
      var = g.constant(params.stats.at(name + ".var"));
    }
    int inv = g.div(
        g.expand_scalar(g.scalar(Scalar(1)), g.shape(var)),
        g.sqrt_(g.shift(var, eps)));
    int xn = g.mul(
        g.sub(x, g.broadcast_spatial(g.broadcast_batch(mean, n), s[2], s[3],
                                     s[4])),
        g.broadcast_spatial(g.broadcast_batch(inv, n), s[2], s[3], s[4]));
    int scaled = g.mul(
        xn, g.broadcast_spatial(g.broadcast_batch(p(name + ".gamma"), n),
                                s[2], s[3], s[4]));
    return g.add(scaled, g.broadcast_spatial(
                             g.broadcast_batch(p(name + ".beta"), n), s[2],
                             s[3], s[4]));
  }

  // Squeeze-excite: global average pool, two small dense layers, sigmoid
  // gate multiplied back onto every channel.
  int se(int x, const std::string& name) {
    if (!arch.use_se) return x;
    const std::vector<int> s = g.shape(x);
    const double spatial = double(s[2]) * s[3] * s[4];
    int pooled = g.scale(g.reduce_spatial(x), 1.0 / spatial);
    int h = g.relu(dense(pooled, name + ".fc1"));
    int gate = g.sigmoid(dense(h, name + ".fc2"));
    return g.mul(x, g.broadcast_spatial(gate, s[2], s[3], s[4]));
  }

  int one_hot(const std::vector<int>& labels) {
    Tensor<Scalar> t({static_cast<int>(labels.size()), arch.n_classes});
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] < 0 || labels[i] >= arch.n_classes)
        throw ConfigError("label " + std::to_string(labels[i]) +
                          " out of range for " +
                          std::to_string(arch.n_classes) + " classes");
      t.data[i * arch.n_classes + labels[i]] = Scalar(1);
    }
    return g.constant(std::move(t));
  }
};

}  // namespace detail

// x: (N, in_channels, dim, dim, dim) node.  Returns tanh output of the same
// spatial shape with one channel.  When `reuse` is given, parameters already
// mounted in the graph are shared instead of mounted again, so gradients
// from several forward passes accumulate on one node per parameter.
template <typename Scalar>
ForwardResult<Scalar> generator_forward(Graph<Scalar>& g,
                                        ModelParams<Scalar>& params,
                                        const ArchConfig& a, int x,
                                        const std::vector<int>& labels,
                                        bool training, bool trainable,
                                        const std::map<std::string, int>*
                                            reuse = nullptr) {
  detail::NetCtx<Scalar> ctx{g, params, a, trainable, training, {}};
  if (reuse) ctx.ids = *reuse;
  const int n = g.shape(x)[0];
  if (static_cast<int>(labels.size()) != n)
    throw ShapeError("one label per sample expected");

  std::vector<int> enc_out;
  int cur = x;
  for (int i = 0; i < a.stages(); ++i) {
    const std::string s = "gen.enc" + std::to_string(i);
    cur = ctx.conv(cur, s + ".conv");
    cur = ctx.batch_norm(cur, s + ".bn");
    cur = g.relu(cur);
    cur = ctx.se(cur, s + ".se");
    enc_out.push_back(cur);
  }

  // label block joins the bottleneck
  const int bs = a.bottleneck_side();
  int emb = g.matmul(ctx.one_hot(labels), ctx.p("gen.label.embed"));
  int lab = ctx.dense(emb, "gen.label.fc");
  lab = g.reshape(lab, {n, a.label_channels, bs, bs, bs});
  cur = g.concat_c({cur, lab});

  for (std::size_t i = 0; i < a.dec_channels.size(); ++i) {
    const std::string s = "gen.dec" + std::to_string(i);
    cur = ctx.deconv(cur, s + ".conv");
    cur = ctx.batch_norm(cur, s + ".bn");
    cur = g.relu(cur);
    cur = ctx.se(cur, s + ".se");
    if (a.use_skips)
      cur = g.concat_c(
          {cur, enc_out[a.stages() - 2 - static_cast<int>(i)]});
  }
  cur = ctx.deconv(cur, "gen.out.conv");
  cur = g.tanh_(cur);

  ForwardResult<Scalar> r;
  r.out = cur;
  r.param_ids = std::move(ctx.ids);
  return r;
}

// Scalar score per sample: (N, 1).
template <typename Scalar>
ForwardResult<Scalar> critic_forward(Graph<Scalar>& g,
                                     ModelParams<Scalar>& params,
                                     const ArchConfig& a, int x,
                                     const std::vector<int>& labels,
                                     bool trainable,
                                     const std::map<std::string, int>* reuse =
                                         nullptr) {
  detail::NetCtx<Scalar> ctx{g, params, a, trainable, /*training=*/false, {}};
  if (reuse) ctx.ids = *reuse;
  const int n = g.shape(x)[0];
  if (static_cast<int>(labels.size()) != n)
    throw ShapeError("one label per sample expected");

  int cur = x;
  for (int i = 0; i < a.stages(); ++i) {
    const std::string s = "crit.enc" + std::to_string(i);
    cur = ctx.conv(cur, s + ".conv");
    cur = g.leaky_relu(cur, a.leaky_slope);
    cur = ctx.se(cur, s + ".se");
  }
  const int bs = a.bottleneck_side();
  const int flat = a.enc_channels.back() * bs * bs * bs;
  cur = g.reshape(cur, {n, flat});
  int emb = g.matmul(ctx.one_hot(labels), ctx.p("crit.label.embed"));
  cur = g.concat_c({cur, emb});
  cur = g.leaky_relu(ctx.dense(cur, "crit.fc1"), a.leaky_slope);
  cur = ctx.dense(cur, "crit.fc2");

  ForwardResult<Scalar> r;
  r.out = cur;
  r.param_ids = std::move(ctx.ids);
  return r;
}

}  // namespace organ

// SPDX-License-Identifier: Apache-2.0
#pragma once

// Checkpoint container: a JSON meta header plus named float32 blocks, in a
// deterministic binary layout (sorted block names, little-endian payload).
// Writing the same state twice produces byte-identical files.

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "organ/training.hpp"

namespace organ {

struct Checkpoint {
  std::string meta_json;
  // name -> (shape, row-major float32 data)
  std::map<std::string, std::pair<std::vector<int>, std::vector<float>>>
      blocks;
};

void write_checkpoint(const std::string& path, const Checkpoint& ck);
Checkpoint read_checkpoint(const std::string& path);

// Checkpoints a trainer drops into a directory, newest last.
std::vector<std::string> list_checkpoints(const std::string& dir);
void prune_checkpoints(const std::string& dir, int keep);
std::string checkpoint_name(int epoch);

// Meta strings assembled / consumed by the templated bridge below.
std::string trainer_meta_json(const std::string& arch_json,
                              const std::string& train_json, int epoch,
                              std::int64_t batches, std::int64_t crit_steps,
                              std::int64_t gen_steps, std::uint64_t rng_state,
                              std::int64_t adam_gen_t,
                              std::int64_t adam_crit_t);
struct TrainerMeta {
  std::string arch_json;
  std::string train_json;
  int epoch = 0;
  std::int64_t batches = 0;
  std::int64_t crit_steps = 0;
  std::int64_t gen_steps = 0;
  std::uint64_t rng_state = 0;
  std::int64_t adam_gen_t = 0;
  std::int64_t adam_crit_t = 0;
};
TrainerMeta parse_trainer_meta(const std::string& meta_json);

namespace detail {

template <typename Scalar>
std::pair<std::vector<int>, std::vector<float>> to_block(
    const Tensor<Scalar>& t) {
  std::vector<float> data(static_cast<std::size_t>(t.numel()));
  for (std::int64_t i = 0; i < t.numel(); ++i)
    data[static_cast<std::size_t>(i)] = static_cast<float>(t.data[i]);
  return {t.shape, std::move(data)};
}

template <typename Scalar>
Tensor<Scalar> from_block(
    const std::pair<std::vector<int>, std::vector<float>>& b) {
  Tensor<Scalar> t(b.first);
  for (std::size_t i = 0; i < b.second.size(); ++i)
    t.data[static_cast<std::int64_t>(i)] = static_cast<Scalar>(b.second[i]);
  return t;
}

template <typename Scalar>
void add_group(Checkpoint& ck, const std::string& prefix,
               const std::map<std::string, Tensor<Scalar>>& group) {
  for (const auto& [name, t] : group) ck.blocks[prefix + name] = to_block(t);
}

template <typename Scalar>
std::map<std::string, Tensor<Scalar>> take_group(const Checkpoint& ck,
                                                 const std::string& prefix) {
  std::map<std::string, Tensor<Scalar>> out;
  for (const auto& [name, b] : ck.blocks)
    if (name.rfind(prefix, 0) == 0)
      out.emplace(name.substr(prefix.size()), from_block<Scalar>(b));
  return out;
}

}  // namespace detail

// These two functions need config JSON, which lives in config_io; declare
// thin hooks here so the header stays self-contained for the template.
std::string arch_to_json(const ArchConfig& a);
ArchConfig arch_from_json(const std::string& text);
std::string train_to_json(const TrainConfig& c);
TrainConfig train_from_json(const std::string& text);

template <typename Scalar>
Checkpoint snapshot(const Trainer<Scalar>& tr) {
  Checkpoint ck;
  auto& t = const_cast<Trainer<Scalar>&>(tr);
  ck.meta_json = trainer_meta_json(
      arch_to_json(tr.arch()), train_to_json(tr.config()), tr.epoch(),
      tr.batches_seen(), tr.critic_steps(), tr.gen_steps(), t.rng().state(),
      t.gen_adam().t, t.critic_adam().t);
  detail::add_group(ck, "param/", tr.params().tensors);
  detail::add_group(ck, "stat/", tr.params().stats);
  detail::add_group(ck, "adam_gen/m/", t.gen_adam().m);
  detail::add_group(ck, "adam_gen/v/", t.gen_adam().v);
  detail::add_group(ck, "adam_crit/m/", t.critic_adam().m);
  detail::add_group(ck, "adam_crit/v/", t.critic_adam().v);
  return ck;
}

// Just the network, for inference commands that never construct a trainer.
template <typename Scalar>
std::pair<ArchConfig, ModelParams<Scalar>> load_model(const Checkpoint& ck) {
  const TrainerMeta meta = parse_trainer_meta(ck.meta_json);
  ArchConfig arch = arch_from_json(meta.arch_json);
  ModelParams<Scalar> p;
  p.tensors = detail::take_group<Scalar>(ck, "param/");
  p.stats = detail::take_group<Scalar>(ck, "stat/");
  if (p.tensors.empty()) throw IoError("checkpoint holds no parameters");
  return {std::move(arch), std::move(p)};
}

// Rebuild a trainer mid-run. `cfg_override` swaps the stored train config,
// for callers that extend the epoch target of a finished run; everything
// stateful (params, adam moments, rng, counters) still comes from the file.
template <typename Scalar>
Trainer<Scalar> restore(const Checkpoint& ck,
                        const TrainConfig* cfg_override = nullptr) {
  const TrainerMeta meta = parse_trainer_meta(ck.meta_json);
  Trainer<Scalar> tr(arch_from_json(meta.arch_json),
                     cfg_override ? *cfg_override
                                  : train_from_json(meta.train_json));
  tr.params().tensors = detail::take_group<Scalar>(ck, "param/");
  tr.params().stats = detail::take_group<Scalar>(ck, "stat/");
  tr.gen_adam().m = detail::take_group<Scalar>(ck, "adam_gen/m/");
  tr.gen_adam().v = detail::take_group<Scalar>(ck, "adam_gen/v/");
  tr.gen_adam().t = meta.adam_gen_t;
  tr.critic_adam().m = detail::take_group<Scalar>(ck, "adam_crit/m/");
  tr.critic_adam().v = detail::take_group<Scalar>(ck, "adam_crit/v/");
  tr.critic_adam().t = meta.adam_crit_t;
  tr.rng().set_state(meta.rng_state);
  tr.restore_counters(meta.epoch, meta.batches, meta.crit_steps,
                      meta.gen_steps);
  return tr;
}

}  // namespace organ

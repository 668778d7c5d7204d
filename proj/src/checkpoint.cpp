// SPDX-License-Identifier: Apache-2.0
#include "organ/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>

static_assert(std::endian::native == std::endian::little,
              "checkpoint payload assumes a little-endian host");

namespace organ {

namespace {

constexpr char kMagic[8] = {'O', 'R', 'G', 'A', 'N', 'C', 'K', '1'};
constexpr const char* kSuffix = ".organck";

template <typename T>
void put(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

template <typename T>
T take(std::ifstream& in, const std::string& path) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!in) throw IoError("truncated checkpoint: " + path);
  return v;
}

}  // namespace

void write_checkpoint(const std::string& path, const Checkpoint& ck) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint: " + path);
  out.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ck.meta_json.size()));
  out.write(ck.meta_json.data(),
            static_cast<std::streamsize>(ck.meta_json.size()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ck.blocks.size()));
  for (const auto& [name, block] : ck.blocks) {  // std::map: sorted names
    const auto& [shape, data] = block;
    put<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::uint8_t>(out, static_cast<std::uint8_t>(shape.size()));
    for (int d : shape) put<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    put<std::uint64_t>(out, data.size());
    out.write(reinterpret_cast<const char*>(data.data()),
              static_cast<std::streamsize>(data.size() * sizeof(float)));
  }
  if (!out) throw IoError("short write on checkpoint: " + path);
}

Checkpoint read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || !std::equal(magic, magic + 8, kMagic))
    throw IoError("not a checkpoint file: " + path);
  Checkpoint ck;
  const auto meta_len = take<std::uint32_t>(in, path);
  ck.meta_json.resize(meta_len);
  in.read(ck.meta_json.data(), meta_len);
  if (!in) throw IoError("truncated checkpoint: " + path);
  const auto n_blocks = take<std::uint32_t>(in, path);
  for (std::uint32_t b = 0; b < n_blocks; ++b) {
    const auto name_len = take<std::uint16_t>(in, path);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    if (!in) throw IoError("truncated checkpoint: " + path);
    const auto rank = take<std::uint8_t>(in, path);
    std::vector<int> shape(rank);
    std::int64_t numel = 1;
    for (auto& d : shape) {
      d = static_cast<int>(take<std::uint32_t>(in, path));
      numel *= d;
    }
    const auto count = take<std::uint64_t>(in, path);
    if (static_cast<std::int64_t>(count) != numel)
      throw IoError("checkpoint block \"" + name + "\" is inconsistent: " +
                    path);
    std::vector<float> data(count);
    in.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(count * sizeof(float)));
    if (!in) throw IoError("truncated checkpoint: " + path);
    ck.blocks.emplace(std::move(name),
                      std::make_pair(std::move(shape), std::move(data)));
  }
  return ck;
}

std::string checkpoint_name(int epoch) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "epoch_%06d%s", epoch, kSuffix);
  return buf;
}

std::vector<std::string> list_checkpoints(const std::string& dir) {
  namespace fs = std::filesystem;
  std::vector<std::string> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const auto name = e.path().filename().string();
    if (name.size() > std::strlen(kSuffix) &&
        name.rfind(kSuffix) == name.size() - std::strlen(kSuffix))
      out.push_back(e.path().string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

void prune_checkpoints(const std::string& dir, int keep) {
  auto all = list_checkpoints(dir);
  if (keep < 0) keep = 0;
  while (static_cast<int>(all.size()) > keep) {
    std::filesystem::remove(all.front());
    all.erase(all.begin());
  }
}

std::string trainer_meta_json(const std::string& arch_json,
                              const std::string& train_json, int epoch,
                              std::int64_t batches, std::int64_t crit_steps,
                              std::int64_t gen_steps, std::uint64_t rng_state,
                              std::int64_t adam_gen_t,
                              std::int64_t adam_crit_t) {
  nlohmann::json j;
  j["format"] = 1;
  j["arch"] = nlohmann::json::parse(arch_json);
  j["train"] = nlohmann::json::parse(train_json);
  j["epoch"] = epoch;
  j["batches"] = batches;
  j["crit_steps"] = crit_steps;
  j["gen_steps"] = gen_steps;
  j["rng_state"] = rng_state;
  j["adam_gen_t"] = adam_gen_t;
  j["adam_crit_t"] = adam_crit_t;
  return j.dump();
}

TrainerMeta parse_trainer_meta(const std::string& meta_json) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(meta_json);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("bad checkpoint meta: ") + e.what());
  }
  if (!j.is_object() || j.value("format", 0) != 1)
    throw IoError("unsupported checkpoint format");
  TrainerMeta m;
  try {
    m.arch_json = j.at("arch").dump();
    m.train_json = j.at("train").dump();
    m.epoch = j.at("epoch").get<int>();
    m.batches = j.at("batches").get<std::int64_t>();
    m.crit_steps = j.at("crit_steps").get<std::int64_t>();
    m.gen_steps = j.at("gen_steps").get<std::int64_t>();
    m.rng_state = j.at("rng_state").get<std::uint64_t>();
    m.adam_gen_t = j.at("adam_gen_t").get<std::int64_t>();
    m.adam_crit_t = j.at("adam_crit_t").get<std::int64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("bad checkpoint meta: ") + e.what());
  }
  return m;
}

}  // namespace organ

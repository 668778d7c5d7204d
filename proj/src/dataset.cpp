// SPDX-License-Identifier: Apache-2.0
#include "organ/dataset.hpp"

#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "organ/binvox.hpp"

namespace organ {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

json parse_line(const std::string& line, const std::string& path, int no) {
  try {
    json j = json::parse(line);
    if (!j.is_object()) throw ParseError("");
    return j;
  } catch (...) {
    throw ParseError(path + ":" + std::to_string(no) +
                     ": manifest lines must be JSON objects");
  }
}

template <typename Fn>
void each_line(const std::string& path, Fn&& fn) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest: " + path);
  std::string line;
  int no = 0;
  while (std::getline(in, line)) {
    ++no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    fn(parse_line(line, path, no), no);
  }
}

std::string resolve(const std::string& manifest_path,
                    const std::string& rel) {
  fs::path p(rel);
  if (p.is_absolute()) return rel;
  return (fs::path(manifest_path).parent_path() / p).string();
}

}  // namespace

std::vector<ObjectEntry> read_object_manifest(const std::string& path) {
  std::vector<ObjectEntry> out;
  each_line(path, [&](const json& j, int no) {
    ObjectEntry e;
    if (!j.contains("path") || !j.at("path").is_string())
      throw ParseError(path + ":" + std::to_string(no) +
                       ": missing \"path\"");
    e.path = j.at("path").get<std::string>();
    if (j.contains("label")) e.label = j.at("label").get<int>();
    if (j.contains("split")) e.split = j.at("split").get<std::string>();
    if (e.split != "train" && e.split != "test")
      throw ParseError(path + ":" + std::to_string(no) +
                       ": split must be \"train\" or \"test\"");
    if (e.label < 0)
      throw ParseError(path + ":" + std::to_string(no) +
                       ": labels must be non-negative");
    out.push_back(std::move(e));
  });
  return out;
}

void write_object_manifest(const std::string& path,
                           const std::vector<ObjectEntry>& entries) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write manifest: " + path);
  for (const auto& e : entries)
    out << json{{"path", e.path}, {"label", e.label}, {"split", e.split}}
               .dump()
        << "\n";
}

std::vector<PairEntry> read_pair_manifest(const std::string& path) {
  std::vector<PairEntry> out;
  each_line(path, [&](const json& j, int no) {
    PairEntry e;
    for (const char* key : {"fractured", "complete"})
      if (!j.contains(key) || !j.at(key).is_string())
        throw ParseError(path + ":" + std::to_string(no) + ": missing \"" +
                         key + "\"");
    e.fractured = j.at("fractured").get<std::string>();
    e.complete = j.at("complete").get<std::string>();
    if (j.contains("label")) e.label = j.at("label").get<int>();
    out.push_back(std::move(e));
  });
  return out;
}

void write_pair_manifest(const std::string& path,
                         const std::vector<PairEntry>& entries) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write manifest: " + path);
  for (const auto& e : entries)
    out << json{{"fractured", e.fractured},
                {"complete", e.complete},
                {"label", e.label}}
               .dump()
        << "\n";
}

std::vector<std::string> read_label_names(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open label names: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ParseError("label names: " + std::string(e.what()));
  }
  if (!j.is_array()) throw ParseError("label names must be a JSON array");
  std::vector<std::string> out;
  for (const auto& v : j) {
    if (!v.is_string()) throw ParseError("label names must be strings");
    out.push_back(v.get<std::string>());
  }
  return out;
}

void write_label_names(const std::string& path,
                       const std::vector<std::string>& names) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write label names: " + path);
  out << json(names).dump(2) << "\n";
}

ObjectSet load_objects(const std::string& manifest_path) {
  ObjectSet set;
  for (const auto& e : read_object_manifest(manifest_path)) {
    auto grid = read_binvox_file(resolve(manifest_path, e.path));
    if (set.dim == 0) set.dim = grid.dim;
    if (grid.dim != set.dim)
      throw ShapeError("manifest mixes grid sizes: " + e.path + " is " +
                       std::to_string(grid.dim) + ", expected " +
                       std::to_string(set.dim));
    set.grids.push_back(std::move(grid));
    set.labels.push_back(e.label);
    set.splits.push_back(e.split);
  }
  return set;
}

std::vector<SamplePair> load_pairs(const std::string& manifest_path) {
  std::vector<SamplePair> out;
  int dim = 0;
  for (const auto& e : read_pair_manifest(manifest_path)) {
    SamplePair p;
    p.fractured = read_binvox_file(resolve(manifest_path, e.fractured));
    p.complete = read_binvox_file(resolve(manifest_path, e.complete));
    if (p.fractured.dim != p.complete.dim)
      throw ShapeError("pair grids disagree in size: " + e.fractured);
    if (dim == 0) dim = p.fractured.dim;
    if (p.fractured.dim != dim)
      throw ShapeError("manifest mixes grid sizes: " + e.fractured);
    p.label = e.label;
    p.removed = missing_count(p.fractured, p.complete);
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace organ

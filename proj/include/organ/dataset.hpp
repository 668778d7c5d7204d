// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "organ/fracture.hpp"
#include "organ/voxel.hpp"

namespace organ {

// Manifests are JSON lines, one object per line.  Paths are resolved
// relative to the manifest's own directory.

struct ObjectEntry {
  std::string path;
  int label = 0;
  std::string split = "train";
};

struct PairEntry {
  std::string fractured;
  std::string complete;
  int label = 0;
};

std::vector<ObjectEntry> read_object_manifest(const std::string& path);
void write_object_manifest(const std::string& path,
                           const std::vector<ObjectEntry>& entries);

std::vector<PairEntry> read_pair_manifest(const std::string& path);
void write_pair_manifest(const std::string& path,
                         const std::vector<PairEntry>& entries);

// Optional sidecar: a JSON array of class names, index == label.
std::vector<std::string> read_label_names(const std::string& path);
void write_label_names(const std::string& path,
                       const std::vector<std::string>& names);

// Load the referenced binvox grids.  All grids must share one dimension.
struct ObjectSet {
  std::vector<VoxelGrid> grids;
  std::vector<int> labels;
  std::vector<std::string> splits;
  int dim = 0;
};
ObjectSet load_objects(const std::string& manifest_path);

std::vector<SamplePair> load_pairs(const std::string& manifest_path);

}  // namespace organ

// SPDX-License-Identifier: Apache-2.0
#include "organ/voxel.hpp"

#include <json.hpp>

namespace organ {

std::size_t missing_count(const VoxelGrid& fractured, const VoxelGrid& complete) {
  if (fractured.dim != complete.dim)
    throw ShapeError("missing_count: dimension mismatch");
  std::size_t n = 0;
  for (std::size_t i = 0; i < complete.occupancy.size(); ++i)
    n += (complete.occupancy[i] && !fractured.occupancy[i]) ? 1 : 0;
  return n;
}

std::string grid_to_json(const VoxelGrid& g) {
  nlohmann::json j;
  j["dim"] = g.dim;
  j["translate"] = g.translate;
  j["scale"] = g.scale;
  j["occupancy"] = g.occupancy;
  return j.dump();
}

}  // namespace organ

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <string_view>

#include "organ/voxel.hpp"

namespace organ {

// Binvox v1 container. Voxel order on the wire is y-fastest: the run-length
// payload enumerates index x*dim^2 + z*dim + y. Only cubic grids are
// accepted. Serialization emits maximal runs with counts in [1, 255], so
// serialize-parse-serialize is byte-identical.
VoxelGrid parse_binvox(std::string_view bytes);
std::string write_binvox(const VoxelGrid& grid);

VoxelGrid read_binvox_file(const std::string& path);
void write_binvox_file(const std::string& path, const VoxelGrid& grid);

}  // namespace organ

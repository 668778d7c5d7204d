// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>
#include <array>
#include <string>
#include <string_view>
#include <vector>

#include "organ/voxel.hpp"

namespace organ {

struct Mesh {
  std::vector<Eigen::Vector3d> vertices;
  std::vector<std::array<int, 3>> triangles;

  bool empty() const { return triangles.empty(); }
};

// Throws ParseError on malformed input or invalid triangle indices.
Mesh parse_off(std::string_view text);
Mesh parse_stl(std::string_view bytes);  // ASCII or binary, autodetected

// Dispatches on extension (.off, .stl) with content autodetection for STL.
Mesh load_mesh(const std::string& path);

}  // namespace organ

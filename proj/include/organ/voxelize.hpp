// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "organ/mesh.hpp"
#include "organ/voxel.hpp"

namespace organ {

// Conservative surface rasterization: every cell whose cube intersects a
// triangle is occupied. With fill_interior, cells unreachable from the grid
// boundary by 6-connected walks through empty cells are occupied as well
// (requires a watertight mesh to be meaningful; not verified).
//
// The mesh is uniformly scaled and centered so its bounding box fits the grid
// with a one-voxel margin on every side. translate/scale metadata follow the
// binvox convention: world = translate + scale * (grid coords / dim).
VoxelGrid voxelize_mesh(const Mesh& mesh, int dim, bool fill_interior);

}  // namespace organ

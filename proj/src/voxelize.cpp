// SPDX-License-Identifier: Apache-2.0
#include "organ/voxelize.hpp"

#include <Eigen/Geometry>
#include <algorithm>
#include <cmath>
#include <queue>

namespace organ {

namespace {

using Eigen::Vector3d;

// Triangle / axis-aligned unit cell overlap via the separating axis theorem
// (13 axes: 3 box normals, 1 face normal, 9 edge cross products). The cell is
// centered at `c` with half-extent h on each axis.
bool tri_box_overlap(const Vector3d& c, double h, const Vector3d& a0,
                     const Vector3d& a1, const Vector3d& a2) {
  const Vector3d v0 = a0 - c, v1 = a1 - c, v2 = a2 - c;
  const Vector3d e0 = v1 - v0, e1 = v2 - v1, e2 = v0 - v2;

  auto axis_separates = [&](const Vector3d& axis) {
    const double p0 = axis.dot(v0), p1 = axis.dot(v1), p2 = axis.dot(v2);
    const double r = h * (std::abs(axis.x()) + std::abs(axis.y()) + std::abs(axis.z()));
    return std::min({p0, p1, p2}) > r || std::max({p0, p1, p2}) < -r;
  };

  // box normals: plain AABB overlap
  for (int i = 0; i < 3; ++i) {
    const double lo = std::min({v0[i], v1[i], v2[i]});
    const double hi = std::max({v0[i], v1[i], v2[i]});
    if (lo > h || hi < -h) return false;
  }
  // 9 edge cross-product axes
  const Vector3d edges[3] = {e0, e1, e2};
  for (const auto& e : edges) {
    if (axis_separates(Vector3d(0, -e.z(), e.y()))) return false;
    if (axis_separates(Vector3d(e.z(), 0, -e.x()))) return false;
    if (axis_separates(Vector3d(-e.y(), e.x(), 0))) return false;
  }
  // face normal
  if (axis_separates(e0.cross(e1))) return false;
  return true;
}

}  // namespace

VoxelGrid voxelize_mesh(const Mesh& mesh, int dim, bool fill_interior) {
  if (mesh.empty()) throw ShapeError("voxelize_mesh: empty mesh");
  if (dim < 3) throw ShapeError("voxelize_mesh: dim must be at least 3");

  Vector3d lo = mesh.vertices.front(), hi = mesh.vertices.front();
  for (const auto& v : mesh.vertices) {
    lo = lo.cwiseMin(v);
    hi = hi.cwiseMax(v);
  }
  const Vector3d extent = hi - lo;
  const double max_extent = extent.maxCoeff();
  if (extent.minCoeff() <= 0.0)
    throw ShapeError("voxelize_mesh: degenerate bounding box (zero extent)");

  // Longest axis spans dim-2 cells; bbox center maps to the grid center.
  // The hair of inset keeps bbox-extremal faces off exact cell planes, so
  // the one-voxel margin survives axis-aligned geometry.
  const double inset = 1e-6;
  const double cells_per_unit = (static_cast<double>(dim - 2) - 2 * inset) / max_extent;
  const Vector3d bbox_center = 0.5 * (lo + hi);
  const Vector3d grid_center(dim / 2.0, dim / 2.0, dim / 2.0);
  auto to_grid = [&](const Vector3d& p) -> Vector3d {
    return (p - bbox_center) * cells_per_unit + grid_center;
  };

  VoxelGrid grid(dim);
  const double cell_world = 1.0 / cells_per_unit;
  const Vector3d world_origin = bbox_center - grid_center * cell_world;
  grid.translate = {world_origin.x(), world_origin.y(), world_origin.z()};
  grid.scale = dim * cell_world;

  for (const auto& t : mesh.triangles) {
    const Vector3d a = to_grid(mesh.vertices[static_cast<std::size_t>(t[0])]);
    const Vector3d b = to_grid(mesh.vertices[static_cast<std::size_t>(t[1])]);
    const Vector3d c = to_grid(mesh.vertices[static_cast<std::size_t>(t[2])]);
    Vector3d tlo = a.cwiseMin(b).cwiseMin(c);
    Vector3d thi = a.cwiseMax(b).cwiseMax(c);
    const int x0 = std::max(0, static_cast<int>(std::floor(tlo.x())));
    const int y0 = std::max(0, static_cast<int>(std::floor(tlo.y())));
    const int z0 = std::max(0, static_cast<int>(std::floor(tlo.z())));
    const int x1 = std::min(dim - 1, static_cast<int>(std::floor(thi.x())));
    const int y1 = std::min(dim - 1, static_cast<int>(std::floor(thi.y())));
    const int z1 = std::min(dim - 1, static_cast<int>(std::floor(thi.z())));
    for (int x = x0; x <= x1; ++x)
      for (int y = y0; y <= y1; ++y)
        for (int z = z0; z <= z1; ++z) {
          if (grid.at(x, y, z)) continue;
          const Vector3d center(x + 0.5, y + 0.5, z + 0.5);
          if (tri_box_overlap(center, 0.5, a, b, c)) grid.set(x, y, z, true);
        }
  }

  if (!fill_interior) return grid;

  // Flood the exterior from the boundary through empty cells, 6-connected;
  // everything not reached becomes solid.
  std::vector<std::uint8_t> outside(grid.size(), 0);
  std::queue<std::array<int, 3>> frontier;
  auto push_if_empty = [&](int x, int y, int z) {
    if (!grid.in_bounds(x, y, z)) return;
    const std::size_t i = grid.index(x, y, z);
    if (grid.occupancy[i] || outside[i]) return;
    outside[i] = 1;
    frontier.push({x, y, z});
  };
  for (int a = 0; a < dim; ++a)
    for (int b = 0; b < dim; ++b) {
      push_if_empty(0, a, b);
      push_if_empty(dim - 1, a, b);
      push_if_empty(a, 0, b);
      push_if_empty(a, dim - 1, b);
      push_if_empty(a, b, 0);
      push_if_empty(a, b, dim - 1);
    }
  while (!frontier.empty()) {
    auto [x, y, z] = frontier.front();
    frontier.pop();
    push_if_empty(x + 1, y, z);
    push_if_empty(x - 1, y, z);
    push_if_empty(x, y + 1, z);
    push_if_empty(x, y - 1, z);
    push_if_empty(x, y, z + 1);
    push_if_empty(x, y, z - 1);
  }
  for (std::size_t i = 0; i < grid.size(); ++i)
    if (!outside[i]) grid.occupancy[i] = 1;
  return grid;
}

}  // namespace organ

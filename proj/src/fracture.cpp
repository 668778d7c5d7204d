// SPDX-License-Identifier: Apache-2.0
#include "organ/fracture.hpp"

#include <algorithm>
#include <cmath>

namespace organ {

VoxelGrid carve(const VoxelGrid& grid, const std::array<int, 3>& center, int m,
                FractureShape shape) {
  if (!grid.in_bounds(center[0], center[1], center[2]))
    throw ShapeError("carve: center out of bounds");
  if (m < 1) throw ShapeError("carve: m must be positive");

  VoxelGrid out = grid;
  if (shape == FractureShape::Cube) {
    const int r = m / 2;
    const int x0 = std::max(0, center[0] - r), x1 = std::min(grid.dim - 1, center[0] + r);
    const int y0 = std::max(0, center[1] - r), y1 = std::min(grid.dim - 1, center[1] + r);
    const int z0 = std::max(0, center[2] - r), z1 = std::min(grid.dim - 1, center[2] + r);
    for (int x = x0; x <= x1; ++x)
      for (int y = y0; y <= y1; ++y)
        for (int z = z0; z <= z1; ++z) out.occupancy[out.index(x, y, z)] = 0;
  } else {
    const double radius = m / 2.0;
    const double r2 = radius * radius;
    const int r = static_cast<int>(std::floor(radius));
    const int x0 = std::max(0, center[0] - r), x1 = std::min(grid.dim - 1, center[0] + r);
    const int y0 = std::max(0, center[1] - r), y1 = std::min(grid.dim - 1, center[1] + r);
    const int z0 = std::max(0, center[2] - r), z1 = std::min(grid.dim - 1, center[2] + r);
    for (int x = x0; x <= x1; ++x)
      for (int y = y0; y <= y1; ++y)
        for (int z = z0; z <= z1; ++z) {
          const double dx = x - center[0], dy = y - center[1], dz = z - center[2];
          if (dx * dx + dy * dy + dz * dz <= r2)
            out.occupancy[out.index(x, y, z)] = 0;
        }
  }
  return out;
}

SamplePair simulate_fracture(const VoxelGrid& grid, const FractureParams& params,
                             Rng& rng, int label, FractureTrace* trace) {
  params.validate();

  std::vector<std::size_t> occupied;
  occupied.reserve(occupied_count(grid));
  for (std::size_t i = 0; i < grid.size(); ++i)
    if (grid.occupancy[i]) occupied.push_back(i);
  if (occupied.empty())
    throw ShapeError("simulate_fracture: grid has no occupied voxel");

  int n = rng.uniform_int(params.n_lo, params.n_hi);
  bool clamped = false;
  if (static_cast<std::size_t>(n) > occupied.size()) {
    n = static_cast<int>(occupied.size());
    clamped = true;
  }

  // Seeds sampled without replacement from the occupancy at simulation start
  // (partial Fisher-Yates over the ascending occupied-index list).
  std::vector<std::size_t> seeds;
  seeds.reserve(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) {
    const int j = rng.uniform_int(k, static_cast<int>(occupied.size()) - 1);
    std::swap(occupied[static_cast<std::size_t>(k)], occupied[static_cast<std::size_t>(j)]);
    seeds.push_back(occupied[static_cast<std::size_t>(k)]);
  }

  SamplePair pair;
  pair.complete = grid;
  pair.fractured = grid;
  pair.label = label;
  if (trace) {
    trace->n = n;
    trace->sizes.clear();
    trace->shapes.clear();
    trace->seeds_clamped = clamped;
  }
  const int dim = grid.dim;
  for (std::size_t idx : seeds) {
    const int x = static_cast<int>(idx / (static_cast<std::size_t>(dim) * dim));
    const int y = static_cast<int>((idx / dim) % dim);
    const int z = static_cast<int>(idx % dim);
    const int m = rng.uniform_int(params.m_lo, params.m_hi);
    const FractureShape shape =
        rng.bernoulli(params.p_sphere) ? FractureShape::Sphere : FractureShape::Cube;
    if (trace) {
      trace->sizes.push_back(m);
      trace->shapes.push_back(shape);
    }
    pair.fractured = carve(pair.fractured, {x, y, z}, m, shape);
  }
  pair.removed = missing_count(pair.fractured, pair.complete);
  return pair;
}

std::vector<SamplePair> fracture_objects(const std::vector<VoxelGrid>& objects,
                                         const std::vector<int>& labels,
                                         const FractureParams& params,
                                         int pairs_per_object) {
  if (objects.size() != labels.size())
    throw ConfigError("fracture_objects: objects/labels size mismatch");
  if (pairs_per_object < 1)
    throw ConfigError("fracture_objects: pairs_per_object must be positive");
  std::vector<SamplePair> pairs;
  pairs.reserve(objects.size() * static_cast<std::size_t>(pairs_per_object));
  for (std::size_t i = 0; i < objects.size(); ++i)
    for (int p = 0; p < pairs_per_object; ++p) {
      Rng rng = Rng::child(params.seed,
                           static_cast<std::uint64_t>(i) * pairs_per_object + p);
      pairs.push_back(simulate_fracture(objects[i], params, rng, labels[i]));
    }
  return pairs;
}

}  // namespace organ

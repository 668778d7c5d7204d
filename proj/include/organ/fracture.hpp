// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "organ/rng.hpp"
#include "organ/voxel.hpp"

namespace organ {

enum class FractureShape { Sphere, Cube };

struct FractureParams {
  int n_lo = 1, n_hi = 4;        // count of fracture seeds
  int m_lo = 3, m_hi = 6;        // fracture size in voxels
  double p_sphere = 0.75;        // else cube
  std::uint64_t seed = 0;

  void validate() const {
    if (n_lo < 1 || n_lo > n_hi) throw ConfigError("fracture: bad n range");
    if (m_lo < 1 || m_lo > m_hi) throw ConfigError("fracture: bad m range");
    if (p_sphere < 0.0 || p_sphere > 1.0) throw ConfigError("fracture: p not in [0,1]");
  }
};

struct SamplePair {
  VoxelGrid fractured;   // x_i
  VoxelGrid complete;    // x_t
  int label = 0;         // y
  std::size_t removed = 0;
};

// Per-simulation draw record, for statistics tests and reporting.
struct FractureTrace {
  int n = 0;
  std::vector<int> sizes;
  std::vector<FractureShape> shapes;
  bool seeds_clamped = false;  // fewer occupied voxels than seeds requested
};

// Clears occupied voxels around `center`: a sphere clears Euclidean distance
// <= m/2, a cube clears Chebyshev distance <= floor(m/2) (an m-sided cube for
// odd m). Shapes are clipped at grid boundaries. Returns the carved grid.
VoxelGrid carve(const VoxelGrid& grid, const std::array<int, 3>& center, int m,
                FractureShape shape);

// Draws n from n_range, picks n seed voxels without replacement from the
// occupancy at call time, and carves a shape of size m_k at each. If fewer
// occupied voxels than n exist, all of them become seeds (clamped, flagged in
// the trace, not an error).
SamplePair simulate_fracture(const VoxelGrid& grid, const FractureParams& params,
                             Rng& rng, int label = 0,
                             FractureTrace* trace = nullptr);

// pairs_per_object independent fractures per object, each from a substream
// derived from (params.seed, object_index * pairs_per_object + pair_index),
// so output is reproducible and order-independent.
std::vector<SamplePair> fracture_objects(const std::vector<VoxelGrid>& objects,
                                         const std::vector<int>& labels,
                                         const FractureParams& params,
                                         int pairs_per_object);

}  // namespace organ

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>
#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace organ {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ParseError : Error {
  using Error::Error;
};
struct ShapeError : Error {
  using Error::Error;
};
struct ConfigError : Error {
  using Error::Error;
};
struct IoError : Error {
  using Error::Error;
};

// Cubic binary occupancy grid. Internal layout is x-major: index(x,y,z) =
// (x*dim + y)*dim + z. The binvox wire order (y fastest) is converted at the
// parse/serialize boundary. translate/scale are carried as metadata only.
struct VoxelGrid {
  int dim = 0;
  std::vector<std::uint8_t> occupancy;  // 0/1, length dim^3
  std::array<double, 3> translate{0.0, 0.0, 0.0};
  double scale = 1.0;

  VoxelGrid() = default;
  explicit VoxelGrid(int d)
      : dim(d), occupancy(static_cast<std::size_t>(d) * d * d, 0) {
    if (d <= 0) throw ShapeError("VoxelGrid: dim must be positive");
  }

  std::size_t size() const { return occupancy.size(); }

  std::size_t index(int x, int y, int z) const {
    return (static_cast<std::size_t>(x) * dim + y) * dim + z;
  }
  bool in_bounds(int x, int y, int z) const {
    return x >= 0 && y >= 0 && z >= 0 && x < dim && y < dim && z < dim;
  }

  std::uint8_t at(int x, int y, int z) const { return occupancy[index(x, y, z)]; }
  void set(int x, int y, int z, bool v) { occupancy[index(x, y, z)] = v ? 1 : 0; }

  friend bool operator==(const VoxelGrid& a, const VoxelGrid& b) {
    return a.dim == b.dim && a.occupancy == b.occupancy &&
           a.translate == b.translate && a.scale == b.scale;
  }
};

inline std::size_t occupied_count(const VoxelGrid& g) {
  std::size_t n = 0;
  for (auto v : g.occupancy) n += v;
  return n;
}

// Signed-value view of a grid, occupancy mapped to {-1,+1}; the generator
// emits tanh values in (-1,1) into the same container.
template <typename Scalar>
struct SignedGrid {
  int dim = 0;
  Eigen::Array<Scalar, Eigen::Dynamic, 1> values;

  SignedGrid() = default;
  explicit SignedGrid(int d)
      : dim(d), values(Eigen::Array<Scalar, Eigen::Dynamic, 1>::Zero(
                    static_cast<Eigen::Index>(d) * d * d)) {}
};

using SignedGridF = SignedGrid<float>;
using SignedGridD = SignedGrid<double>;

template <typename Scalar>
SignedGrid<Scalar> to_signed(const VoxelGrid& g) {
  SignedGrid<Scalar> s(g.dim);
  for (Eigen::Index i = 0; i < s.values.size(); ++i)
    s.values[i] = g.occupancy[static_cast<std::size_t>(i)] ? Scalar(1) : Scalar(-1);
  return s;
}

// Occupied iff value > threshold. Metadata (translate/scale) is not carried
// by SignedGrid, so the result uses defaults.
template <typename Scalar>
VoxelGrid binarize(const SignedGrid<Scalar>& s, Scalar threshold = Scalar(0)) {
  if (!(threshold > Scalar(-1) && threshold < Scalar(1)))
    throw ShapeError("binarize: threshold must be in (-1, 1)");
  VoxelGrid g(s.dim);
  for (Eigen::Index i = 0; i < s.values.size(); ++i)
    g.occupancy[static_cast<std::size_t>(i)] = s.values[i] > threshold ? 1 : 0;
  return g;
}

// Mean absolute difference over all dim^3 cells (resolution-independent).
template <typename Scalar>
double l1_loss(const SignedGrid<Scalar>& a, const SignedGrid<Scalar>& b) {
  if (a.dim != b.dim)
    throw ShapeError("l1_loss: dimension mismatch " + std::to_string(a.dim) +
                     " vs " + std::to_string(b.dim));
  return (a.values.template cast<double>() - b.values.template cast<double>())
             .abs()
             .mean();
}

// Cells occupied in `complete` but empty in `fractured`. One-sided: extra
// voxels in `fractured` do not contribute.
std::size_t missing_count(const VoxelGrid& fractured, const VoxelGrid& complete);

// Debug export: {"dim", "translate", "scale", "occupancy": [0/1 ...]}.
std::string grid_to_json(const VoxelGrid& g);

}  // namespace organ

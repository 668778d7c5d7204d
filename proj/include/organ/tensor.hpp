// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "organ/voxel.hpp"

namespace organ {

// Dense n-d array, flat row-major storage (last index fastest).  Shapes are
// small vectors of ints; rank is whatever the op expects, checked at the op.
template <typename Scalar>
struct Tensor {
  std::vector<int> shape;
  Eigen::Array<Scalar, Eigen::Dynamic, 1> data;

  Tensor() = default;

  explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
    data = Eigen::Array<Scalar, Eigen::Dynamic, 1>::Zero(numel_of(shape));
  }

  Tensor(std::vector<int> s, Eigen::Array<Scalar, Eigen::Dynamic, 1> d)
      : shape(std::move(s)), data(std::move(d)) {
    if (data.size() != numel_of(shape))
      throw ShapeError("tensor data size does not match shape");
  }

  static std::int64_t numel_of(const std::vector<int>& s) {
    std::int64_t n = 1;
    for (int d : s) {
      if (d <= 0) throw ShapeError("tensor dimensions must be positive");
      n *= d;
    }
    return n;
  }

  static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }

  static Tensor full(std::vector<int> s, Scalar v) {
    Tensor t(std::move(s));
    t.data.setConstant(v);
    return t;
  }

  static Tensor from(std::vector<int> s, const std::vector<Scalar>& v) {
    Tensor t(std::move(s));
    if (static_cast<std::int64_t>(v.size()) != t.numel())
      throw ShapeError("tensor literal size does not match shape");
    for (std::int64_t i = 0; i < t.numel(); ++i) t.data[i] = v[i];
    return t;
  }

  std::int64_t numel() const { return data.size(); }

  Scalar& operator[](std::int64_t i) { return data[i]; }
  Scalar operator[](std::int64_t i) const { return data[i]; }
};

inline std::string shape_str(const std::vector<int>& s) {
  std::string out = "(";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + ")";
}

// Signed grid <-> tensor bridges.  A grid becomes a (1,1,d,d,d) sample; both
// sides use the same x-major flat order so this is just a copy.
template <typename Scalar>
Tensor<Scalar> grid_to_tensor(const SignedGrid<Scalar>& g) {
  Tensor<Scalar> t({1, 1, g.dim, g.dim, g.dim});
  t.data = g.values;
  return t;
}

template <typename Scalar>
SignedGrid<Scalar> tensor_to_grid(const Tensor<Scalar>& t) {
  if (t.shape.size() != 5 || t.shape[0] != 1 || t.shape[1] != 1 ||
      t.shape[2] != t.shape[3] || t.shape[3] != t.shape[4])
    throw ShapeError("expected a (1,1,d,d,d) tensor, got " +
                     shape_str(t.shape));
  SignedGrid<Scalar> g;
  g.dim = t.shape[2];
  g.values = t.data;
  return g;
}

}  // namespace organ

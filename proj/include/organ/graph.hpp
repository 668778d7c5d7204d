// SPDX-License-Identifier: Apache-2.0
#pragma once

// Reverse-mode autodiff on a define-by-run tape.  Ops evaluate eagerly when
// emitted; backward() walks the tape in reverse and emits the vector-Jacobian
// products as ordinary graph nodes.  Because gradients are themselves nodes,
// a scalar built from them can be differentiated again, which is how the
// gradient-penalty term gets its parameter gradients.

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <unordered_map>
#include <vector>

#include "organ/tensor.hpp"
#include "organ/voxel.hpp"

namespace organ {

enum class OpKind {
  Input,
  Const,
  Add,
  Sub,
  Mul,
  Div,
  Neg,
  Scale,     // x * c
  Shift,     // x + c
  Relu,
  LeakyRelu, // slope in attrs.x
  Tanh,
  Sigmoid,
  Abs,
  Sqrt,
  StepMask,  // 1 where x > 0 else 0; gradient stops here
  LeakyMask, // 1 where x > 0 else slope; gradient stops here
  SignMask,  // sign(x); gradient stops here
  MatMul,    // (N,F) x (F,G)
  Transpose2D,
  Reshape,
  SumAll,       // any shape -> (1)
  ExpandScalar, // (1) -> target shape
  ReduceSpatial,    // (N,C,D,H,W) -> (N,C), sum
  BroadcastSpatial, // (N,C) -> (N,C,D,H,W)
  ReduceBatch,      // (N,C) -> (C), sum
  BroadcastBatch,   // (C) -> (N,C)
  ConcatC, // concat along channel axis of (N,C,...) tensors
  SliceC,  // channel range [lo, hi)
  PadC,    // place channels at offset lo inside total C, zeros elsewhere
  Conv3d,   // x:(N,Ci,S,S,S), w:(Co,Ci,k,k,k)
  Conv3dDx, // adjoint wrt x; doubles as transposed convolution
  Conv3dDw, // adjoint wrt w
};

struct OpAttrs {
  std::vector<int> ints;
  double x = 0.0;
};

namespace detail {

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

inline int conv_out_side(int in, int k, int stride, int pad) {
  const int span = in + 2 * pad - k;
  if (span < 0 || span % stride != 0)
    throw ShapeError("convolution geometry does not tile: side " +
                     std::to_string(in) + ", kernel " + std::to_string(k) +
                     ", stride " + std::to_string(stride) + ", pad " +
                     std::to_string(pad));
  return span / stride + 1;
}

// Unfold x (N,C,S,S,S) into a (C*k^3, N*out^3) matrix with zero padding.
template <typename Scalar>
Mat<Scalar> im2col(const Tensor<Scalar>& x, int N, int C, int S, int k,
                   int stride, int pad, int out) {
  const int k3 = k * k * k;
  const std::int64_t out3 = std::int64_t(out) * out * out;
  Mat<Scalar> col = Mat<Scalar>::Zero(std::int64_t(C) * k3, N * out3);
  for (int n = 0; n < N; ++n)
    for (int od = 0; od < out; ++od)
      for (int oh = 0; oh < out; ++oh)
        for (int ow = 0; ow < out; ++ow) {
          const std::int64_t cidx =
              ((std::int64_t(n) * out + od) * out + oh) * out + ow;
          for (int c = 0; c < C; ++c)
            for (int kd = 0; kd < k; ++kd) {
              const int id = od * stride - pad + kd;
              if (id < 0 || id >= S) continue;
              for (int kh = 0; kh < k; ++kh) {
                const int ih = oh * stride - pad + kh;
                if (ih < 0 || ih >= S) continue;
                for (int kw = 0; kw < k; ++kw) {
                  const int iw = ow * stride - pad + kw;
                  if (iw < 0 || iw >= S) continue;
                  const std::int64_t row =
                      ((std::int64_t(c) * k + kd) * k + kh) * k + kw;
                  const std::int64_t src =
                      (((std::int64_t(n) * C + c) * S + id) * S + ih) * S + iw;
                  col(row, cidx) = x.data[src];
                }
              }
            }
        }
  return col;
}

// Scatter-add of a column matrix back into x's shape; exact adjoint of
// im2col as a linear map.
template <typename Scalar>
void col2im(const Mat<Scalar>& col, Tensor<Scalar>& x, int N, int C, int S,
            int k, int stride, int pad, int out) {
  for (int n = 0; n < N; ++n)
    for (int od = 0; od < out; ++od)
      for (int oh = 0; oh < out; ++oh)
        for (int ow = 0; ow < out; ++ow) {
          const std::int64_t cidx =
              ((std::int64_t(n) * out + od) * out + oh) * out + ow;
          for (int c = 0; c < C; ++c)
            for (int kd = 0; kd < k; ++kd) {
              const int id = od * stride - pad + kd;
              if (id < 0 || id >= S) continue;
              for (int kh = 0; kh < k; ++kh) {
                const int ih = oh * stride - pad + kh;
                if (ih < 0 || ih >= S) continue;
                for (int kw = 0; kw < k; ++kw) {
                  const int iw = ow * stride - pad + kw;
                  if (iw < 0 || iw >= S) continue;
                  const std::int64_t row =
                      ((std::int64_t(c) * k + kd) * k + kh) * k + kw;
                  const std::int64_t dst =
                      (((std::int64_t(n) * C + c) * S + id) * S + ih) * S + iw;
                  x.data[dst] += col(row, cidx);
                }
              }
            }
        }
}

// Rearrange y (N,Co,out^3) as a (Co, N*out^3) matrix and back.
template <typename Scalar>
Mat<Scalar> to_channel_major(const Tensor<Scalar>& y, int N, int Co,
                             std::int64_t out3) {
  Mat<Scalar> m(Co, N * out3);
  for (int n = 0; n < N; ++n)
    for (int co = 0; co < Co; ++co)
      for (std::int64_t q = 0; q < out3; ++q)
        m(co, std::int64_t(n) * out3 + q) =
            y.data[(std::int64_t(n) * Co + co) * out3 + q];
  return m;
}

template <typename Scalar>
void from_channel_major(const Mat<Scalar>& m, Tensor<Scalar>& y, int N, int Co,
                        std::int64_t out3) {
  for (int n = 0; n < N; ++n)
    for (int co = 0; co < Co; ++co)
      for (std::int64_t q = 0; q < out3; ++q)
        y.data[(std::int64_t(n) * Co + co) * out3 + q] =
            m(co, std::int64_t(n) * out3 + q);
}

}  // namespace detail

template <typename Scalar>
class Graph {
 public:
  struct Node {
    OpKind kind;
    std::vector<int> inputs;
    OpAttrs attrs;
    Tensor<Scalar> value;
    bool requires_grad = false;
  };

  int input(Tensor<Scalar> value, bool requires_grad) {
    return push(OpKind::Input, {}, {}, std::move(value), requires_grad);
  }

  int constant(Tensor<Scalar> value) {
    return push(OpKind::Const, {}, {}, std::move(value), false);
  }

  int scalar(Scalar v) { return constant(Tensor<Scalar>::full({1}, v)); }

  // ---- elementwise ----

  int add(int a, int b) {
    check_same_shape(a, b, "add");
    Tensor<Scalar> out(node(a).value.shape);
    out.data = node(a).value.data + node(b).value.data;
    return push(OpKind::Add, {a, b}, {}, std::move(out));
  }

  int sub(int a, int b) {
    check_same_shape(a, b, "sub");
    Tensor<Scalar> out(node(a).value.shape);
    out.data = node(a).value.data - node(b).value.data;
    return push(OpKind::Sub, {a, b}, {}, std::move(out));
  }

  int mul(int a, int b) {
    check_same_shape(a, b, "mul");
    Tensor<Scalar> out(node(a).value.shape);
    out.data = node(a).value.data * node(b).value.data;
    return push(OpKind::Mul, {a, b}, {}, std::move(out));
  }

  int div(int a, int b) {
    check_same_shape(a, b, "div");
    Tensor<Scalar> out(node(a).value.shape);
    out.data = node(a).value.data / node(b).value.data;
    return push(OpKind::Div, {a, b}, {}, std::move(out));
  }

  int neg(int a) {
    Tensor<Scalar> out(node(a).value.shape);
    out.data = -node(a).value.data;
    return push(OpKind::Neg, {a}, {}, std::move(out));
  }

  int scale(int a, double c) {
    Tensor<Scalar> out(node(a).value.shape);
    out.data = node(a).value.data * static_cast<Scalar>(c);
    OpAttrs at;
    at.x = c;
    return push(OpKind::Scale, {a}, at, std::move(out));
  }

  int shift(int a, double c) {
    Tensor<Scalar> out(node(a).value.shape);
    out.data = node(a).value.data + static_cast<Scalar>(c);
    OpAttrs at;
    at.x = c;
    return push(OpKind::Shift, {a}, at, std::move(out));
  }

  int relu(int a) {
    Tensor<Scalar> out(node(a).value.shape);
    out.data = node(a).value.data.max(Scalar(0));
    return push(OpKind::Relu, {a}, {}, std::move(out));
  }

  int leaky_relu(int a, double slope) {
    const auto& x = node(a).value.data;
    Tensor<Scalar> out(node(a).value.shape);
    out.data = (x > Scalar(0)).select(x, x * static_cast<Scalar>(slope));
    OpAttrs at;
    at.x = slope;
    return push(OpKind::LeakyRelu, {a}, at, std::move(out));
  }

  int tanh_(int a) {
    Tensor<Scalar> out(node(a).value.shape);
    out.data = node(a).value.data.tanh();
    return push(OpKind::Tanh, {a}, {}, std::move(out));
  }

  int sigmoid(int a) {
    Tensor<Scalar> out(node(a).value.shape);
    out.data = (Scalar(1) / (Scalar(1) + (-node(a).value.data).exp()));
    return push(OpKind::Sigmoid, {a}, {}, std::move(out));
  }

  int abs_(int a) {
    Tensor<Scalar> out(node(a).value.shape);
    out.data = node(a).value.data.abs();
    return push(OpKind::Abs, {a}, {}, std::move(out));
  }

  int sqrt_(int a) {
    Tensor<Scalar> out(node(a).value.shape);
    out.data = node(a).value.data.sqrt();
    return push(OpKind::Sqrt, {a}, {}, std::move(out));
  }

  int step_mask(int a) {
    Tensor<Scalar> out(node(a).value.shape);
    out.data =
        (node(a).value.data > Scalar(0)).template cast<Scalar>();
    return push(OpKind::StepMask, {a}, {}, std::move(out), false,
                /*stop_grad=*/true);
  }

  int leaky_mask(int a, double slope) {
    const auto& x = node(a).value.data;
    Tensor<Scalar> out(node(a).value.shape);
    out.data = (x > Scalar(0))
                   .select(Eigen::Array<Scalar, Eigen::Dynamic, 1>::Constant(
                               x.size(), Scalar(1)),
                           Eigen::Array<Scalar, Eigen::Dynamic, 1>::Constant(
                               x.size(), static_cast<Scalar>(slope)));
    OpAttrs at;
    at.x = slope;
    return push(OpKind::LeakyMask, {a}, at, std::move(out), false, true);
  }

  int sign_mask(int a) {
    Tensor<Scalar> out(node(a).value.shape);
    out.data = node(a).value.data.sign();
    return push(OpKind::SignMask, {a}, {}, std::move(out), false, true);
  }

  // ---- linear algebra ----

  int matmul(int a, int b) {
    const auto& sa = node(a).value.shape;
    const auto& sb = node(b).value.shape;
    if (sa.size() != 2 || sb.size() != 2 || sa[1] != sb[0])
      throw ShapeError("matmul expects (N,F)x(F,G), got " + shape_str(sa) +
                       " and " + shape_str(sb));
    using RowMat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic,
                                 Eigen::RowMajor>;
    Eigen::Map<const RowMat> A(node(a).value.data.data(), sa[0], sa[1]);
    Eigen::Map<const RowMat> B(node(b).value.data.data(), sb[0], sb[1]);
    Tensor<Scalar> out({sa[0], sb[1]});
    Eigen::Map<RowMat>(out.data.data(), sa[0], sb[1]) = A * B;
    return push(OpKind::MatMul, {a, b}, {}, std::move(out));
  }

  int transpose2d(int a) {
    const auto& s = node(a).value.shape;
    if (s.size() != 2)
      throw ShapeError("transpose2d expects a matrix, got " + shape_str(s));
    Tensor<Scalar> out({s[1], s[0]});
    for (int r = 0; r < s[0]; ++r)
      for (int c = 0; c < s[1]; ++c)
        out.data[std::int64_t(c) * s[0] + r] =
            node(a).value.data[std::int64_t(r) * s[1] + c];
    return push(OpKind::Transpose2D, {a}, {}, std::move(out));
  }

  int reshape(int a, std::vector<int> shape) {
    if (Tensor<Scalar>::numel_of(shape) != node(a).value.numel())
      throw ShapeError("reshape to " + shape_str(shape) +
                       " changes element count from " +
                       shape_str(node(a).value.shape));
    Tensor<Scalar> out(shape, node(a).value.data);
    OpAttrs at;
    at.ints = std::move(shape);
    return push(OpKind::Reshape, {a}, at, std::move(out));
  }

  // ---- reductions and broadcasts ----

  int sum_all(int a) {
    Tensor<Scalar> out({1});
    out.data[0] = node(a).value.data.sum();
    return push(OpKind::SumAll, {a}, {}, std::move(out));
  }

  int mean_all(int a) {
    return scale(sum_all(a), 1.0 / double(node(a).value.numel()));
  }

  int expand_scalar(int a, std::vector<int> shape) {
    if (node(a).value.numel() != 1)
      throw ShapeError("expand_scalar expects a scalar");
    Tensor<Scalar> out = Tensor<Scalar>::full(shape, node(a).value.data[0]);
    OpAttrs at;
    at.ints = std::move(shape);
    return push(OpKind::ExpandScalar, {a}, at, std::move(out));
  }

  int reduce_spatial(int a) {
    const auto& s = node(a).value.shape;
    if (s.size() != 5)
      throw ShapeError("reduce_spatial expects (N,C,D,H,W), got " +
                       shape_str(s));
    const std::int64_t nc = std::int64_t(s[0]) * s[1];
    const std::int64_t sp = std::int64_t(s[2]) * s[3] * s[4];
    Tensor<Scalar> out({s[0], s[1]});
    for (std::int64_t i = 0; i < nc; ++i)
      out.data[i] = node(a).value.data.segment(i * sp, sp).sum();
    return push(OpKind::ReduceSpatial, {a}, {}, std::move(out));
  }

  int broadcast_spatial(int a, int d, int h, int w) {
    const auto& s = node(a).value.shape;
    if (s.size() != 2)
      throw ShapeError("broadcast_spatial expects (N,C), got " + shape_str(s));
    const std::int64_t nc = std::int64_t(s[0]) * s[1];
    const std::int64_t sp = std::int64_t(d) * h * w;
    Tensor<Scalar> out({s[0], s[1], d, h, w});
    for (std::int64_t i = 0; i < nc; ++i)
      out.data.segment(i * sp, sp).setConstant(node(a).value.data[i]);
    OpAttrs at;
    at.ints = {d, h, w};
    return push(OpKind::BroadcastSpatial, {a}, at, std::move(out));
  }

  int reduce_batch(int a) {
    const auto& s = node(a).value.shape;
    if (s.size() != 2)
      throw ShapeError("reduce_batch expects (N,C), got " + shape_str(s));
    Tensor<Scalar> out({s[1]});
    for (int c = 0; c < s[1]; ++c) {
      Scalar acc = 0;
      for (int n = 0; n < s[0]; ++n)
        acc += node(a).value.data[std::int64_t(n) * s[1] + c];
      out.data[c] = acc;
    }
    return push(OpKind::ReduceBatch, {a}, {}, std::move(out));
  }

  int broadcast_batch(int a, int n) {
    const auto& s = node(a).value.shape;
    if (s.size() != 1)
      throw ShapeError("broadcast_batch expects (C), got " + shape_str(s));
    Tensor<Scalar> out({n, s[0]});
    for (int i = 0; i < n; ++i)
      out.data.segment(std::int64_t(i) * s[0], s[0]) = node(a).value.data;
    OpAttrs at;
    at.ints = {n};
    return push(OpKind::BroadcastBatch, {a}, at, std::move(out));
  }

  // ---- channel concat / slice ----

  int concat_c(const std::vector<int>& parts) {
    if (parts.empty()) throw ShapeError("concat_c needs at least one input");
    auto base = node(parts[0]).value.shape;
    if (base.size() < 2)
      throw ShapeError("concat_c expects (N,C,...) tensors");
    int total_c = 0;
    std::int64_t inner = 1;
    for (std::size_t d = 2; d < base.size(); ++d) inner *= base[d];
    for (int p : parts) {
      const auto& s = node(p).value.shape;
      if (s.size() != base.size() || s[0] != base[0])
        throw ShapeError("concat_c inputs disagree: " + shape_str(base) +
                         " vs " + shape_str(s));
      for (std::size_t d = 2; d < base.size(); ++d)
        if (s[d] != base[d])
          throw ShapeError("concat_c inputs disagree: " + shape_str(base) +
                           " vs " + shape_str(s));
      total_c += s[1];
    }
    auto out_shape = base;
    out_shape[1] = total_c;
    Tensor<Scalar> out(out_shape);
    const int N = base[0];
    for (int n = 0; n < N; ++n) {
      std::int64_t off = 0;
      for (int p : parts) {
        const int c = node(p).value.shape[1];
        out.data.segment((std::int64_t(n) * total_c + off) * inner,
                         std::int64_t(c) * inner) =
            node(p).value.data.segment(std::int64_t(n) * c * inner,
                                       std::int64_t(c) * inner);
        off += c;
      }
    }
    return push(OpKind::ConcatC, parts, {}, std::move(out));
  }

  int slice_c(int a, int lo, int hi) {
    const auto& s = node(a).value.shape;
    if (s.size() < 2) throw ShapeError("slice_c expects (N,C,...)");
    if (lo < 0 || hi > s[1] || lo >= hi)
      throw ShapeError("slice_c range [" + std::to_string(lo) + "," +
                       std::to_string(hi) + ") out of " +
                       std::to_string(s[1]) + " channels");
    std::int64_t inner = 1;
    for (std::size_t d = 2; d < s.size(); ++d) inner *= s[d];
    auto out_shape = s;
    out_shape[1] = hi - lo;
    Tensor<Scalar> out(out_shape);
    for (int n = 0; n < s[0]; ++n)
      out.data.segment(std::int64_t(n) * (hi - lo) * inner,
                       std::int64_t(hi - lo) * inner) =
          node(a).value.data.segment(
              (std::int64_t(n) * s[1] + lo) * inner,
              std::int64_t(hi - lo) * inner);
    OpAttrs at;
    at.ints = {lo, hi};
    return push(OpKind::SliceC, {a}, at, std::move(out));
  }

  int pad_c(int a, int lo, int total_c) {
    const auto& s = node(a).value.shape;
    if (s.size() < 2) throw ShapeError("pad_c expects (N,C,...)");
    if (lo < 0 || lo + s[1] > total_c)
      throw ShapeError("pad_c placement does not fit");
    std::int64_t inner = 1;
    for (std::size_t d = 2; d < s.size(); ++d) inner *= s[d];
    auto out_shape = s;
    out_shape[1] = total_c;
    Tensor<Scalar> out(out_shape);
    for (int n = 0; n < s[0]; ++n)
      out.data.segment((std::int64_t(n) * total_c + lo) * inner,
                       std::int64_t(s[1]) * inner) =
          node(a).value.data.segment(std::int64_t(n) * s[1] * inner,
                                     std::int64_t(s[1]) * inner);
    OpAttrs at;
    at.ints = {lo, total_c};
    return push(OpKind::PadC, {a}, at, std::move(out));
  }

  // ---- convolution family ----
  // x (N,Ci,S,S,S) with w (Co,Ci,k,k,k).  conv3d_dx is the adjoint with
  // respect to x and doubles as the transposed convolution of the decoder;
  // conv3d_dw is the adjoint with respect to w.  The three are closed under
  // differentiation, which keeps second derivatives inside the op set.

  int conv3d(int x, int w, int stride, int pad) {
    const auto& sx = node(x).value.shape;
    const auto& sw = node(w).value.shape;
    check_conv_shapes(sx, sw);
    const int N = sx[0], Ci = sx[1], S = sx[2];
    const int Co = sw[0], k = sw[2];
    const int out = detail::conv_out_side(S, k, stride, pad);
    auto col = detail::im2col(node(x).value, N, Ci, S, k, stride, pad, out);
    using RowMat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic,
                                 Eigen::RowMajor>;
    Eigen::Map<const RowMat> W(node(w).value.data.data(), Co,
                               std::int64_t(Ci) * k * k * k);
    detail::Mat<Scalar> y = W * col;
    Tensor<Scalar> outt({N, Co, out, out, out});
    detail::from_channel_major(y, outt, N, Co, std::int64_t(out) * out * out);
    OpAttrs at;
    at.ints = {stride, pad};
    return push(OpKind::Conv3d, {x, w}, at, std::move(outt));
  }

  // g (N,Co,G,G,G) with w (Co,Ci,k,k,k) -> (N,Ci,out_side^3) where
  // out_side = (G-1)*stride - 2*pad + k.
  int conv3d_dx(int g, int w, int stride, int pad, int out_side) {
    const auto& sg = node(g).value.shape;
    const auto& sw = node(w).value.shape;
    if (sg.size() != 5 || sw.size() != 5 || sg[1] != sw[0])
      throw ShapeError("conv3d_dx expects g (N,Co,G,G,G) and w (Co,Ci,k,..)");
    const int N = sg[0], Co = sg[1], G = sg[2];
    const int Ci = sw[1], k = sw[2];
    if (detail::conv_out_side(out_side, k, stride, pad) != G)
      throw ShapeError("conv3d_dx output side " + std::to_string(out_side) +
                       " is inconsistent with gradient side " +
                       std::to_string(G));
    using RowMat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic,
                                 Eigen::RowMajor>;
    Eigen::Map<const RowMat> W(node(w).value.data.data(), Co,
                               std::int64_t(Ci) * k * k * k);
    auto gm = detail::to_channel_major(node(g).value, N, Co,
                                       std::int64_t(G) * G * G);
    detail::Mat<Scalar> colg = W.transpose() * gm;
    Tensor<Scalar> outt({N, Ci, out_side, out_side, out_side});
    detail::col2im(colg, outt, N, Ci, out_side, k, stride, pad, G);
    OpAttrs at;
    at.ints = {stride, pad, out_side};
    return push(OpKind::Conv3dDx, {g, w}, at, std::move(outt));
  }

  // x (N,Ci,S,S,S) with g (N,Co,G,G,G) -> (Co,Ci,k,k,k).
  int conv3d_dw(int x, int g, int stride, int pad, int k) {
    const auto& sx = node(x).value.shape;
    const auto& sg = node(g).value.shape;
    if (sx.size() != 5 || sg.size() != 5 || sx[0] != sg[0])
      throw ShapeError("conv3d_dw expects matching batches");
    const int N = sx[0], Ci = sx[1], S = sx[2];
    const int Co = sg[1], G = sg[2];
    if (detail::conv_out_side(S, k, stride, pad) != G)
      throw ShapeError("conv3d_dw geometry mismatch");
    auto col = detail::im2col(node(x).value, N, Ci, S, k, stride, pad, G);
    auto gm = detail::to_channel_major(node(g).value, N, Co,
                                       std::int64_t(G) * G * G);
    detail::Mat<Scalar> dw = gm * col.transpose();  // (Co, Ci*k^3)
    Tensor<Scalar> outt({Co, Ci, k, k, k});
    const std::int64_t rk = std::int64_t(Ci) * k * k * k;
    for (int co = 0; co < Co; ++co)
      for (std::int64_t r = 0; r < rk; ++r) outt.data[co * rk + r] = dw(co, r);
    OpAttrs at;
    at.ints = {stride, pad, k};
    return push(OpKind::Conv3dDw, {x, g}, at, std::move(outt));
  }

  // Decoder upsampling: transposed conv of x by w.  Weight layout matches
  // the conv it is adjoint to, i.e. w (C_in_here, C_out_here, k,k,k).
  int conv_transpose3d(int x, int w, int stride, int pad) {
    const auto& sx = node(x).value.shape;
    const auto& sw = node(w).value.shape;
    if (sx.size() != 5 || sw.size() != 5 || sx[1] != sw[0])
      throw ShapeError("conv_transpose3d expects x (N,C,S,..), w (C,C',k,..)");
    const int out_side = (sx[2] - 1) * stride - 2 * pad + sw[2];
    return conv3d_dx(x, w, stride, pad, out_side);
  }

  // ---- access ----

  const Tensor<Scalar>& value(int id) const { return node(id).value; }
  const std::vector<int>& shape(int id) const { return node(id).value.shape; }
  bool requires_grad(int id) const { return node(id).requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  // Reverse pass from a scalar loss.  Returns a map from node id to the id
  // of its gradient node, for every node on a differentiable path.
  std::unordered_map<int, int> backward(int loss) {
    if (node(loss).value.numel() != 1)
      throw ShapeError("backward expects a scalar loss, got " +
                       shape_str(node(loss).value.shape));
    std::vector<int> grad_of(nodes_.size(), -1);
    const int upper = loss;
    grad_of[loss] = constant(Tensor<Scalar>::full({1}, Scalar(1)));
    for (int i = upper; i >= 0; --i) {
      if (grad_of[i] < 0 || !nodes_[i].requires_grad) continue;
      emit_vjps(i, grad_of);
    }
    std::unordered_map<int, int> out;
    for (int i = 0; i <= upper; ++i)
      if (grad_of[i] >= 0 && nodes_[i].requires_grad) out.emplace(i, grad_of[i]);
    return out;
  }

  // Convenience for tests: gradient value of `wrt` after backward(loss).
  Tensor<Scalar> grad(int loss, int wrt) {
    auto g = backward(loss);
    auto it = g.find(wrt);
    if (it == g.end()) return Tensor<Scalar>::zeros(node(wrt).value.shape);
    return node(it->second).value;
  }

 private:
  std::vector<Node> nodes_;

  const Node& node(int id) const {
    if (id < 0 || id >= static_cast<int>(nodes_.size()))
      throw ShapeError("node id out of range");
    return nodes_[id];
  }

  int push(OpKind kind, std::vector<int> inputs, OpAttrs attrs,
           Tensor<Scalar> value, bool requires_grad_leaf = false,
           bool stop_grad = false) {
    Node n;
    n.kind = kind;
    n.inputs = std::move(inputs);
    n.attrs = std::move(attrs);
    n.value = std::move(value);
    if (kind == OpKind::Input) {
      n.requires_grad = requires_grad_leaf;
    } else if (stop_grad || kind == OpKind::Const) {
      n.requires_grad = false;
    } else {
      for (int in : n.inputs) n.requires_grad |= node(in).requires_grad;
    }
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
  }

  void check_same_shape(int a, int b, const char* what) const {
    if (node(a).value.shape != node(b).value.shape)
      throw ShapeError(std::string(what) + " shape mismatch: " +
                       shape_str(node(a).value.shape) + " vs " +
                       shape_str(node(b).value.shape));
  }

  static void check_conv_shapes(const std::vector<int>& sx,
                                const std::vector<int>& sw) {
    if (sx.size() != 5 || sx[2] != sx[3] || sx[3] != sx[4])
      throw ShapeError("conv3d expects cubic (N,C,S,S,S), got " +
                       shape_str(sx));
    if (sw.size() != 5 || sw[2] != sw[3] || sw[3] != sw[4])
      throw ShapeError("conv3d expects cubic kernels, got " + shape_str(sw));
    if (sx[1] != sw[1])
      throw ShapeError("conv3d channel mismatch: input " + shape_str(sx) +
                       ", weights " + shape_str(sw));
  }

  void accumulate(std::vector<int>& grad_of, int target, int contribution) {
    if (!nodes_[target].requires_grad) return;
    if (grad_of[target] < 0)
      grad_of[target] = contribution;
    else
      grad_of[target] = add(grad_of[target], contribution);
  }

  void emit_vjps(int i, std::vector<int>& grad_of) {
    const int g = grad_of[i];
    // Copies: emitting VJP nodes may reallocate nodes_.
    const OpKind kind = nodes_[i].kind;
    const std::vector<int> in = nodes_[i].inputs;
    const OpAttrs attrs = nodes_[i].attrs;
    switch (kind) {
      case OpKind::Input:
      case OpKind::Const:
      case OpKind::StepMask:
      case OpKind::LeakyMask:
      case OpKind::SignMask:
        break;
      case OpKind::Add:
        accumulate(grad_of, in[0], g);
        accumulate(grad_of, in[1], g);
        break;
      case OpKind::Sub:
        accumulate(grad_of, in[0], g);
        accumulate(grad_of, in[1], neg(g));
        break;
      case OpKind::Mul:
        accumulate(grad_of, in[0], mul(g, in[1]));
        accumulate(grad_of, in[1], mul(g, in[0]));
        break;
      case OpKind::Div: {
        accumulate(grad_of, in[0], div(g, in[1]));
        accumulate(grad_of, in[1], neg(div(mul(g, i), in[1])));
        break;
      }
      case OpKind::Neg:
        accumulate(grad_of, in[0], neg(g));
        break;
      case OpKind::Scale:
        accumulate(grad_of, in[0], scale(g, attrs.x));
        break;
      case OpKind::Shift:
        accumulate(grad_of, in[0], g);
        break;
      case OpKind::Relu:
        accumulate(grad_of, in[0], mul(g, step_mask(in[0])));
        break;
      case OpKind::LeakyRelu:
        accumulate(grad_of, in[0], mul(g, leaky_mask(in[0], attrs.x)));
        break;
      case OpKind::Tanh:
        // y' = 1 - y^2, in terms of this node's own output
        accumulate(grad_of, in[0], mul(g, shift(neg(mul(i, i)), 1.0)));
        break;
      case OpKind::Sigmoid:
        accumulate(grad_of, in[0], mul(g, mul(i, shift(neg(i), 1.0))));
        break;
      case OpKind::Abs:
        accumulate(grad_of, in[0], mul(g, sign_mask(in[0])));
        break;
      case OpKind::Sqrt:
        accumulate(grad_of, in[0], div(scale(g, 0.5), i));
        break;
      case OpKind::MatMul:
        accumulate(grad_of, in[0], matmul(g, transpose2d(in[1])));
        accumulate(grad_of, in[1], matmul(transpose2d(in[0]), g));
        break;
      case OpKind::Transpose2D:
        accumulate(grad_of, in[0], transpose2d(g));
        break;
      case OpKind::Reshape:
        accumulate(grad_of, in[0], reshape(g, nodes_[in[0]].value.shape));
        break;
      case OpKind::SumAll:
        accumulate(grad_of, in[0],
                   expand_scalar(g, nodes_[in[0]].value.shape));
        break;
      case OpKind::ExpandScalar:
        accumulate(grad_of, in[0], sum_all(g));
        break;
      case OpKind::ReduceSpatial: {
        const auto& s = nodes_[in[0]].value.shape;
        accumulate(grad_of, in[0], broadcast_spatial(g, s[2], s[3], s[4]));
        break;
      }
      case OpKind::BroadcastSpatial:
        accumulate(grad_of, in[0], reduce_spatial(g));
        break;
      case OpKind::ReduceBatch:
        accumulate(grad_of, in[0],
                   broadcast_batch(g, nodes_[in[0]].value.shape[0]));
        break;
      case OpKind::BroadcastBatch:
        accumulate(grad_of, in[0], reduce_batch(g));
        break;
      case OpKind::ConcatC: {
        int off = 0;
        for (int p : in) {
          const int c = nodes_[p].value.shape[1];
          accumulate(grad_of, p, slice_c(g, off, off + c));
          off += c;
        }
        break;
      }
      case OpKind::SliceC:
        accumulate(grad_of, in[0],
                   pad_c(g, attrs.ints[0], nodes_[in[0]].value.shape[1]));
        break;
      case OpKind::PadC:
        accumulate(
            grad_of, in[0],
            slice_c(g, attrs.ints[0],
                    attrs.ints[0] + nodes_[in[0]].value.shape[1]));
        break;
      case OpKind::Conv3d: {
        const int stride = attrs.ints[0], pad = attrs.ints[1];
        const int side = nodes_[in[0]].value.shape[2];
        const int k = nodes_[in[1]].value.shape[2];
        accumulate(grad_of, in[0], conv3d_dx(g, in[1], stride, pad, side));
        accumulate(grad_of, in[1], conv3d_dw(in[0], g, stride, pad, k));
        break;
      }
      case OpKind::Conv3dDx: {
        const int stride = attrs.ints[0], pad = attrs.ints[1];
        const int k = nodes_[in[1]].value.shape[2];
        // d/d(gradient argument) is a plain conv of the incoming gradient;
        // d/dw correlates the incoming gradient with that argument.
        accumulate(grad_of, in[0], conv3d(g, in[1], stride, pad));
        accumulate(grad_of, in[1], conv3d_dw(g, in[0], stride, pad, k));
        break;
      }
      case OpKind::Conv3dDw: {
        const int stride = attrs.ints[0], pad = attrs.ints[1];
        const int side = nodes_[in[0]].value.shape[2];
        (void)side;
        accumulate(grad_of, in[0],
                   conv3d_dx(in[1], g, stride, pad,
                             nodes_[in[0]].value.shape[2]));
        accumulate(grad_of, in[1], conv3d(in[0], g, stride, pad));
        break;
      }
    }
  }
};

}  // namespace organ

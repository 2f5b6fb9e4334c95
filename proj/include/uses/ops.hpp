// Copyright 2026 The uses-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Differentiable tensor operations. Every op computes its forward value
// eagerly and, when an input participates in differentiation, records a
// backward closure on the owning tape. No implicit broadcasting: operands
// must match exactly, except that a scalar (numel == 1) may pair with any
// shape, and broadcast_to() makes expansion explicit.

#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "uses/parallel.hpp"
#include "uses/tensor.hpp"

namespace uses {

namespace detail {

// Walks `shape` in row-major order, calling f(linear_index, strided_offset)
// where the offset advances by src_strides (0 stride = broadcast axis).
template <typename F>
inline void odometer_walk(const Shape& shape, const Shape& src_strides, F&& f) {
  const int nd = static_cast<int>(shape.size());
  for (int d = 0; d < nd; ++d)
    if (shape[static_cast<size_t>(d)] == 0) return;
  std::vector<int64_t> idx(static_cast<size_t>(nd), 0);
  int64_t src = 0;
  for (int64_t lin = 0;; ++lin) {
    f(lin, src);
    int d = nd - 1;
    for (; d >= 0; --d) {
      idx[static_cast<size_t>(d)]++;
      src += src_strides[static_cast<size_t>(d)];
      if (idx[static_cast<size_t>(d)] < shape[static_cast<size_t>(d)]) break;
      src -= src_strides[static_cast<size_t>(d)] * shape[static_cast<size_t>(d)];
      idx[static_cast<size_t>(d)] = 0;
    }
    if (d < 0) break;
  }
}

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

// Splits a shape at `axis` into outer / axis / inner extents.
inline void axis_split(const Shape& shape, int64_t axis, int64_t* outer, int64_t* len,
                       int64_t* inner) {
  check_shape(axis >= 0 && axis < static_cast<int64_t>(shape.size()),
              "axis " + std::to_string(axis) + " out of range for " + shape_str(shape));
  *outer = 1;
  *inner = 1;
  for (int64_t i = 0; i < axis; ++i) *outer *= shape[static_cast<size_t>(i)];
  *len = shape[static_cast<size_t>(axis)];
  for (size_t i = static_cast<size_t>(axis) + 1; i < shape.size(); ++i) *inner *= shape[i];
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise
// ---------------------------------------------------------------------------

namespace detail {

enum class BinKind { kSame, kLhsScalar, kRhsScalar };

template <typename T>
BinKind binary_kind(const Tensor<T>& a, const Tensor<T>& b, const char* name) {
  if (a.shape() == b.shape()) return BinKind::kSame;
  if (a.numel() == 1) return BinKind::kLhsScalar;
  if (b.numel() == 1) return BinKind::kRhsScalar;
  throw ShapeError(std::string(name) + ": shapes " + shape_str(a.shape()) + " and " +
                   shape_str(b.shape()) + " do not match");
}

}  // namespace detail

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  auto kind = detail::binary_kind(a, b, "add");
  auto ctx = detail::op_context(a, b);
  const Shape& os = kind == detail::BinKind::kLhsScalar ? b.shape() : a.shape();
  Tensor<T> out(os);
  const int64_t n = out.numel();
  const T* pa = a.data();
  const T* pb = b.data();
  T* po = out.data();
  for (int64_t i = 0; i < n; ++i)
    po[i] = pa[kind == detail::BinKind::kLhsScalar ? 0 : i] +
            pb[kind == detail::BinKind::kRhsScalar ? 0 : i];
  detail::record_op(
      "add", ctx, out,
      [a, b, out, kind, n]() mutable {
        const T* go = out.grad_ptr();
        if (!go) return;
        if (a.requires_grad()) {
          T* ga = a.grad_accum();
          if (kind == detail::BinKind::kLhsScalar) {
            T s = 0;
            for (int64_t i = 0; i < n; ++i) s += go[i];
            ga[0] += s;
          } else {
            for (int64_t i = 0; i < n; ++i) ga[i] += go[i];
          }
        }
        if (b.requires_grad()) {
          T* gb = b.grad_accum();
          if (kind == detail::BinKind::kRhsScalar) {
            T s = 0;
            for (int64_t i = 0; i < n; ++i) s += go[i];
            gb[0] += s;
          } else {
            for (int64_t i = 0; i < n; ++i) gb[i] += go[i];
          }
        }
      },
      {a, b});
  return out;
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  auto kind = detail::binary_kind(a, b, "sub");
  auto ctx = detail::op_context(a, b);
  const Shape& os = kind == detail::BinKind::kLhsScalar ? b.shape() : a.shape();
  Tensor<T> out(os);
  const int64_t n = out.numel();
  const T* pa = a.data();
  const T* pb = b.data();
  T* po = out.data();
  for (int64_t i = 0; i < n; ++i)
    po[i] = pa[kind == detail::BinKind::kLhsScalar ? 0 : i] -
            pb[kind == detail::BinKind::kRhsScalar ? 0 : i];
  detail::record_op(
      "sub", ctx, out,
      [a, b, out, kind, n]() mutable {
        const T* go = out.grad_ptr();
        if (!go) return;
        if (a.requires_grad()) {
          T* ga = a.grad_accum();
          if (kind == detail::BinKind::kLhsScalar) {
            T s = 0;
            for (int64_t i = 0; i < n; ++i) s += go[i];
            ga[0] += s;
          } else {
            for (int64_t i = 0; i < n; ++i) ga[i] += go[i];
          }
        }
        if (b.requires_grad()) {
          T* gb = b.grad_accum();
          if (kind == detail::BinKind::kRhsScalar) {
            T s = 0;
            for (int64_t i = 0; i < n; ++i) s += go[i];
            gb[0] -= s;
          } else {
            for (int64_t i = 0; i < n; ++i) gb[i] -= go[i];
          }
        }
      },
      {a, b});
  return out;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  auto kind = detail::binary_kind(a, b, "mul");
  auto ctx = detail::op_context(a, b);
  const Shape& os = kind == detail::BinKind::kLhsScalar ? b.shape() : a.shape();
  Tensor<T> out(os);
  const int64_t n = out.numel();
  const T* pa = a.data();
  const T* pb = b.data();
  T* po = out.data();
  for (int64_t i = 0; i < n; ++i)
    po[i] = pa[kind == detail::BinKind::kLhsScalar ? 0 : i] *
            pb[kind == detail::BinKind::kRhsScalar ? 0 : i];
  detail::record_op(
      "mul", ctx, out,
      [a, b, out, kind, n]() mutable {
        const T* go = out.grad_ptr();
        if (!go) return;
        const T* pa = a.data();
        const T* pb = b.data();
        if (a.requires_grad()) {
          T* ga = a.grad_accum();
          if (kind == detail::BinKind::kLhsScalar) {
            T s = 0;
            for (int64_t i = 0; i < n; ++i) s += go[i] * pb[i];
            ga[0] += s;
          } else {
            for (int64_t i = 0; i < n; ++i)
              ga[i] += go[i] * pb[kind == detail::BinKind::kRhsScalar ? 0 : i];
          }
        }
        if (b.requires_grad()) {
          T* gb = b.grad_accum();
          if (kind == detail::BinKind::kRhsScalar) {
            T s = 0;
            for (int64_t i = 0; i < n; ++i) s += go[i] * pa[i];
            gb[0] += s;
          } else {
            for (int64_t i = 0; i < n; ++i)
              gb[i] += go[i] * pa[kind == detail::BinKind::kLhsScalar ? 0 : i];
          }
        }
      },
      {a, b});
  return out;
}

template <typename T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) {
  auto kind = detail::binary_kind(a, b, "div");
  auto ctx = detail::op_context(a, b);
  const Shape& os = kind == detail::BinKind::kLhsScalar ? b.shape() : a.shape();
  Tensor<T> out(os);
  const int64_t n = out.numel();
  const T* pa = a.data();
  const T* pb = b.data();
  T* po = out.data();
  for (int64_t i = 0; i < n; ++i)
    po[i] = pa[kind == detail::BinKind::kLhsScalar ? 0 : i] /
            pb[kind == detail::BinKind::kRhsScalar ? 0 : i];
  detail::record_op(
      "div", ctx, out,
      [a, b, out, kind, n]() mutable {
        const T* go = out.grad_ptr();
        if (!go) return;
        const T* pa = a.data();
        const T* pb = b.data();
        if (a.requires_grad()) {
          T* ga = a.grad_accum();
          if (kind == detail::BinKind::kLhsScalar) {
            T s = 0;
            for (int64_t i = 0; i < n; ++i) s += go[i] / pb[i];
            ga[0] += s;
          } else {
            for (int64_t i = 0; i < n; ++i)
              ga[i] += go[i] / pb[kind == detail::BinKind::kRhsScalar ? 0 : i];
          }
        }
        if (b.requires_grad()) {
          T* gb = b.grad_accum();
          if (kind == detail::BinKind::kRhsScalar) {
            T s = 0;
            for (int64_t i = 0; i < n; ++i) s -= go[i] * pa[i] / (pb[0] * pb[0]);
            gb[0] += s;
          } else {
            for (int64_t i = 0; i < n; ++i) {
              const T bi = pb[i];
              gb[i] -= go[i] * pa[kind == detail::BinKind::kLhsScalar ? 0 : i] / (bi * bi);
            }
          }
        }
      },
      {a, b});
  return out;
}

template <typename T>
Tensor<T> mul_const(const Tensor<T>& a, T c) {
  auto ctx = detail::op_context(a);
  Tensor<T> out(a.shape());
  const int64_t n = a.numel();
  const T* pa = a.data();
  T* po = out.data();
  for (int64_t i = 0; i < n; ++i) po[i] = pa[i] * c;
  detail::record_op(
      "mul_const", ctx, out,
      [a, out, c, n]() mutable {
        const T* go = out.grad_ptr();
        if (!go || !a.requires_grad()) return;
        T* ga = a.grad_accum();
        for (int64_t i = 0; i < n; ++i) ga[i] += go[i] * c;
      },
      {a});
  return out;
}

template <typename T>
Tensor<T> add_const(const Tensor<T>& a, T c) {
  auto ctx = detail::op_context(a);
  Tensor<T> out(a.shape());
  const int64_t n = a.numel();
  const T* pa = a.data();
  T* po = out.data();
  for (int64_t i = 0; i < n; ++i) po[i] = pa[i] + c;
  detail::record_op(
      "add_const", ctx, out,
      [a, out, n]() mutable {
        const T* go = out.grad_ptr();
        if (!go || !a.requires_grad()) return;
        T* ga = a.grad_accum();
        for (int64_t i = 0; i < n; ++i) ga[i] += go[i];
      },
      {a});
  return out;
}

template <typename T>
Tensor<T> neg(const Tensor<T>& a) {
  return mul_const(a, T(-1));
}

template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
  auto ctx = detail::op_context(a);
  Tensor<T> out(a.shape());
  const int64_t n = a.numel();
  const T* pa = a.data();
  T* po = out.data();
  for (int64_t i = 0; i < n; ++i) po[i] = pa[i] > T(0) ? pa[i] : T(0);
  detail::record_op(
      "relu", ctx, out,
      [a, out, n]() mutable {
        const T* go = out.grad_ptr();
        if (!go || !a.requires_grad()) return;
        const T* pa = a.data();
        T* ga = a.grad_accum();
        for (int64_t i = 0; i < n; ++i)
          if (pa[i] > T(0)) ga[i] += go[i];
      },
      {a});
  return out;
}

template <typename T>
Tensor<T> abs_op(const Tensor<T>& a) {
  auto ctx = detail::op_context(a);
  Tensor<T> out(a.shape());
  const int64_t n = a.numel();
  const T* pa = a.data();
  T* po = out.data();
  for (int64_t i = 0; i < n; ++i) po[i] = std::abs(pa[i]);
  detail::record_op(
      "abs", ctx, out,
      [a, out, n]() mutable {
        const T* go = out.grad_ptr();
        if (!go || !a.requires_grad()) return;
        const T* pa = a.data();
        T* ga = a.grad_accum();
        for (int64_t i = 0; i < n; ++i) {
          if (pa[i] > T(0))
            ga[i] += go[i];
          else if (pa[i] < T(0))
            ga[i] -= go[i];
        }
      },
      {a});
  return out;
}

template <typename T>
Tensor<T> sqrt_op(const Tensor<T>& a) {
  auto ctx = detail::op_context(a);
  Tensor<T> out(a.shape());
  const int64_t n = a.numel();
  const T* pa = a.data();
  T* po = out.data();
  for (int64_t i = 0; i < n; ++i) po[i] = std::sqrt(pa[i]);
  detail::record_op(
      "sqrt", ctx, out,
      [a, out, n]() mutable {
        const T* go = out.grad_ptr();
        if (!go || !a.requires_grad()) return;
        const T* py = out.data();
        T* ga = a.grad_accum();
        for (int64_t i = 0; i < n; ++i) ga[i] += go[i] * T(0.5) / py[i];
      },
      {a});
  return out;
}

template <typename T>
Tensor<T> log_op(const Tensor<T>& a) {
  auto ctx = detail::op_context(a);
  Tensor<T> out(a.shape());
  const int64_t n = a.numel();
  const T* pa = a.data();
  T* po = out.data();
  for (int64_t i = 0; i < n; ++i) po[i] = std::log(pa[i]);
  detail::record_op(
      "log", ctx, out,
      [a, out, n]() mutable {
        const T* go = out.grad_ptr();
        if (!go || !a.requires_grad()) return;
        const T* pa = a.data();
        T* ga = a.grad_accum();
        for (int64_t i = 0; i < n; ++i) ga[i] += go[i] / pa[i];
      },
      {a});
  return out;
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  auto ctx = detail::op_context(a);
  const int64_t n = a.numel();
  const T* pa = a.data();
  T acc = 0;
  for (int64_t i = 0; i < n; ++i) acc += pa[i];  // fixed row-major order
  Tensor<T> out = Tensor<T>::scalar(acc);
  detail::record_op(
      "sum", ctx, out,
      [a, out, n]() mutable {
        const T* go = out.grad_ptr();
        if (!go || !a.requires_grad()) return;
        T* ga = a.grad_accum();
        for (int64_t i = 0; i < n; ++i) ga[i] += go[0];
      },
      {a});
  return out;
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a) {
  check_shape(a.numel() > 0, "mean of empty tensor");
  return mul_const(sum(a), T(1) / static_cast<T>(a.numel()));
}

template <typename T>
Tensor<T> dot(const Tensor<T>& a, const Tensor<T>& b) {
  check_shape(a.shape() == b.shape(), "dot: shapes differ");
  auto ctx = detail::op_context(a, b);
  const int64_t n = a.numel();
  const T* pa = a.data();
  const T* pb = b.data();
  T acc = 0;
  for (int64_t i = 0; i < n; ++i) acc += pa[i] * pb[i];
  Tensor<T> out = Tensor<T>::scalar(acc);
  detail::record_op(
      "dot", ctx, out,
      [a, b, out, n]() mutable {
        const T* go = out.grad_ptr();
        if (!go) return;
        const T g = go[0];
        if (a.requires_grad()) {
          T* ga = a.grad_accum();
          const T* pb = b.data();
          for (int64_t i = 0; i < n; ++i) ga[i] += g * pb[i];
        }
        if (b.requires_grad()) {
          T* gb = b.grad_accum();
          const T* pa = a.data();
          for (int64_t i = 0; i < n; ++i) gb[i] += g * pa[i];
        }
      },
      {a, b});
  return out;
}

template <typename T>
Tensor<T> sum_axis(const Tensor<T>& a, int64_t axis) {
  int64_t outer, len, inner;
  detail::axis_split(a.shape(), axis, &outer, &len, &inner);
  auto ctx = detail::op_context(a);
  Shape os = a.shape();
  os.erase(os.begin() + axis);
  Tensor<T> out(os);
  const T* pa = a.data();
  T* po = out.data();
  for (int64_t o = 0; o < outer; ++o)
    for (int64_t l = 0; l < len; ++l)
      for (int64_t i = 0; i < inner; ++i) po[o * inner + i] += pa[(o * len + l) * inner + i];
  detail::record_op(
      "sum_axis", ctx, out,
      [a, out, outer, len, inner]() mutable {
        const T* go = out.grad_ptr();
        if (!go || !a.requires_grad()) return;
        T* ga = a.grad_accum();
        for (int64_t o = 0; o < outer; ++o)
          for (int64_t l = 0; l < len; ++l)
            for (int64_t i = 0; i < inner; ++i)
              ga[(o * len + l) * inner + i] += go[o * inner + i];
      },
      {a});
  return out;
}

template <typename T>
Tensor<T> mean_axis(const Tensor<T>& a, int64_t axis) {
  const int64_t len = a.size(axis);
  return mul_const(sum_axis(a, axis), T(1) / static_cast<T>(len));
}

// ---------------------------------------------------------------------------
// Shape ops
// ---------------------------------------------------------------------------

// Shares storage; gradients flow through the shared buffer with no record.
template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
  return a.reshaped_view(std::move(shape));
}

template <typename T>
Tensor<T> permute(const Tensor<T>& a, const std::vector<int64_t>& perm) {
  const int64_t nd = a.ndim();
  check_shape(static_cast<int64_t>(perm.size()) == nd, "permute: rank mismatch");
  std::vector<char> seen(static_cast<size_t>(nd), 0);
  Shape os(static_cast<size_t>(nd));
  Shape in_strides = a.strides();
  Shape walk_strides(static_cast<size_t>(nd));
  for (int64_t i = 0; i < nd; ++i) {
    int64_t p = perm[static_cast<size_t>(i)];
    check_shape(p >= 0 && p < nd && !seen[static_cast<size_t>(p)], "permute: invalid axes");
    seen[static_cast<size_t>(p)] = 1;
    os[static_cast<size_t>(i)] = a.size(p);
    walk_strides[static_cast<size_t>(i)] = in_strides[static_cast<size_t>(p)];
  }
  auto ctx = detail::op_context(a);
  Tensor<T> out(os);
  const T* pa = a.data();
  T* po = out.data();
  detail::odometer_walk(os, walk_strides, [&](int64_t lin, int64_t src) { po[lin] = pa[src]; });
  detail::record_op(
      "permute", ctx, out,
      [a, out, os, walk_strides]() mutable {
        const T* go = out.grad_ptr();
        if (!go || !a.requires_grad()) return;
        T* ga = a.grad_accum();
        detail::odometer_walk(os, walk_strides,
                              [&](int64_t lin, int64_t src) { ga[src] += go[lin]; });
      },
      {a});
  return out;
}

template <typename T>
Tensor<T> slice(const Tensor<T>& a, int64_t axis, int64_t start, int64_t len) {
  int64_t outer, alen, inner;
  detail::axis_split(a.shape(), axis, &outer, &alen, &inner);
  check_shape(start >= 0 && len >= 0 && start + len <= alen,
              "slice [" + std::to_string(start) + "," + std::to_string(start + len) +
                  ") out of range for axis extent " + std::to_string(alen));
  Shape os = a.shape();
  os[static_cast<size_t>(axis)] = len;
  auto ctx = detail::op_context(a);
  Tensor<T> out(os);
  const T* pa = a.data();
  T* po = out.data();
  for (int64_t o = 0; o < outer; ++o)
    std::copy_n(pa + (o * alen + start) * inner, len * inner, po + o * len * inner);
  detail::record_op(
      "slice", ctx, out,
      [a, out, outer, alen, inner, start, len]() mutable {
        const T* go = out.grad_ptr();
        if (!go || !a.requires_grad()) return;
        T* ga = a.grad_accum();
        for (int64_t o = 0; o < outer; ++o) {
          const T* src = go + o * len * inner;
          T* dst = ga + (o * alen + start) * inner;
          for (int64_t i = 0; i < len * inner; ++i) dst[i] += src[i];
        }
      },
      {a});
  return out;
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& xs, int64_t axis) {
  check_shape(!xs.empty(), "concat of empty list");
  Shape os = xs[0].shape();
  int64_t total = 0;
  for (const auto& x : xs) {
    check_shape(x.ndim() == xs[0].ndim(), "concat: rank mismatch");
    for (int64_t d = 0; d < x.ndim(); ++d)
      if (d != axis)
        check_shape(x.size(d) == xs[0].size(d), "concat: extent mismatch on axis " +
                                                    std::to_string(d));
    total += x.size(axis);
  }
  os[static_cast<size_t>(axis)] = total;
  detail::OpContext<T> ctx;
  for (const auto& x : xs) ctx.absorb(x);
  Tensor<T> out(os);
  int64_t outer, tlen, inner;
  detail::axis_split(os, axis, &outer, &tlen, &inner);
  T* po = out.data();
  int64_t off = 0;
  for (const auto& x : xs) {
    const int64_t xl = x.size(axis);
    const T* px = x.data();
    for (int64_t o = 0; o < outer; ++o)
      std::copy_n(px + o * xl * inner, xl * inner, po + (o * tlen + off) * inner);
    off += xl;
  }
  if (ctx.tape && ctx.needs_grad) {
    auto xs_copy = xs;
    Tensor<T> out_c = out;
    std::vector<std::shared_ptr<typename Tensor<T>::Storage>> ins;
    for (const auto& x : xs)
      if (x.requires_grad()) ins.push_back(x.storage());
    out.set_requires_grad(true);
    out.storage()->tape = ctx.tape;
    ctx.tape->note_output(out.storage());
    ctx.tape->add_record(
        "concat",
        [xs_copy, out_c, outer, tlen, inner, axis]() mutable {
          const T* go = out_c.grad_ptr();
          if (!go) return;
          int64_t off = 0;
          for (auto& x : xs_copy) {
            const int64_t xl = x.size(axis);
            if (x.requires_grad()) {
              T* gx = x.grad_accum();
              for (int64_t o = 0; o < outer; ++o) {
                const T* src = go + (o * tlen + off) * inner;
                for (int64_t i = 0; i < xl * inner; ++i) gx[o * xl * inner + i] += src[i];
              }
            }
            off += xl;
          }
        },
        std::move(ins));
  }
  return out;
}

// Explicit broadcast: axes with extent 1 in `a` may expand to the target.
template <typename T>
Tensor<T> broadcast_to(const Tensor<T>& a, const Shape& target) {
  check_shape(a.ndim() == static_cast<int64_t>(target.size()),
              "broadcast_to: rank mismatch " + shape_str(a.shape()) + " -> " +
                  shape_str(target));
  Shape in_strides = a.strides();
  Shape walk(static_cast<size_t>(a.ndim()));
  for (int64_t d = 0; d < a.ndim(); ++d) {
    if (a.size(d) == target[static_cast<size_t>(d)])
      walk[static_cast<size_t>(d)] = in_strides[static_cast<size_t>(d)];
    else if (a.size(d) == 1)
      walk[static_cast<size_t>(d)] = 0;
    else
      throw ShapeError("broadcast_to: cannot expand " + shape_str(a.shape()) + " to " +
                       shape_str(target));
  }
  auto ctx = detail::op_context(a);
  Tensor<T> out(target);
  const T* pa = a.data();
  T* po = out.data();
  detail::odometer_walk(target, walk, [&](int64_t lin, int64_t src) { po[lin] = pa[src]; });
  detail::record_op(
      "broadcast_to", ctx, out,
      [a, out, target, walk]() mutable {
        const T* go = out.grad_ptr();
        if (!go || !a.requires_grad()) return;
        T* ga = a.grad_accum();
        detail::odometer_walk(target, walk,
                              [&](int64_t lin, int64_t src) { ga[src] += go[lin]; });
      },
      {a});
  return out;
}

// ---------------------------------------------------------------------------
// Linear algebra (Eigen-backed kernels)
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  check_shape(a.ndim() == 2 && b.ndim() == 2, "matmul expects 2-d operands");
  check_shape(a.size(1) == b.size(0), "matmul: inner extents differ: " +
                                          shape_str(a.shape()) + " x " + shape_str(b.shape()));
  const int64_t m = a.size(0), k = a.size(1), n = b.size(1);
  auto ctx = detail::op_context(a, b);
  Tensor<T> out({m, n});
  detail::ConstMatMap<T> ma(a.data(), m, k);
  detail::ConstMatMap<T> mb(b.data(), k, n);
  detail::MatMap<T> mo(out.data(), m, n);
  mo.noalias() = ma * mb;
  detail::record_op(
      "matmul", ctx, out,
      [a, b, out, m, k, n]() mutable {
        const T* go = out.grad_ptr();
        if (!go) return;
        detail::ConstMatMap<T> mg(go, m, n);
        if (a.requires_grad()) {
          detail::MatMap<T> ga(a.grad_accum(), m, k);
          detail::ConstMatMap<T> mb(b.data(), k, n);
          ga.noalias() += mg * mb.transpose();
        }
        if (b.requires_grad()) {
          detail::MatMap<T> gb(b.grad_accum(), k, n);
          detail::ConstMatMap<T> ma(a.data(), m, k);
          gb.noalias() += ma.transpose() * mg;
        }
      },
      {a, b});
  return out;
}

// y[..., out] = x[..., in] * w[out, in]^T + b[out]
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  check_shape(x.ndim() >= 1 && w.ndim() == 2, "linear: bad ranks");
  const int64_t in = x.size(x.ndim() - 1);
  const int64_t out_dim = w.size(0);
  check_shape(w.size(1) == in, "linear: weight " + shape_str(w.shape()) +
                                   " does not accept input " + shape_str(x.shape()));
  check_shape(b.numel() == out_dim, "linear: bias extent mismatch");
  const int64_t rows = x.numel() / in;
  auto ctx = detail::op_context(x, w, b);
  Shape os = x.shape();
  os.back() = out_dim;
  Tensor<T> out(os);
  detail::ConstMatMap<T> mx(x.data(), rows, in);
  detail::ConstMatMap<T> mw(w.data(), out_dim, in);
  detail::MatMap<T> mo(out.data(), rows, out_dim);
  mo.noalias() = mx * mw.transpose();
  Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> mb(b.data(), out_dim);
  mo.rowwise() += mb;
  detail::record_op(
      "linear", ctx, out,
      [x, w, b, out, rows, in, out_dim]() mutable {
        const T* go = out.grad_ptr();
        if (!go) return;
        detail::ConstMatMap<T> mg(go, rows, out_dim);
        if (x.requires_grad()) {
          detail::MatMap<T> gx(x.grad_accum(), rows, in);
          detail::ConstMatMap<T> mw(w.data(), out_dim, in);
          gx.noalias() += mg * mw;
        }
        if (w.requires_grad()) {
          detail::MatMap<T> gw(w.grad_accum(), out_dim, in);
          detail::ConstMatMap<T> mx(x.data(), rows, in);
          gw.noalias() += mg.transpose() * mx;
        }
        if (b.requires_grad()) {
          Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>> gb(b.grad_accum(), out_dim);
          gb += mg.colwise().sum();
        }
      },
      {x, w, b});
  return out;
}

// Batched matmul: [B,m,k] x [B,k,n] -> [B,m,n]
template <typename T>
Tensor<T> bmm(const Tensor<T>& a, const Tensor<T>& b) {
  check_shape(a.ndim() == 3 && b.ndim() == 3, "bmm expects 3-d operands");
  check_shape(a.size(0) == b.size(0) && a.size(2) == b.size(1),
              "bmm: shapes " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  const int64_t bs = a.size(0), m = a.size(1), k = a.size(2), n = b.size(2);
  auto ctx = detail::op_context(a, b);
  Tensor<T> out({bs, m, n});
  const T* pa = a.data();
  const T* pb = b.data();
  T* po = out.data();
  parallel_for(bs, [&](int64_t i) {
    detail::ConstMatMap<T> ma(pa + i * m * k, m, k);
    detail::ConstMatMap<T> mb(pb + i * k * n, k, n);
    detail::MatMap<T> mo(po + i * m * n, m, n);
    mo.noalias() = ma * mb;
  });
  detail::record_op(
      "bmm", ctx, out,
      [a, b, out, bs, m, k, n]() mutable {
        const T* go = out.grad_ptr();
        if (!go) return;
        const bool ga_need = a.requires_grad();
        const bool gb_need = b.requires_grad();
        T* ga = ga_need ? a.grad_accum() : nullptr;
        T* gb = gb_need ? b.grad_accum() : nullptr;
        const T* pa = a.data();
        const T* pb = b.data();
        parallel_for(bs, [&](int64_t i) {
          detail::ConstMatMap<T> mg(go + i * m * n, m, n);
          if (ga_need) {
            detail::MatMap<T> mga(ga + i * m * k, m, k);
            detail::ConstMatMap<T> mb(pb + i * k * n, k, n);
            mga.noalias() += mg * mb.transpose();
          }
          if (gb_need) {
            detail::MatMap<T> mgb(gb + i * k * n, k, n);
            detail::ConstMatMap<T> ma(pa + i * m * k, m, k);
            mgb.noalias() += ma.transpose() * mg;
          }
        });
      },
      {a, b});
  return out;
}

// ---------------------------------------------------------------------------
// Neural-net primitives
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> softmax_lastdim(const Tensor<T>& a) {
  check_shape(a.ndim() >= 1, "softmax on rank-0 tensor");
  const int64_t cols = a.size(a.ndim() - 1);
  const int64_t rows = a.numel() / cols;
  auto ctx = detail::op_context(a);
  Tensor<T> out(a.shape());
  const T* pa = a.data();
  T* po = out.data();
  for (int64_t r = 0; r < rows; ++r) {
    const T* x = pa + r * cols;
    T* y = po + r * cols;
    T mx = x[0];
    for (int64_t i = 1; i < cols; ++i) mx = std::max(mx, x[i]);
    T s = 0;
    for (int64_t i = 0; i < cols; ++i) {
      y[i] = std::exp(x[i] - mx);
      s += y[i];
    }
    const T inv = T(1) / s;
    for (int64_t i = 0; i < cols; ++i) y[i] *= inv;
  }
  detail::record_op(
      "softmax", ctx, out,
      [a, out, rows, cols]() mutable {
        const T* go = out.grad_ptr();
        if (!go || !a.requires_grad()) return;
        const T* py = out.data();
        T* ga = a.grad_accum();
        for (int64_t r = 0; r < rows; ++r) {
          const T* y = py + r * cols;
          const T* g = go + r * cols;
          T dotv = 0;
          for (int64_t i = 0; i < cols; ++i) dotv += g[i] * y[i];
          T* gx = ga + r * cols;
          for (int64_t i = 0; i < cols; ++i) gx[i] += (g[i] - dotv) * y[i];
        }
      },
      {a});
  return out;
}

// Normalizes each slice taken along `axis` to zero mean / unit variance
// (population variance + eps), then applies the per-position affine pair.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, int64_t axis, const Tensor<T>& gain,
                     const Tensor<T>& bias, T eps) {
  int64_t outer, len, inner;
  detail::axis_split(x.shape(), axis, &outer, &len, &inner);
  check_shape(gain.numel() == len && bias.numel() == len,
              "layer_norm: gain/bias extent " + std::to_string(gain.numel()) +
                  " does not match axis extent " + std::to_string(len));
  auto ctx = detail::op_context(x, gain, bias);
  Tensor<T> out(x.shape());
  const T* px = x.data();
  const T* pg = gain.data();
  const T* pb = bias.data();
  T* po = out.data();
  // Per-slice inverse stddev, kept for the backward pass.
  auto invstd = std::make_shared<std::vector<T>>(static_cast<size_t>(outer * inner));
  auto means = std::make_shared<std::vector<T>>(static_cast<size_t>(outer * inner));
  for (int64_t o = 0; o < outer; ++o) {
    for (int64_t i = 0; i < inner; ++i) {
      const int64_t base = o * len * inner + i;
      T mu = 0;
      for (int64_t l = 0; l < len; ++l) mu += px[base + l * inner];
      mu /= static_cast<T>(len);
      T var = 0;
      for (int64_t l = 0; l < len; ++l) {
        const T d = px[base + l * inner] - mu;
        var += d * d;
      }
      var /= static_cast<T>(len);
      const T is = T(1) / std::sqrt(var + eps);
      (*means)[static_cast<size_t>(o * inner + i)] = mu;
      (*invstd)[static_cast<size_t>(o * inner + i)] = is;
      for (int64_t l = 0; l < len; ++l) {
        const T xh = (px[base + l * inner] - mu) * is;
        po[base + l * inner] = xh * pg[l] + pb[l];
      }
    }
  }
  detail::record_op(
      "layer_norm", ctx, out,
      [x, gain, bias, out, outer, len, inner, means, invstd]() mutable {
        const T* go = out.grad_ptr();
        if (!go) return;
        const T* px = x.data();
        const T* pg = gain.data();
        const bool need_x = x.requires_grad();
        const bool need_g = gain.requires_grad();
        const bool need_b = bias.requires_grad();
        T* gx = need_x ? x.grad_accum() : nullptr;
        T* gg = need_g ? gain.grad_accum() : nullptr;
        T* gb = need_b ? bias.grad_accum() : nullptr;
        for (int64_t o = 0; o < outer; ++o) {
          for (int64_t i = 0; i < inner; ++i) {
            const int64_t base = o * len * inner + i;
            const T mu = (*means)[static_cast<size_t>(o * inner + i)];
            const T is = (*invstd)[static_cast<size_t>(o * inner + i)];
            T sum_dxh = 0, sum_dxh_xh = 0;
            for (int64_t l = 0; l < len; ++l) {
              const T xh = (px[base + l * inner] - mu) * is;
              const T dxh = go[base + l * inner] * pg[l];
              sum_dxh += dxh;
              sum_dxh_xh += dxh * xh;
              if (need_g) gg[l] += go[base + l * inner] * xh;
              if (need_b) gb[l] += go[base + l * inner];
            }
            if (need_x) {
              const T inv_len = T(1) / static_cast<T>(len);
              for (int64_t l = 0; l < len; ++l) {
                const T xh = (px[base + l * inner] - mu) * is;
                const T dxh = go[base + l * inner] * pg[l];
                gx[base + l * inner] +=
                    (dxh - sum_dxh * inv_len - xh * sum_dxh_xh * inv_len) * is;
              }
            }
          }
        }
      },
      {x, gain, bias});
  return out;
}

// PReLU with one learnable slope per position along `axis`.
template <typename T>
Tensor<T> prelu(const Tensor<T>& x, const Tensor<T>& slope, int64_t axis) {
  int64_t outer, len, inner;
  detail::axis_split(x.shape(), axis, &outer, &len, &inner);
  check_shape(slope.numel() == len, "prelu: slope extent " + std::to_string(slope.numel()) +
                                        " does not match axis extent " + std::to_string(len));
  auto ctx = detail::op_context(x, slope);
  Tensor<T> out(x.shape());
  const T* px = x.data();
  const T* ps = slope.data();
  T* po = out.data();
  for (int64_t o = 0; o < outer; ++o)
    for (int64_t l = 0; l < len; ++l) {
      const T s = ps[l];
      const T* xi = px + (o * len + l) * inner;
      T* yo = po + (o * len + l) * inner;
      for (int64_t i = 0; i < inner; ++i) yo[i] = xi[i] >= T(0) ? xi[i] : s * xi[i];
    }
  detail::record_op(
      "prelu", ctx, out,
      [x, slope, out, outer, len, inner]() mutable {
        const T* go = out.grad_ptr();
        if (!go) return;
        const T* px = x.data();
        const T* ps = slope.data();
        const bool need_x = x.requires_grad();
        const bool need_s = slope.requires_grad();
        T* gx = need_x ? x.grad_accum() : nullptr;
        T* gs = need_s ? slope.grad_accum() : nullptr;
        for (int64_t o = 0; o < outer; ++o)
          for (int64_t l = 0; l < len; ++l) {
            const T s = ps[l];
            const int64_t base = (o * len + l) * inner;
            for (int64_t i = 0; i < inner; ++i) {
              const T xv = px[base + i];
              const T g = go[base + i];
              if (xv >= T(0)) {
                if (need_x) gx[base + i] += g;
              } else {
                if (need_x) gx[base + i] += g * s;
                if (need_s) gs[l] += g * xv;
              }
            }
          }
      },
      {x, slope});
  return out;
}

}  // namespace uses

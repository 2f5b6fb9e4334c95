// Copyright 2026 The uses-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// 2D convolution and transposed convolution, NCHW layout.
// conv_transpose2d's forward is literally the adjoint (backward-by-input)
// of conv2d with the same kernel, so the inner-product identity
// <conv(x,k), y> == <x, convT(y,k)> holds by construction.

#pragma once

#include <string>

#include "uses/tensor.hpp"

namespace uses {

namespace detail {

// y[b,co,oh,ow] += sum_{ci,kh,kw} x[b,ci,oh*sh-ph+kh, ow*sw-pw+kw] * k[co,ci,kh,kw]
template <typename T>
void conv2d_gather(const T* x, const T* k, T* y, int64_t B, int64_t Cin, int64_t H, int64_t W,
                   int64_t Cout, int64_t kh, int64_t kw, int64_t sh, int64_t sw, int64_t ph,
                   int64_t pw, int64_t Ho, int64_t Wo) {
  for (int64_t b = 0; b < B; ++b)
    for (int64_t co = 0; co < Cout; ++co)
      for (int64_t oh = 0; oh < Ho; ++oh)
        for (int64_t ow = 0; ow < Wo; ++ow) {
          T acc = 0;
          for (int64_t ci = 0; ci < Cin; ++ci)
            for (int64_t r = 0; r < kh; ++r) {
              const int64_t ih = oh * sh - ph + r;
              if (ih < 0 || ih >= H) continue;
              for (int64_t c = 0; c < kw; ++c) {
                const int64_t iw = ow * sw - pw + c;
                if (iw < 0 || iw >= W) continue;
                acc += x[((b * Cin + ci) * H + ih) * W + iw] *
                       k[((co * Cin + ci) * kh + r) * kw + c];
              }
            }
          y[((b * Cout + co) * Ho + oh) * Wo + ow] += acc;
        }
}

// Adjoint of conv2d_gather in its input argument:
// x_grad[b,ci,ih,iw] += sum y[b,co,oh,ow] * k[co,ci,kh,kw]
template <typename T>
void conv2d_scatter(const T* y, const T* k, T* x, int64_t B, int64_t Cin, int64_t H, int64_t W,
                    int64_t Cout, int64_t kh, int64_t kw, int64_t sh, int64_t sw, int64_t ph,
                    int64_t pw, int64_t Ho, int64_t Wo) {
  for (int64_t b = 0; b < B; ++b)
    for (int64_t co = 0; co < Cout; ++co)
      for (int64_t oh = 0; oh < Ho; ++oh)
        for (int64_t ow = 0; ow < Wo; ++ow) {
          const T g = y[((b * Cout + co) * Ho + oh) * Wo + ow];
          if (g == T(0)) continue;
          for (int64_t ci = 0; ci < Cin; ++ci)
            for (int64_t r = 0; r < kh; ++r) {
              const int64_t ih = oh * sh - ph + r;
              if (ih < 0 || ih >= H) continue;
              for (int64_t c = 0; c < kw; ++c) {
                const int64_t iw = ow * sw - pw + c;
                if (iw < 0 || iw >= W) continue;
                x[((b * Cin + ci) * H + ih) * W + iw] +=
                    g * k[((co * Cin + ci) * kh + r) * kw + c];
              }
            }
        }
}

// k_grad[co,ci,kh,kw] += sum_b,oh,ow x[...] * y[...]
template <typename T>
void conv2d_kernel_grad(const T* x, const T* y, T* kg, int64_t B, int64_t Cin, int64_t H,
                        int64_t W, int64_t Cout, int64_t kh, int64_t kw, int64_t sh, int64_t sw,
                        int64_t ph, int64_t pw, int64_t Ho, int64_t Wo) {
  for (int64_t b = 0; b < B; ++b)
    for (int64_t co = 0; co < Cout; ++co)
      for (int64_t oh = 0; oh < Ho; ++oh)
        for (int64_t ow = 0; ow < Wo; ++ow) {
          const T g = y[((b * Cout + co) * Ho + oh) * Wo + ow];
          if (g == T(0)) continue;
          for (int64_t ci = 0; ci < Cin; ++ci)
            for (int64_t r = 0; r < kh; ++r) {
              const int64_t ih = oh * sh - ph + r;
              if (ih < 0 || ih >= H) continue;
              for (int64_t c = 0; c < kw; ++c) {
                const int64_t iw = ow * sw - pw + c;
                if (iw < 0 || iw >= W) continue;
                kg[((co * Cin + ci) * kh + r) * kw + c] +=
                    g * x[((b * Cin + ci) * H + ih) * W + iw];
              }
            }
        }
}

}  // namespace detail

// input [B,Cin,H,W], kernel [Cout,Cin,kh,kw], bias [Cout].
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& bias,
                 int64_t stride_h = 1, int64_t stride_w = 1, int64_t pad_h = 0,
                 int64_t pad_w = 0) {
  check_shape(input.ndim() == 4 && kernel.ndim() == 4,
              "conv2d: input " + shape_str(input.shape()) + ", kernel " +
                  shape_str(kernel.shape()) + " must be 4-d");
  const int64_t B = input.size(0), Cin = input.size(1), H = input.size(2), W = input.size(3);
  const int64_t Cout = kernel.size(0), kh = kernel.size(2), kw = kernel.size(3);
  check_shape(kernel.size(1) == Cin, "conv2d: kernel expects " +
                                         std::to_string(kernel.size(1)) + " input channels, got " +
                                         std::to_string(Cin));
  check_shape(kh >= 1 && kw >= 1, "conv2d: kernel extents must be >= 1");
  check_shape(bias.numel() == Cout, "conv2d: bias extent mismatch");
  check_shape(H + 2 * pad_h >= kh && W + 2 * pad_w >= kw,
              "conv2d: padded input smaller than kernel");
  const int64_t Ho = (H + 2 * pad_h - kh) / stride_h + 1;
  const int64_t Wo = (W + 2 * pad_w - kw) / stride_w + 1;
  check_shape(Ho >= 1 && Wo >= 1, "conv2d: degenerate output shape");
  auto ctx = detail::op_context(input, kernel, bias);
  Tensor<T> out({B, Cout, Ho, Wo});
  T* po = out.data();
  const T* pb = bias.data();
  for (int64_t b = 0; b < B; ++b)
    for (int64_t co = 0; co < Cout; ++co)
      std::fill_n(po + (b * Cout + co) * Ho * Wo, Ho * Wo, pb[co]);
  detail::conv2d_gather(input.data(), kernel.data(), po, B, Cin, H, W, Cout, kh, kw, stride_h,
                        stride_w, pad_h, pad_w, Ho, Wo);
  detail::record_op(
      "conv2d", ctx, out,
      [input, kernel, bias, out, B, Cin, H, W, Cout, kh, kw, stride_h, stride_w, pad_h, pad_w,
       Ho, Wo]() mutable {
        const T* go = out.grad_ptr();
        if (!go) return;
        if (input.requires_grad())
          detail::conv2d_scatter(go, kernel.data(), input.grad_accum(), B, Cin, H, W, Cout, kh,
                                 kw, stride_h, stride_w, pad_h, pad_w, Ho, Wo);
        if (kernel.requires_grad())
          detail::conv2d_kernel_grad(input.data(), go, kernel.grad_accum(), B, Cin, H, W, Cout,
                                     kh, kw, stride_h, stride_w, pad_h, pad_w, Ho, Wo);
        if (bias.requires_grad()) {
          T* gb = bias.grad_accum();
          for (int64_t b = 0; b < B; ++b)
            for (int64_t co = 0; co < Cout; ++co) {
              T s = 0;
              const T* g = go + (b * Cout + co) * Ho * Wo;
              for (int64_t i = 0; i < Ho * Wo; ++i) s += g[i];
              gb[co] += s;
            }
        }
      },
      {input, kernel, bias});
  return out;
}

// input [B,Cin,H,W], kernel [Cin,Cout,kh,kw], bias [Cout].
// Output extent: (H-1)*stride - 2*pad + kh.
template <typename T>
Tensor<T> conv_transpose2d(const Tensor<T>& input, const Tensor<T>& kernel,
                           const Tensor<T>& bias, int64_t stride_h = 1, int64_t stride_w = 1,
                           int64_t pad_h = 0, int64_t pad_w = 0) {
  check_shape(input.ndim() == 4 && kernel.ndim() == 4,
              "conv_transpose2d: operands must be 4-d");
  const int64_t B = input.size(0), Cin = input.size(1), H = input.size(2), W = input.size(3);
  check_shape(kernel.size(0) == Cin, "conv_transpose2d: kernel expects " +
                                         std::to_string(kernel.size(0)) +
                                         " input channels, got " + std::to_string(Cin));
  const int64_t Cout = kernel.size(1), kh = kernel.size(2), kw = kernel.size(3);
  check_shape(bias.numel() == Cout, "conv_transpose2d: bias extent mismatch");
  const int64_t Ho = (H - 1) * stride_h - 2 * pad_h + kh;
  const int64_t Wo = (W - 1) * stride_w - 2 * pad_w + kw;
  check_shape(Ho >= 1 && Wo >= 1, "conv_transpose2d: degenerate output shape");
  auto ctx = detail::op_context(input, kernel, bias);
  Tensor<T> out({B, Cout, Ho, Wo});
  T* po = out.data();
  const T* pb = bias.data();
  for (int64_t b = 0; b < B; ++b)
    for (int64_t co = 0; co < Cout; ++co)
      std::fill_n(po + (b * Cout + co) * Ho * Wo, Ho * Wo, pb[co]);
  // Forward = adjoint of conv2d: scatter with roles of x and y swapped.
  // Here the "conv" maps out-space [B,Cout,Ho,Wo] -> in-space [B,Cin,H,W],
  // with kernel axes reinterpreted as [Cin(out of conv), Cout(in of conv)].
  // conv2d_scatter treats its kernel as [co_conv, ci_conv, kh, kw]; our
  // kernel layout [Cin, Cout, kh, kw] matches with co_conv = Cin.
  detail::conv2d_scatter(input.data(), kernel.data(), po, B, Cout, Ho, Wo, Cin, kh, kw,
                         stride_h, stride_w, pad_h, pad_w, H, W);
  detail::record_op(
      "conv_transpose2d", ctx, out,
      [input, kernel, bias, out, B, Cin, H, W, Cout, kh, kw, stride_h, stride_w, pad_h, pad_w,
       Ho, Wo]() mutable {
        const T* go = out.grad_ptr();
        if (!go) return;
        if (input.requires_grad())
          detail::conv2d_gather(go, kernel.data(), input.grad_accum(), B, Cout, Ho, Wo, Cin, kh,
                                kw, stride_h, stride_w, pad_h, pad_w, H, W);
        if (kernel.requires_grad())
          detail::conv2d_kernel_grad(go, input.data(), kernel.grad_accum(), B, Cout, Ho, Wo,
                                     Cin, kh, kw, stride_h, stride_w, pad_h, pad_w, H, W);
        if (bias.requires_grad()) {
          T* gb = bias.grad_accum();
          for (int64_t b = 0; b < B; ++b)
            for (int64_t co = 0; co < Cout; ++co) {
              T s = 0;
              const T* g = go + (b * Cout + co) * Ho * Wo;
              for (int64_t i = 0; i < Ho * Wo; ++i) s += g[i];
              gb[co] += s;
            }
        }
      },
      {input, kernel, bias});
  return out;
}

}  // namespace uses

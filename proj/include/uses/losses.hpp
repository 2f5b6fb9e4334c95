// Copyright 2026 The uses-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Training losses and evaluation metrics. Metrics run on raw f64 buffers and
// cap at +80 dB; the loss variants build differentiable graphs with small
// eps guards instead of caps.

#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "uses/fft.hpp"
#include "uses/ops.hpp"
#include "uses/stft.hpp"

namespace uses {

inline constexpr double kMetricCapDb = 80.0;

struct LossConfig {
  std::vector<int64_t> mr_windows = {256, 512, 768, 1024};
  double time_weight = 0.5;
  double eps = 1e-8;

  void validate() const {
    check_config(!mr_windows.empty(), "multi-resolution loss needs at least one window");
    check_config(std::is_sorted(mr_windows.begin(), mr_windows.end()),
                 "mr_windows must be sorted");
    for (int64_t w : mr_windows)
      check_config(unsupported_fft_factor(w) == 1,
                   "mr window " + std::to_string(w) + " is not of the form 2^a*3^b");
    check_config(time_weight >= 0.0, "time_weight must be >= 0");
    check_config(eps > 0.0, "eps must be positive");
  }
};

// ---------------------------------------------------------------------------
// Metrics (raw, f64)
// ---------------------------------------------------------------------------

// Scale-invariant SNR in dB: est is projected onto ref; invariant to positive
// rescaling of est. Capped at +80 dB; all-zero ref is undefined.
inline double si_snr(const std::vector<double>& est, const std::vector<double>& ref) {
  check_shape(est.size() == ref.size(), "si_snr: length mismatch");
  double er = 0.0, rr = 0.0;
  for (size_t i = 0; i < est.size(); ++i) {
    er += est[i] * ref[i];
    rr += ref[i] * ref[i];
  }
  if (rr <= 0.0) throw NumericError("si_snr: reference is all-zero");
  const double a = er / rr;
  double tt = 0.0, nn = 0.0;
  for (size_t i = 0; i < est.size(); ++i) {
    const double t = a * ref[i];
    const double n = est[i] - t;
    tt += t * t;
    nn += n * n;
  }
  if (nn <= 0.0) return kMetricCapDb;
  return std::min(10.0 * std::log10(tt / nn), kMetricCapDb);
}

// SI-SNR improvement over the unprocessed mixture.
inline double si_snr_improvement(const std::vector<double>& est, const std::vector<double>& ref,
                                 const std::vector<double>& mix) {
  return si_snr(est, ref) - si_snr(mix, ref);
}

// Plain signal-to-distortion ratio (not the BSS-eval decomposition):
// 10*log10(||ref||^2 / ||ref - est||^2), capped at +80 dB.
inline double sdr(const std::vector<double>& est, const std::vector<double>& ref) {
  check_shape(est.size() == ref.size(), "sdr: length mismatch");
  double rr = 0.0, dd = 0.0;
  for (size_t i = 0; i < est.size(); ++i) {
    rr += ref[i] * ref[i];
    const double d = ref[i] - est[i];
    dd += d * d;
  }
  if (rr <= 0.0) throw NumericError("sdr: reference is all-zero");
  if (dd <= 0.0) return kMetricCapDb;
  return std::min(10.0 * std::log10(rr / dd), kMetricCapDb);
}

// ---------------------------------------------------------------------------
// Differentiable losses
// ---------------------------------------------------------------------------

// Differentiable SI-SNR in dB (eps-guarded instead of capped).
template <typename T>
Tensor<T> si_snr_graph(const Tensor<T>& est, const Tensor<T>& ref, T eps = T(1e-8)) {
  check_shape(est.shape() == ref.shape(), "si_snr: shape mismatch");
  Tensor<T> rr = dot(ref, ref);
  if (rr.item() <= T(0)) throw NumericError("si_snr: reference is all-zero");
  Tensor<T> alpha = div(dot(est, ref), add_const(rr, eps));
  Tensor<T> target = mul(ref, alpha);
  Tensor<T> noise = sub(est, target);
  Tensor<T> num = add_const(dot(target, target), eps);
  Tensor<T> den = add_const(dot(noise, noise), eps);
  const T db = static_cast<T>(10.0 / std::log(10.0));
  return mul_const(sub(log_op(num), log_op(den)), db);
}

template <typename T>
Tensor<T> si_snr_loss(const Tensor<T>& est, const Tensor<T>& ref, T eps = T(1e-8)) {
  return neg(si_snr_graph(est, ref, eps));
}

namespace detail {

// |STFT| magnitudes with a smooth floor so the gradient is defined at zero.
template <typename T>
Tensor<T> magnitude_spectrum(const Tensor<T>& x, int64_t win, T eps) {
  Tensor<T> s = stft_op(x, win, win / 2);
  const int64_t F = s.size(1), frames = s.size(2);
  Tensor<T> re = reshape(slice(s, 0, 0, 1), {F, frames});
  Tensor<T> im = reshape(slice(s, 0, 1, 1), {F, frames});
  return sqrt_op(add_const(add(mul(re, re), mul(im, im)), eps));
}

}  // namespace detail

// Scale-invariant multi-resolution L1: est is least-squares rescaled onto
// ref, then L1 distances between magnitude spectrograms at each window size
// are summed, plus a weighted time-domain L1 term. `alpha_fallback` reports
// the degenerate all-zero-est case (alpha pinned to 1).
template <typename T>
Tensor<T> multi_res_l1_loss(const Tensor<T>& est, const Tensor<T>& ref, const LossConfig& cfg,
                            bool* alpha_fallback = nullptr) {
  cfg.validate();
  check_shape(est.shape() == ref.shape(), "multi_res_l1_loss: shape mismatch");
  const T eps = static_cast<T>(cfg.eps);
  Tensor<T> ee = dot(est, est);
  Tensor<T> alpha;
  bool fallback = ee.item() <= T(0);
  if (fallback)
    alpha = Tensor<T>::scalar(T(1));
  else
    alpha = div(dot(est, ref), ee);
  if (alpha_fallback) *alpha_fallback = fallback;
  Tensor<T> scaled = mul(est, alpha);

  Tensor<T> total = Tensor<T>::scalar(T(0));
  for (int64_t win : cfg.mr_windows) {
    check_shape(est.numel() >= win / 2 + 1,
                "signal too short for mr window " + std::to_string(win));
    Tensor<T> me = detail::magnitude_spectrum(scaled, win, eps);
    Tensor<T> mr = detail::magnitude_spectrum(ref, win, eps);
    total = add(total, mean(abs_op(sub(me, mr))));
  }
  Tensor<T> time_term = mean(abs_op(sub(scaled, ref)));
  return add(total, mul_const(time_term, static_cast<T>(cfg.time_weight)));
}

// ---------------------------------------------------------------------------
// Permutation-invariant training
// ---------------------------------------------------------------------------

template <typename T>
struct PitResult {
  Tensor<T> loss;             // min over permutations of mean(-si_snr)
  std::vector<int64_t> perm;  // perm[i] = index of the reference paired with est i
};

template <typename T>
PitResult<T> pit_si_snr_loss(const std::vector<Tensor<T>>& ests,
                             const std::vector<Tensor<T>>& refs, T eps = T(1e-8)) {
  const int64_t S = static_cast<int64_t>(ests.size());
  check_shape(S >= 1 && static_cast<int64_t>(refs.size()) == S,
              "pit: need equal nonzero source counts");
  check_config(S <= 3, "pit: exhaustive permutations limited to 3 sources");

  // Pairwise -si_snr graph nodes.
  std::vector<std::vector<Tensor<T>>> pair(static_cast<size_t>(S));
  for (int64_t i = 0; i < S; ++i) {
    pair[static_cast<size_t>(i)].reserve(static_cast<size_t>(S));
    for (int64_t j = 0; j < S; ++j)
      pair[static_cast<size_t>(i)].push_back(
          si_snr_loss(ests[static_cast<size_t>(i)], refs[static_cast<size_t>(j)], eps));
  }

  std::vector<int64_t> idx(static_cast<size_t>(S));
  for (int64_t i = 0; i < S; ++i) idx[static_cast<size_t>(i)] = i;
  std::vector<int64_t> best = idx;
  double best_val = 0.0;
  bool first = true;
  do {
    double v = 0.0;
    for (int64_t i = 0; i < S; ++i)
      v += static_cast<double>(pair[static_cast<size_t>(i)][static_cast<size_t>(idx[i])].item());
    v /= static_cast<double>(S);
    if (first || v < best_val) {
      best_val = v;
      best = idx;
      first = false;
    }
  } while (std::next_permutation(idx.begin(), idx.end()));

  Tensor<T> loss = pair[0][static_cast<size_t>(best[0])];
  for (int64_t i = 1; i < S; ++i)
    loss = add(loss, pair[static_cast<size_t>(i)][static_cast<size_t>(best[i])]);
  loss = mul_const(loss, T(1) / static_cast<T>(S));
  return {loss, best};
}

}  // namespace uses

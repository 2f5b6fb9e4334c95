// Copyright 2026 The uses-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Fixed-duration STFT/iSTFT front end: 32 ms windows with 16 ms hop at every
// supported rate, so spectra of the same signal at different rates share the
// frame count while the bin count scales with the rate. Square-root Hann is
// used for both analysis and synthesis (COLA at 50% overlap); frames are
// centered via reflect padding of window/2 on each side.

#pragma once

#include <complex>
#include <memory>
#include <vector>

#include "uses/audio.hpp"
#include "uses/fft.hpp"
#include "uses/tensor.hpp"

namespace uses {

struct StftConfig {
  double window_ms = 32.0;
  double hop_ms = 16.0;

  int64_t window_samples(int sample_rate) const { return duration_to_samples(window_ms, sample_rate); }
  int64_t hop_samples(int sample_rate) const { return duration_to_samples(hop_ms, sample_rate); }

  void validate(int sample_rate) const {
    const int64_t win = window_samples(sample_rate);
    hop_samples(sample_rate);
    const int64_t bad = unsupported_fft_factor(win);
    check_config(bad == 1, "window of " + std::to_string(win) +
                               " samples has unsupported FFT factor " + std::to_string(bad));
  }

 private:
  static int64_t duration_to_samples(double ms, int sample_rate) {
    check_config(sample_rate > 0, "sample rate must be positive");
    const double exact = ms * sample_rate / 1000.0;
    const int64_t n = static_cast<int64_t>(std::llround(exact));
    if (std::abs(exact - static_cast<double>(n)) > 1e-6)
      throw ConfigError("rate " + std::to_string(sample_rate) + " Hz gives a non-integer " +
                        std::to_string(ms) + " ms frame; resample to one of " +
                        supported_rates_str());
    check_config(n >= 1, "frame duration too short for rate");
    return n;
  }
};

// Stacked real/imaginary T-F planes, shape [C][2][F][T] row-major.
struct ComplexSpectrum {
  std::vector<double> data;
  int64_t channels = 0;
  int64_t freqs = 0;
  int64_t frames = 0;
  int sample_rate = 0;
  int64_t num_samples = 0;

  double& re(int64_t c, int64_t f, int64_t t) {
    return data[static_cast<size_t>(((c * 2 + 0) * freqs + f) * frames + t)];
  }
  double& im(int64_t c, int64_t f, int64_t t) {
    return data[static_cast<size_t>(((c * 2 + 1) * freqs + f) * frames + t)];
  }
  double re(int64_t c, int64_t f, int64_t t) const {
    return data[static_cast<size_t>(((c * 2 + 0) * freqs + f) * frames + t)];
  }
  double im(int64_t c, int64_t f, int64_t t) const {
    return data[static_cast<size_t>(((c * 2 + 1) * freqs + f) * frames + t)];
  }
};

namespace detail {

template <typename T>
std::vector<T> sqrt_hann_window(int64_t win) {
  std::vector<T> w(static_cast<size_t>(win));
  for (int64_t j = 0; j < win; ++j) {
    const double h = 0.5 * (1.0 - std::cos(2.0 * M_PI * static_cast<double>(j) /
                                           static_cast<double>(win)));
    w[static_cast<size_t>(j)] = static_cast<T>(std::sqrt(h));
  }
  return w;
}

// Reflect (no edge repeat): -1 -> 1, L -> L-2.
inline int64_t reflect_index(int64_t j, int64_t L) {
  if (L == 1) return 0;
  while (j < 0 || j >= L) {
    if (j < 0) j = -j;
    if (j >= L) j = 2 * L - 2 - j;
  }
  return j;
}

inline int64_t stft_frames(int64_t num_samples, int64_t hop) { return num_samples / hop + 1; }

// Analysis: planes re/im are [F][T] row-major.
template <typename T>
void stft_kernel(const T* x, int64_t L, int64_t win, int64_t hop, const FftPlan<T>& plan,
                 const std::vector<T>& window, T* re, T* im, int64_t F, int64_t frames) {
  check_shape(L >= win / 2 + 1, "signal too short for centered framing (need > window/2 samples)");
  const int64_t off = win / 2;
  std::vector<std::complex<T>> buf(static_cast<size_t>(win));
  std::vector<std::complex<T>> spec(static_cast<size_t>(win));
  for (int64_t m = 0; m < frames; ++m) {
    for (int64_t j = 0; j < win; ++j) {
      const int64_t p = reflect_index(m * hop + j - off, L);
      buf[static_cast<size_t>(j)] =
          std::complex<T>(x[p] * window[static_cast<size_t>(j)], T(0));
    }
    plan.forward(buf.data(), spec.data());
    for (int64_t f = 0; f < F; ++f) {
      re[f * frames + m] = spec[static_cast<size_t>(f)].real();
      im[f * frames + m] = spec[static_cast<size_t>(f)].imag();
    }
  }
}

// Adjoint of stft_kernel: accumulates into gx (length L).
template <typename T>
void stft_adjoint_kernel(const T* gre, const T* gim, int64_t L, int64_t win, int64_t hop,
                         const FftPlan<T>& plan, const std::vector<T>& window, T* gx, int64_t F,
                         int64_t frames) {
  const int64_t off = win / 2;
  std::vector<std::complex<T>> G(static_cast<size_t>(win));
  for (int64_t m = 0; m < frames; ++m) {
    std::fill(G.begin(), G.end(), std::complex<T>(0, 0));
    for (int64_t f = 0; f < F; ++f)
      G[static_cast<size_t>(f)] = std::complex<T>(gre[f * frames + m], gim[f * frames + m]);
    // grad wrt frame sample j = Re(sum_k G_k e^{+2pi i k j / win})
    std::vector<std::complex<T>> gfr = plan.adjoint(G);
    for (int64_t j = 0; j < win; ++j) {
      const int64_t p = reflect_index(m * hop + j - off, L);
      gx[p] += gfr[static_cast<size_t>(j)].real() * window[static_cast<size_t>(j)];
    }
  }
}

// Overlap-add weights sum_m w^2(p - m*hop) over the padded axis.
template <typename T>
std::vector<T> ola_weight(int64_t frames, int64_t win, int64_t hop, const std::vector<T>& window) {
  const int64_t padded = (frames - 1) * hop + win;
  std::vector<T> weight(static_cast<size_t>(padded), T(0));
  for (int64_t m = 0; m < frames; ++m)
    for (int64_t j = 0; j < win; ++j)
      weight[static_cast<size_t>(m * hop + j)] +=
          window[static_cast<size_t>(j)] * window[static_cast<size_t>(j)];
  return weight;
}

// Synthesis with per-sample weight normalization; writes out[0..L).
template <typename T>
void istft_kernel(const T* re, const T* im, int64_t F, int64_t frames, int64_t win, int64_t hop,
                  const FftPlan<T>& plan, const std::vector<T>& window, T* out, int64_t L) {
  check_shape(F == win / 2 + 1, "spectrum has " + std::to_string(F) +
                                    " bins but the FFT size implies " + std::to_string(win / 2 + 1));
  const int64_t off = win / 2;
  const int64_t padded = (frames - 1) * hop + win;
  check_shape(L + off <= padded, "requested " + std::to_string(L) +
                                     " samples exceed overlap-add coverage of " +
                                     std::to_string(frames) + " frames");
  const std::vector<T> weight = ola_weight(frames, win, hop, window);
  std::vector<T> ola(static_cast<size_t>(padded), T(0));
  std::vector<std::complex<T>> H(static_cast<size_t>(win));
  for (int64_t m = 0; m < frames; ++m) {
    for (int64_t f = 0; f < F; ++f)
      H[static_cast<size_t>(f)] = std::complex<T>(re[f * frames + m], im[f * frames + m]);
    for (int64_t f = 1; f < F - 1; ++f)
      H[static_cast<size_t>(win - f)] = std::conj(H[static_cast<size_t>(f)]);
    std::vector<std::complex<T>> t = plan.inverse(H);
    for (int64_t j = 0; j < win; ++j)
      ola[static_cast<size_t>(m * hop + j)] +=
          t[static_cast<size_t>(j)].real() * window[static_cast<size_t>(j)];
  }
  for (int64_t i = 0; i < L; ++i) out[i] = ola[static_cast<size_t>(i + off)] /
                                           weight[static_cast<size_t>(i + off)];
}

// Adjoint of istft_kernel: accumulates into gre/gim.
template <typename T>
void istft_adjoint_kernel(const T* gout, int64_t L, int64_t F, int64_t frames, int64_t win,
                          int64_t hop, const FftPlan<T>& plan, const std::vector<T>& window,
                          T* gre, T* gim) {
  const int64_t off = win / 2;
  const int64_t padded = (frames - 1) * hop + win;
  const std::vector<T> weight = ola_weight(frames, win, hop, window);
  std::vector<T> gola(static_cast<size_t>(padded), T(0));
  for (int64_t i = 0; i < L; ++i)
    gola[static_cast<size_t>(i + off)] = gout[i] / weight[static_cast<size_t>(i + off)];
  std::vector<std::complex<T>> gfr(static_cast<size_t>(win));
  const T inv_n = T(1) / static_cast<T>(win);
  for (int64_t m = 0; m < frames; ++m) {
    for (int64_t j = 0; j < win; ++j)
      gfr[static_cast<size_t>(j)] = std::complex<T>(
          gola[static_cast<size_t>(m * hop + j)] * window[static_cast<size_t>(j)], T(0));
    std::vector<std::complex<T>> Y(static_cast<size_t>(win));
    plan.forward(gfr.data(), Y.data());
    for (int64_t f = 0; f < F; ++f) {
      const T c = (f == 0 || f == win / 2) ? T(1) : T(2);
      gre[f * frames + m] += c * inv_n * Y[static_cast<size_t>(f)].real();
      if (f != 0 && f != win / 2)
        gim[f * frames + m] += c * inv_n * Y[static_cast<size_t>(f)].imag();
    }
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Raw (non-differentiable) STFT/iSTFT on audio buffers
// ---------------------------------------------------------------------------

inline ComplexSpectrum stft(const AudioBuffer& audio, const StftConfig& cfg = {}) {
  audio.validate();
  check_config(audio.num_samples() > 0, "stft of empty signal");
  cfg.validate(audio.sample_rate);
  const int64_t win = cfg.window_samples(audio.sample_rate);
  const int64_t hop = cfg.hop_samples(audio.sample_rate);
  const int64_t F = win / 2 + 1;
  const int64_t frames = detail::stft_frames(audio.num_samples(), hop);
  FftPlan<double> plan(win);
  const auto window = detail::sqrt_hann_window<double>(win);
  ComplexSpectrum spec;
  spec.channels = audio.num_channels();
  spec.freqs = F;
  spec.frames = frames;
  spec.sample_rate = audio.sample_rate;
  spec.num_samples = audio.num_samples();
  spec.data.assign(static_cast<size_t>(spec.channels * 2 * F * frames), 0.0);
  for (int64_t c = 0; c < spec.channels; ++c) {
    double* re = spec.data.data() + (c * 2 + 0) * F * frames;
    double* im = spec.data.data() + (c * 2 + 1) * F * frames;
    detail::stft_kernel(audio.channel(c).data(), audio.num_samples(), win, hop, plan, window, re,
                        im, F, frames);
  }
  return spec;
}

inline AudioBuffer istft(const ComplexSpectrum& spec, const StftConfig& cfg = {}) {
  cfg.validate(spec.sample_rate);
  const int64_t win = cfg.window_samples(spec.sample_rate);
  const int64_t hop = cfg.hop_samples(spec.sample_rate);
  FftPlan<double> plan(win);
  const auto window = detail::sqrt_hann_window<double>(win);
  AudioBuffer out(spec.sample_rate, spec.channels, spec.num_samples);
  for (int64_t c = 0; c < spec.channels; ++c) {
    const double* re = spec.data.data() + (c * 2 + 0) * spec.freqs * spec.frames;
    const double* im = spec.data.data() + (c * 2 + 1) * spec.freqs * spec.frames;
    detail::istft_kernel(re, im, spec.freqs, spec.frames, win, hop, plan, window,
                         out.channel(c).data(), spec.num_samples);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Differentiable tensor ops (single channel)
// ---------------------------------------------------------------------------

// x: [L] -> [2, F, frames]
template <typename T>
Tensor<T> stft_op(const Tensor<T>& x, int64_t win, int64_t hop) {
  check_shape(x.ndim() == 1, "stft_op expects a 1-d waveform");
  const int64_t L = x.numel();
  check_config(L > 0, "stft of empty signal");
  const int64_t F = win / 2 + 1;
  const int64_t frames = detail::stft_frames(L, hop);
  auto plan = std::make_shared<FftPlan<T>>(win);
  auto window = std::make_shared<std::vector<T>>(detail::sqrt_hann_window<T>(win));
  auto ctx = detail::op_context(x);
  Tensor<T> out({2, F, frames});
  detail::stft_kernel(x.data(), L, win, hop, *plan, *window, out.data(),
                      out.data() + F * frames, F, frames);
  detail::record_op(
      "stft", ctx, out,
      [x, out, L, win, hop, plan, window, F, frames]() mutable {
        const T* go = out.grad_ptr();
        if (!go || !x.requires_grad()) return;
        detail::stft_adjoint_kernel(go, go + F * frames, L, win, hop, *plan, *window,
                                    x.grad_accum(), F, frames);
      },
      {x});
  return out;
}

// spec: [2, F, frames] -> [out_len]
template <typename T>
Tensor<T> istft_op(const Tensor<T>& spec, int64_t win, int64_t hop, int64_t out_len) {
  check_shape(spec.ndim() == 3 && spec.size(0) == 2,
              "istft_op expects [2, F, T], got " + shape_str(spec.shape()));
  const int64_t F = spec.size(1);
  const int64_t frames = spec.size(2);
  auto plan = std::make_shared<FftPlan<T>>(win);
  auto window = std::make_shared<std::vector<T>>(detail::sqrt_hann_window<T>(win));
  auto ctx = detail::op_context(spec);
  Tensor<T> out({out_len});
  detail::istft_kernel(spec.data(), spec.data() + F * frames, F, frames, win, hop, *plan,
                       *window, out.data(), out_len);
  detail::record_op(
      "istft", ctx, out,
      [spec, out, out_len, win, hop, plan, window, F, frames]() mutable {
        const T* go = out.grad_ptr();
        if (!go || !spec.requires_grad()) return;
        detail::istft_adjoint_kernel(go, out_len, F, frames, win, hop, *plan, *window,
                                     spec.grad_accum(), spec.grad_accum() + F * frames);
      },
      {spec});
  return out;
}

}  // namespace uses

// Copyright 2026 The uses-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "uses/error.hpp"

namespace uses {

// Sampling rates with integer 32 ms / 16 ms frames whose FFT size factors as
// 2^a*3^b. Other rates (e.g. 44.1 kHz) must be resampled first.
inline const std::array<int, 4>& supported_rates() {
  static const std::array<int, 4> r = {8000, 16000, 24000, 48000};
  return r;
}

inline bool rate_supported(int rate) {
  for (int r : supported_rates())
    if (r == rate) return true;
  return false;
}

inline std::string supported_rates_str() { return "8000, 16000, 24000, 48000"; }

// Multi-channel waveform; all channels share one length.
struct AudioBuffer {
  int sample_rate = 0;
  std::vector<std::vector<double>> samples;  // [channel][sample]

  AudioBuffer() = default;
  AudioBuffer(int rate, int64_t channels, int64_t length)
      : sample_rate(rate),
        samples(static_cast<size_t>(channels), std::vector<double>(static_cast<size_t>(length), 0.0)) {}

  int64_t num_channels() const { return static_cast<int64_t>(samples.size()); }
  int64_t num_samples() const { return samples.empty() ? 0 : static_cast<int64_t>(samples[0].size()); }
  double duration_s() const {
    return sample_rate > 0 ? static_cast<double>(num_samples()) / sample_rate : 0.0;
  }

  std::vector<double>& channel(int64_t c) { return samples.at(static_cast<size_t>(c)); }
  const std::vector<double>& channel(int64_t c) const { return samples.at(static_cast<size_t>(c)); }

  void validate() const {
    check_config(sample_rate > 0, "audio sample rate must be positive");
    for (const auto& ch : samples)
      check_shape(static_cast<int64_t>(ch.size()) == num_samples(),
                  "audio channels have unequal lengths");
  }

  AudioBuffer slice_samples(int64_t start, int64_t len) const {
    AudioBuffer out(sample_rate, num_channels(), len);
    for (int64_t c = 0; c < num_channels(); ++c) {
      const auto& src = samples[static_cast<size_t>(c)];
      for (int64_t i = 0; i < len; ++i) {
        const int64_t j = start + i;
        out.samples[static_cast<size_t>(c)][static_cast<size_t>(i)] =
            (j >= 0 && j < num_samples()) ? src[static_cast<size_t>(j)] : 0.0;
      }
    }
    return out;
  }
};

inline double rms(const std::vector<double>& x) {
  if (x.empty()) return 0.0;
  double s = 0.0;
  for (double v : x) s += v * v;
  return std::sqrt(s / static_cast<double>(x.size()));
}

inline double power(const AudioBuffer& a) {
  double s = 0.0;
  int64_t n = 0;
  for (const auto& ch : a.samples) {
    for (double v : ch) s += v * v;
    n += static_cast<int64_t>(ch.size());
  }
  return n > 0 ? s / static_cast<double>(n) : 0.0;
}

// One global scale per utterance (all channels) so inter-channel level ratios
// are preserved exactly. scale = max(std, 1e-8); output = input / scale.
inline std::pair<AudioBuffer, double> variance_normalize(const AudioBuffer& audio) {
  int64_t n = 0;
  double mean = 0.0;
  for (const auto& ch : audio.samples) {
    for (double v : ch) mean += v;
    n += static_cast<int64_t>(ch.size());
  }
  if (n > 0) mean /= static_cast<double>(n);
  double var = 0.0;
  for (const auto& ch : audio.samples)
    for (double v : ch) var += (v - mean) * (v - mean);
  if (n > 0) var /= static_cast<double>(n);
  const double scale = std::max(std::sqrt(var), 1e-8);
  AudioBuffer out = audio;
  for (auto& ch : out.samples)
    for (double& v : ch) v /= scale;
  return {out, scale};
}

namespace detail {

inline double sinc(double x) {
  if (std::abs(x) < 1e-12) return 1.0;
  const double px = M_PI * x;
  return std::sin(px) / px;
}

// Blackman taper over |x| <= 1.
inline double blackman(double x) {
  if (std::abs(x) > 1.0) return 0.0;
  return 0.42 + 0.5 * std::cos(M_PI * x) + 0.08 * std::cos(2.0 * M_PI * x);
}

}  // namespace detail

// Windowed-sinc polyphase resampler between supported rates. Kernel taps are
// renormalized per output sample, which pins DC gain to exactly 1.
inline AudioBuffer resample(const AudioBuffer& audio, int target_rate) {
  audio.validate();
  check_config(rate_supported(audio.sample_rate),
               "resample: unsupported source rate " + std::to_string(audio.sample_rate) +
                   " (supported: " + supported_rates_str() + ")");
  check_config(rate_supported(target_rate),
               "resample: unsupported target rate " + std::to_string(target_rate) +
                   " (supported: " + supported_rates_str() + ")");
  if (target_rate == audio.sample_rate) return audio;

  const int64_t g = std::gcd(audio.sample_rate, target_rate);
  const int64_t p = target_rate / g;  // upsample factor
  const int64_t q = audio.sample_rate / g;
  // Cutoff slightly below the narrower Nyquist; 32 zero crossings keeps the
  // stopband past -70 dB so a 48->8->48 kHz round trip stays clean to 3.4 kHz.
  const double cutoff = 0.98 * std::min(1.0, static_cast<double>(p) / static_cast<double>(q));
  const int64_t zero_crossings = 32;
  const int64_t half_width = static_cast<int64_t>(std::ceil(zero_crossings / cutoff));

  const int64_t in_len = audio.num_samples();
  const int64_t out_len = (in_len * p) / q;
  AudioBuffer out(target_rate, audio.num_channels(), out_len);

  for (int64_t n = 0; n < out_len; ++n) {
    const int64_t num = n * q;
    const int64_t t_int = num / p;
    const double frac = static_cast<double>(num - t_int * p) / static_cast<double>(p);
    double wsum = 0.0;
    const int64_t lo = t_int - half_width;
    const int64_t hi = t_int + half_width + 1;
    std::vector<double> taps(static_cast<size_t>(hi - lo));
    for (int64_t m = lo; m < hi; ++m) {
      const double d = (static_cast<double>(t_int - m) + frac);
      const double w = detail::sinc(cutoff * d) *
                       detail::blackman(d / static_cast<double>(half_width));
      taps[static_cast<size_t>(m - lo)] = w;
      wsum += w;
    }
    for (int64_t c = 0; c < audio.num_channels(); ++c) {
      const auto& src = audio.samples[static_cast<size_t>(c)];
      double acc = 0.0;
      for (int64_t m = std::max<int64_t>(lo, 0); m < std::min(hi, in_len); ++m)
        acc += src[static_cast<size_t>(m)] * taps[static_cast<size_t>(m - lo)];
      out.samples[static_cast<size_t>(c)][static_cast<size_t>(n)] = acc / wsum;
    }
  }
  return out;
}

}  // namespace uses

// Copyright 2026 The uses-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Mixed-radix complex FFT for lengths of the form 2^a * 3^b. Radix-3 support
// exists so 32 ms frames stay transformable at 24 kHz (768) and 48 kHz (1536).

#pragma once

#include <complex>
#include <memory>
#include <string>
#include <vector>

#include "uses/error.hpp"

namespace uses {

// Smallest prime factor left after dividing out 2s and 3s; 1 if none.
inline int64_t unsupported_fft_factor(int64_t n) {
  while (n % 2 == 0) n /= 2;
  while (n % 3 == 0) n /= 3;
  if (n == 1) return 1;
  for (int64_t p = 5; p * p <= n; p += 2)
    if (n % p == 0) return p;
  return n;
}

template <typename T>
class FftPlan {
 public:
  explicit FftPlan(int64_t n) : n_(n) {
    check_config(n >= 1, "FFT length must be >= 1");
    const int64_t bad = unsupported_fft_factor(n);
    if (bad != 1)
      throw ConfigError("FFT length " + std::to_string(n) +
                        " contains unsupported factor " + std::to_string(bad) +
                        " (only 2^a*3^b lengths are supported)");
    twiddle_.resize(static_cast<size_t>(n));
    for (int64_t k = 0; k < n; ++k) {
      const double ang = -2.0 * M_PI * static_cast<double>(k) / static_cast<double>(n);
      twiddle_[static_cast<size_t>(k)] =
          std::complex<T>(static_cast<T>(std::cos(ang)), static_cast<T>(std::sin(ang)));
    }
  }

  int64_t length() const { return n_; }

  // X[k] = sum_n x[n] * exp(-2*pi*i*k*n/N)
  void forward(const std::complex<T>* in, std::complex<T>* out) const {
    rec(in, out, n_, 1);
  }

  std::vector<std::complex<T>> forward(const std::vector<std::complex<T>>& in) const {
    check_shape(static_cast<int64_t>(in.size()) == n_, "FFT input length mismatch");
    std::vector<std::complex<T>> out(in.size());
    forward(in.data(), out.data());
    return out;
  }

  // x[n] = (1/N) * sum_k X[k] * exp(+2*pi*i*k*n/N)
  std::vector<std::complex<T>> inverse(const std::vector<std::complex<T>>& in) const {
    check_shape(static_cast<int64_t>(in.size()) == n_, "iFFT input length mismatch");
    std::vector<std::complex<T>> tmp(in.size());
    for (size_t i = 0; i < in.size(); ++i) tmp[i] = std::conj(in[i]);
    std::vector<std::complex<T>> out(in.size());
    forward(tmp.data(), out.data());
    const T inv = T(1) / static_cast<T>(n_);
    for (auto& v : out) v = std::conj(v) * inv;
    return out;
  }

  // Adjoint sweep without the 1/N factor: sum_k X[k] * exp(+2*pi*i*k*n/N).
  std::vector<std::complex<T>> adjoint(const std::vector<std::complex<T>>& in) const {
    std::vector<std::complex<T>> out = inverse(in);
    const T scale = static_cast<T>(n_);
    for (auto& v : out) v *= scale;
    return out;
  }

 private:
  void rec(const std::complex<T>* in, std::complex<T>* out, int64_t n, int64_t stride) const {
    if (n == 1) {
      out[0] = in[0];
      return;
    }
    if (n % 2 == 0) {
      const int64_t h = n / 2;
      rec(in, out, h, stride * 2);
      rec(in + stride, out + h, h, stride * 2);
      const int64_t tw = n_ / n;
      for (int64_t k = 0; k < h; ++k) {
        const std::complex<T> e = out[k];
        const std::complex<T> o = twiddle_[static_cast<size_t>(k * tw)] * out[k + h];
        out[k] = e + o;
        out[k + h] = e - o;
      }
      return;
    }
    // radix-3
    const int64_t t = n / 3;
    rec(in, out, t, stride * 3);
    rec(in + stride, out + t, t, stride * 3);
    rec(in + 2 * stride, out + 2 * t, t, stride * 3);
    const int64_t tw = n_ / n;
    const std::complex<T> w3 = twiddle_[static_cast<size_t>(n_ / 3)];        // e^{-2pi i/3}
    const std::complex<T> w3sq = twiddle_[static_cast<size_t>(2 * (n_ / 3))];  // e^{-4pi i/3}
    for (int64_t k = 0; k < t; ++k) {
      const std::complex<T> a = out[k];
      const std::complex<T> b = twiddle_[static_cast<size_t>(k * tw)] * out[k + t];
      const std::complex<T> c = twiddle_[static_cast<size_t>(2 * k * tw)] * out[k + 2 * t];
      out[k] = a + b + c;
      out[k + t] = a + w3 * b + w3sq * c;
      out[k + 2 * t] = a + w3sq * b + w3 * c;
    }
  }

  int64_t n_;
  std::vector<std::complex<T>> twiddle_;
};

// One-shot helpers for code that does not reuse a plan.
template <typename T>
std::vector<std::complex<T>> fft(const std::vector<std::complex<T>>& x) {
  FftPlan<T> plan(static_cast<int64_t>(x.size()));
  return plan.forward(x);
}

template <typename T>
std::vector<std::complex<T>> ifft(const std::vector<std::complex<T>>& x) {
  FftPlan<T> plan(static_cast<int64_t>(x.size()));
  return plan.inverse(x);
}

}  // namespace uses

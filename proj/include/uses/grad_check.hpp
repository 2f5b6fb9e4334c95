// Copyright 2026 The uses-cpp Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <functional>

#include "uses/tensor.hpp"

namespace uses {

// Scalar-valued function of one tensor, built on a caller-provided tape so
// the checker can run both the recorded backward pass and plain evaluations.
using GradFn = std::function<Tensor<double>(Tape<double>&, const Tensor<double>&)>;

// Central-difference gradient check at f64. Returns the max over coordinates
// of |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
inline double grad_check(const GradFn& fn, const Tensor<double>& point, double eps = 1e-5) {
  check_config(eps >= 1e-6 && eps <= 1e-4, "grad_check: eps must lie in [1e-6, 1e-4]");
  Tensor<double> x = point.clone();
  x.set_requires_grad(true);

  std::vector<double> analytic;
  {
    Tape<double> tape;
    tape.watch(x);
    Tensor<double> loss = fn(tape, x);
    check_shape(loss.numel() == 1, "grad_check: fn must return a scalar");
    tape.backward(loss);
    analytic = x.has_grad() ? x.grad() : std::vector<double>(x.numel(), 0.0);
  }

  auto eval = [&fn](const Tensor<double>& p) {
    Tensor<double> q = p.clone();
    Tape<double> tape;
    double v = fn(tape, q).item();
    if (!std::isfinite(v)) throw NumericError("grad_check: non-finite function value");
    return v;
  };

  double worst = 0.0;
  for (int64_t i = 0; i < x.numel(); ++i) {
    Tensor<double> xp = x.clone();
    Tensor<double> xm = x.clone();
    xp.data()[i] += eps;
    xm.data()[i] -= eps;
    const double num = (eval(xp) - eval(xm)) / (2.0 * eps);
    const double ana = analytic[static_cast<size_t>(i)];
    if (!std::isfinite(num) || !std::isfinite(ana))
      throw NumericError("grad_check: non-finite derivative");
    const double denom = std::max({std::abs(ana), std::abs(num), 1e-8});
    worst = std::max(worst, std::abs(ana - num) / denom);
  }
  return worst;
}

// Same check restricted to a subset of coordinates; used for parameter-space
// spot checks where the full Jacobian sweep would be too slow.
inline double grad_check_coords(const GradFn& fn, const Tensor<double>& point,
                                const std::vector<int64_t>& coords, double eps = 1e-5) {
  check_config(eps >= 1e-6 && eps <= 1e-4, "grad_check: eps must lie in [1e-6, 1e-4]");
  Tensor<double> x = point.clone();
  x.set_requires_grad(true);
  std::vector<double> analytic;
  {
    Tape<double> tape;
    tape.watch(x);
    Tensor<double> loss = fn(tape, x);
    tape.backward(loss);
    analytic = x.has_grad() ? x.grad() : std::vector<double>(x.numel(), 0.0);
  }
  auto eval = [&fn](const Tensor<double>& p) {
    Tensor<double> q = p.clone();
    Tape<double> tape;
    return fn(tape, q).item();
  };
  double worst = 0.0;
  for (int64_t i : coords) {
    Tensor<double> xp = x.clone();
    Tensor<double> xm = x.clone();
    xp.data()[i] += eps;
    xm.data()[i] -= eps;
    const double num = (eval(xp) - eval(xm)) / (2.0 * eps);
    const double ana = analytic[static_cast<size_t>(i)];
    const double denom = std::max({std::abs(ana), std::abs(num), 1e-8});
    worst = std::max(worst, std::abs(ana - num) / denom);
  }
  return worst;
}

}  // namespace uses

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>

#include "gigassl/numcore/tensor.hpp"

namespace gigassl {

/// Central-difference gradient of a scalar function, one coordinate at a time.
inline Tensor<double> finite_diff_grad(const std::function<double(const Tensor<double>&)>& f,
                                       const Tensor<double>& x, double h = 1e-5) {
  Tensor<double> grad(x.shape());
  Tensor<double> probe = x;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double saved = probe[k];
    probe[k] = saved + h;
    const double up = f(probe);
    probe[k] = saved - h;
    const double down = f(probe);
    probe[k] = saved;
    grad[k] = (up - down) / (2.0 * h);
  }
  return grad;
}

// Element-wise relative error with denominator max(|a|, |b|, floor), maximised.
inline double max_relative_error(std::span<const double> analytic, std::span<const double> numeric,
                                 double floor = 1e-8) {
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric[i]), floor});
    worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / denom);
  }
  return worst;
}

}  // namespace gigassl

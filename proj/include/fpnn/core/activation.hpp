#pragma once

#include <string>

#include "fpnn/core/tensor.hpp"

namespace fpnn {

inline constexpr double kDefaultLeakySlope = 0.01;

inline void check_leaky_slope(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw InvalidArgument("leaky relu slope must lie in (0,1), got " + std::to_string(alpha));
  }
}

/// f(x) = x for x > 0, alpha * x for x <= 0.
inline Tensor leaky_relu_forward(const Tensor& x, double alpha = kDefaultLeakySlope) {
  check_leaky_slope(alpha);
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > 0.0 ? x[i] : alpha * x[i];
  return require_finite(out, "leaky_relu");
}

/// Slope at x == 0 is alpha, matching the forward branch.
inline Tensor leaky_relu_backward(const Tensor& x, double alpha, const Tensor& output_grad) {
  check_leaky_slope(alpha);
  x.require_same_shape(output_grad, "leaky_relu_backward");
  Tensor g(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    g[i] = x[i] > 0.0 ? output_grad[i] : alpha * output_grad[i];
  }
  return g;
}

}  // namespace fpnn

#pragma once

#include <cmath>
#include <cstddef>

#include "fpnn/core/conv.hpp"
#include "fpnn/core/tensor.hpp"

namespace fpnn {

enum class Mode { train, eval };

inline constexpr double kBatchNormEps = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

/// Per-channel running statistics used in eval mode.
struct BatchNormState {
  Tensor running_mean;
  Tensor running_var;

  static BatchNormState fresh(std::size_t channels) {
    return {Tensor(Shape{channels}, 0.0), Tensor(Shape{channels}, 1.0)};
  }
};

struct BatchNormCache {
  Tensor x_hat;    // normalized input, same shape as input
  Tensor inv_std;  // [C]
  Mode mode = Mode::train;
};

struct BatchNormResult {
  Tensor output;
  BatchNormState state;  // updated in train mode, copied through in eval mode
  BatchNormCache cache;
};

/// Per-channel batch normalization of [N,C,H,W].
///
/// Train mode normalizes with the biased batch variance and folds the
/// unbiased variance into the running estimate with momentum 0.1.
inline BatchNormResult batchnorm2d(const Tensor& input, const Tensor& scale,
                                   const Tensor& shift, const BatchNormState& state,
                                   Mode mode) {
  if (input.rank() != 4) throw ShapeError("batchnorm2d expects [N,C,H,W], got " + shape_str(input.shape()));
  const std::size_t n = input.extent(0), c = input.extent(1);
  const std::size_t plane = input.extent(2) * input.extent(3);
  const std::size_t count = n * plane;
  const Shape cshape{c};
  if (scale.shape() != cshape || shift.shape() != cshape ||
      state.running_mean.shape() != cshape || state.running_var.shape() != cshape) {
    throw ShapeError("batchnorm2d parameters must have shape [" + std::to_string(c) + "]");
  }
  if (mode == Mode::train && count < 2) {
    throw InvalidArgument("batchnorm2d needs N*H*W >= 2 in train mode");
  }

  BatchNormResult res{Tensor(input.shape()), state, {Tensor(input.shape()), Tensor(cshape), mode}};
  for (std::size_t ch = 0; ch < c; ++ch) {
    double mean, var;
    if (mode == Mode::train) {
      double s = 0.0;
      for (std::size_t b = 0; b < n; ++b) {
        const double* x = input.data() + (b * c + ch) * plane;
        for (std::size_t k = 0; k < plane; ++k) s += x[k];
      }
      mean = s / static_cast<double>(count);
      double ss = 0.0;
      for (std::size_t b = 0; b < n; ++b) {
        const double* x = input.data() + (b * c + ch) * plane;
        for (std::size_t k = 0; k < plane; ++k) ss += (x[k] - mean) * (x[k] - mean);
      }
      var = ss / static_cast<double>(count);
      const double unbiased = ss / static_cast<double>(count - 1);
      res.state.running_mean[ch] =
          (1.0 - kBatchNormMomentum) * state.running_mean[ch] + kBatchNormMomentum * mean;
      res.state.running_var[ch] =
          (1.0 - kBatchNormMomentum) * state.running_var[ch] + kBatchNormMomentum * unbiased;
    } else {
      mean = state.running_mean[ch];
      var = state.running_var[ch];
    }
    const double inv_std = 1.0 / std::sqrt(var + kBatchNormEps);
    res.cache.inv_std[ch] = inv_std;
    for (std::size_t b = 0; b < n; ++b) {
      const std::size_t off = (b * c + ch) * plane;
      for (std::size_t k = 0; k < plane; ++k) {
        const double xh = (input[off + k] - mean) * inv_std;
        res.cache.x_hat[off + k] = xh;
        res.output[off + k] = scale[ch] * xh + shift[ch];
      }
    }
  }
  require_finite(res.output, "batchnorm2d");
  return res;
}

/// Gradients w.r.t. input, "scale" and "shift".
inline LayerGrads batchnorm2d_backward(const BatchNormCache& cache, const Tensor& scale,
                                       const Tensor& output_grad) {
  cache.x_hat.require_same_shape(output_grad, "batchnorm2d_backward");
  const std::size_t n = output_grad.extent(0), c = output_grad.extent(1);
  const std::size_t plane = output_grad.extent(2) * output_grad.extent(3);
  const double m = static_cast<double>(n * plane);

  LayerGrads grads;
  grads.input_grad = Tensor(output_grad.shape());
  Tensor g_scale(Shape{c}), g_shift(Shape{c});
  for (std::size_t ch = 0; ch < c; ++ch) {
    double sum_g = 0.0, sum_gx = 0.0;
    for (std::size_t b = 0; b < n; ++b) {
      const std::size_t off = (b * c + ch) * plane;
      for (std::size_t k = 0; k < plane; ++k) {
        sum_g += output_grad[off + k];
        sum_gx += output_grad[off + k] * cache.x_hat[off + k];
      }
    }
    g_scale[ch] = sum_gx;
    g_shift[ch] = sum_g;
    const double k_in = scale[ch] * cache.inv_std[ch];
    for (std::size_t b = 0; b < n; ++b) {
      const std::size_t off = (b * c + ch) * plane;
      for (std::size_t k = 0; k < plane; ++k) {
        const double g = output_grad[off + k];
        grads.input_grad[off + k] =
            cache.mode == Mode::train
                ? k_in * (g - sum_g / m - cache.x_hat[off + k] * sum_gx / m)
                : k_in * g;
      }
    }
  }
  grads.param_grads["scale"] = std::move(g_scale);
  grads.param_grads["shift"] = std::move(g_shift);
  return grads;
}

}  // namespace fpnn

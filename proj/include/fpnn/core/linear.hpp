#pragma once

#include <Eigen/Core>

#include "fpnn/core/conv.hpp"
#include "fpnn/core/tensor.hpp"

namespace fpnn {

/// y = x W + b for x [N,F], W [F,G], b [G].
inline Tensor linear_forward(const Tensor& input, const Tensor& weights, const Tensor& bias) {
  if (input.rank() != 2 || weights.rank() != 2 || input.extent(1) != weights.extent(0)) {
    throw ShapeError("linear_forward: input " + shape_str(input.shape()) + " vs weights " +
                     shape_str(weights.shape()));
  }
  const std::size_t n = input.extent(0), f = input.extent(1), g = weights.extent(1);
  if (bias.shape() != Shape{g}) throw ShapeError("linear_forward: bias must be [" + std::to_string(g) + "]");
  Tensor out(Shape{n, g});
  detail::ConstMapMat x(input.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(f));
  detail::ConstMapMat w(weights.data(), static_cast<Eigen::Index>(f), static_cast<Eigen::Index>(g));
  detail::MapMat y(out.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(g));
  y.noalias() = x * w;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < g; ++j) out[i * g + j] += bias[j];
  return require_finite(out, "linear_forward");
}

/// Gradients w.r.t. input, "weights" and "bias".
inline LayerGrads linear_backward(const Tensor& input, const Tensor& weights,
                                  const Tensor& output_grad) {
  if (input.rank() != 2 || weights.rank() != 2 || input.extent(1) != weights.extent(0) ||
      output_grad.shape() != Shape{input.extent(0), weights.extent(1)}) {
    throw ShapeError("linear_backward: shape mismatch");
  }
  const auto n = static_cast<Eigen::Index>(input.extent(0));
  const auto f = static_cast<Eigen::Index>(input.extent(1));
  const auto g = static_cast<Eigen::Index>(weights.extent(1));
  detail::ConstMapMat x(input.data(), n, f);
  detail::ConstMapMat w(weights.data(), f, g);
  detail::ConstMapMat go(output_grad.data(), n, g);

  LayerGrads grads;
  grads.input_grad = Tensor(input.shape());
  detail::MapMat gx(grads.input_grad.data(), n, f);
  gx.noalias() = go * w.transpose();

  Tensor gw(weights.shape());
  detail::MapMat gw_map(gw.data(), f, g);
  gw_map.noalias() = x.transpose() * go;

  Tensor gb(Shape{static_cast<std::size_t>(g)});
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < g; ++j) gb[static_cast<std::size_t>(j)] += go(i, j);

  grads.param_grads["weights"] = std::move(gw);
  grads.param_grads["bias"] = std::move(gb);
  return grads;
}

}  // namespace fpnn

#pragma once

#include <span>
#include <vector>

#include "fpnn/core/conv.hpp"
#include "fpnn/core/tensor.hpp"

namespace fpnn {

namespace detail {

// Channel axis is 0 for [C,H,W] and 1 for [N,C,H,W].
inline std::size_t channel_axis(const Tensor& t) {
  if (t.rank() == 3) return 0;
  if (t.rank() == 4) return 1;
  throw ShapeError("expected [C,H,W] or [N,C,H,W], got " + shape_str(t.shape()));
}

}  // namespace detail

/// Concatenates along the channel axis in argument order.
inline Tensor concat_channels(std::span<const Tensor> parts) {
  if (parts.empty()) throw InvalidArgument("concat_channels needs at least one part");
  const std::size_t axis = detail::channel_axis(parts[0]);
  Shape out_shape = parts[0].shape();
  std::size_t channels = 0;
  for (const Tensor& p : parts) {
    Shape s = p.shape();
    if (s.size() != out_shape.size()) throw ShapeError("concat_channels: rank mismatch");
    for (std::size_t a = 0; a < s.size(); ++a) {
      if (a != axis && s[a] != out_shape[a]) {
        throw ShapeError("concat_channels: shape " + shape_str(s) + " incompatible with " +
                         shape_str(parts[0].shape()));
      }
    }
    channels += s[axis];
  }
  out_shape[axis] = channels;
  const std::size_t batch = axis == 1 ? out_shape[0] : 1;
  const std::size_t plane = out_shape[axis + 1] * out_shape[axis + 2];

  Tensor out(out_shape);
  for (std::size_t b = 0; b < batch; ++b) {
    double* dst = out.data() + b * channels * plane;
    for (const Tensor& p : parts) {
      const std::size_t n = p.extent(axis) * plane;
      const double* src = p.data() + b * n;
      std::copy(src, src + n, dst);
      dst += n;
    }
  }
  return out;
}

inline Tensor concat_channels(std::initializer_list<Tensor> parts) {
  return concat_channels(std::span<const Tensor>(parts.begin(), parts.size()));
}

/// Backward of concat_channels: splits `grad` into parts with the given channel counts.
inline std::vector<Tensor> split_channels(const Tensor& grad, std::span<const std::size_t> channels) {
  const std::size_t axis = detail::channel_axis(grad);
  std::size_t total = 0;
  for (std::size_t c : channels) total += c;
  if (total != grad.extent(axis)) throw ShapeError("split_channels: channel counts do not sum to tensor channels");
  const std::size_t batch = axis == 1 ? grad.extent(0) : 1;
  const std::size_t plane = grad.extent(axis + 1) * grad.extent(axis + 2);

  std::vector<Tensor> out;
  out.reserve(channels.size());
  for (std::size_t c : channels) {
    Shape s = grad.shape();
    s[axis] = c;
    out.emplace_back(s);
  }
  for (std::size_t b = 0; b < batch; ++b) {
    const double* src = grad.data() + b * total * plane;
    for (std::size_t i = 0; i < channels.size(); ++i) {
      const std::size_t n = channels[i] * plane;
      std::copy(src, src + n, out[i].data() + b * n);
      src += n;
    }
  }
  return out;
}

/// R(x) = F(x) + W x with W a bias-free 1x1 convolution [C1,C2,1,1].
inline Tensor residual_add(const Tensor& fx, const Tensor& x, const Tensor& proj_weights) {
  if (proj_weights.rank() != 4 || proj_weights.extent(2) != 1 || proj_weights.extent(3) != 1) {
    throw ShapeError("residual projection must be [C1,C2,1,1], got " + shape_str(proj_weights.shape()));
  }
  const auto spec = ConvSpec::conv2d(proj_weights.extent(1), proj_weights.extent(0), 1, 1);
  Tensor out = conv2d_forward(x, proj_weights, Tensor{}, spec);
  if (out.shape() != fx.shape()) {
    throw ShapeError("residual_add: F(x) " + shape_str(fx.shape()) + " vs projected x " +
                     shape_str(out.shape()));
  }
  out += fx;
  return require_finite(out, "residual_add");
}

/// Gradients w.r.t. x and "proj"; the gradient w.r.t. F(x) is `output_grad` itself.
inline LayerGrads residual_backward(const Tensor& x, const Tensor& proj_weights,
                                    const Tensor& output_grad) {
  const auto spec = ConvSpec::conv2d(proj_weights.extent(1), proj_weights.extent(0), 1, 1);
  LayerGrads g = conv2d_backward(x, proj_weights, spec, output_grad, false);
  g.param_grads["proj"] = std::move(g.param_grads.at("weights"));
  g.param_grads.erase("weights");
  return g;
}

}  // namespace fpnn

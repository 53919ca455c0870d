#pragma once

#include <cstddef>
#include <limits>
#include <string>
#include <utility>

#include "fpnn/core/tensor.hpp"

namespace fpnn {

enum class PoolMode { avg, max };

/// Pooling window geometry. Padding defaults to zero; the InceptionBlock pool
/// branch and the initial max pool are the only padded users.
struct PoolSpec {
  std::size_t window_h = 2, window_w = 2;
  std::size_t stride = 1;
  std::size_t padding = 0;

  static PoolSpec square(std::size_t window, std::size_t stride = 1, std::size_t padding = 0) {
    return {window, window, stride, padding};
  }
};

namespace detail {

struct PoolGeometry {
  std::size_t planes = 0;  // N * C
  std::size_t h = 0, w = 0, oh = 0, ow = 0;
  Shape out_shape;
};

inline PoolGeometry pool_geometry(const Shape& in, const PoolSpec& spec) {
  if (in.size() != 3 && in.size() != 4) {
    throw ShapeError("pooling expects [C,H,W] or [N,C,H,W], got " + shape_str(in));
  }
  if (spec.window_h == 0 || spec.window_w == 0 || spec.stride == 0) {
    throw InvalidArgument("pooling window and stride must be positive");
  }
  if (spec.padding >= spec.window_h || spec.padding >= spec.window_w) {
    throw InvalidArgument("pooling padding must be smaller than the window");
  }
  PoolGeometry g;
  const std::size_t r = in.size();
  g.h = in[r - 2];
  g.w = in[r - 1];
  g.planes = shape_size(in) / (g.h * g.w);
  const std::size_t ph = g.h + 2 * spec.padding;
  const std::size_t pw = g.w + 2 * spec.padding;
  if (spec.window_h > ph || spec.window_w > pw) {
    throw ShapeError("pooling window " + std::to_string(spec.window_h) + "x" +
                     std::to_string(spec.window_w) + " larger than input " +
                     shape_str(in));
  }
  g.oh = (ph - spec.window_h) / spec.stride + 1;
  g.ow = (pw - spec.window_w) / spec.stride + 1;
  g.out_shape = in;
  g.out_shape[r - 2] = g.oh;
  g.out_shape[r - 1] = g.ow;
  return g;
}

// Calls fn(out_index, in_index) for every in-bounds cell of each window, in
// row-major window order.
template <typename Fn>
void for_each_window_cell(const PoolGeometry& g, const PoolSpec& spec, Fn&& fn) {
  const auto pad = static_cast<std::ptrdiff_t>(spec.padding);
  for (std::size_t p = 0; p < g.planes; ++p) {
    for (std::size_t i = 0; i < g.oh; ++i) {
      for (std::size_t j = 0; j < g.ow; ++j) {
        const std::size_t out_idx = (p * g.oh + i) * g.ow + j;
        for (std::size_t m = 0; m < spec.window_h; ++m) {
          const std::ptrdiff_t r = static_cast<std::ptrdiff_t>(i * spec.stride + m) - pad;
          if (r < 0 || r >= static_cast<std::ptrdiff_t>(g.h)) continue;
          for (std::size_t n = 0; n < spec.window_w; ++n) {
            const std::ptrdiff_t c = static_cast<std::ptrdiff_t>(j * spec.stride + n) - pad;
            if (c < 0 || c >= static_cast<std::ptrdiff_t>(g.w)) continue;
            fn(out_idx, (p * g.h + static_cast<std::size_t>(r)) * g.w + static_cast<std::size_t>(c));
          }
        }
      }
    }
  }
}

}  // namespace detail

/// Mean over each K x L window. Padded cells count as zeros, so the divisor
/// is always K * L.
inline Tensor avg_pool2d(const Tensor& input, const PoolSpec& spec) {
  const auto g = detail::pool_geometry(input.shape(), spec);
  Tensor out(g.out_shape);
  detail::for_each_window_cell(g, spec, [&](std::size_t o, std::size_t i) { out[o] += input[i]; });
  const double count = static_cast<double>(spec.window_h * spec.window_w);
  for (double& v : out.values()) v /= count;
  return require_finite(out, "avg_pool2d");
}

/// Max over each window; padded cells never win.
inline Tensor max_pool2d(const Tensor& input, const PoolSpec& spec) {
  const auto g = detail::pool_geometry(input.shape(), spec);
  Tensor out(g.out_shape, -std::numeric_limits<double>::infinity());
  detail::for_each_window_cell(g, spec, [&](std::size_t o, std::size_t i) {
    if (input[i] > out[o]) out[o] = input[i];
  });
  return require_finite(out, "max_pool2d");
}

/// avg: each window member receives grad / (K*L). max: the full grad goes to
/// the first maximal element in row-major window order.
inline Tensor pool2d_backward(const Tensor& input, const PoolSpec& spec,
                              const Tensor& output_grad, PoolMode mode) {
  const auto g = detail::pool_geometry(input.shape(), spec);
  if (output_grad.shape() != g.out_shape) {
    throw ShapeError("pool2d_backward output_grad " + shape_str(output_grad.shape()) +
                     " expected " + shape_str(g.out_shape));
  }
  Tensor grad(input.shape());
  if (mode == PoolMode::avg) {
    const double inv = 1.0 / static_cast<double>(spec.window_h * spec.window_w);
    detail::for_each_window_cell(
        g, spec, [&](std::size_t o, std::size_t i) { grad[i] += output_grad[o] * inv; });
    return grad;
  }
  const std::size_t n_out = output_grad.size();
  std::vector<std::size_t> argmax(n_out, std::numeric_limits<std::size_t>::max());
  std::vector<double> best(n_out, -std::numeric_limits<double>::infinity());
  detail::for_each_window_cell(g, spec, [&](std::size_t o, std::size_t i) {
    if (input[i] > best[o]) {
      best[o] = input[i];
      argmax[o] = i;
    }
  });
  for (std::size_t o = 0; o < n_out; ++o) grad[argmax[o]] += output_grad[o];
  return grad;
}

/// [N,C,H,W] -> [N,C] spatial mean.
inline Tensor global_avg_pool(const Tensor& input) {
  if (input.rank() != 4) throw ShapeError("global_avg_pool expects [N,C,H,W]");
  const std::size_t n = input.extent(0), c = input.extent(1);
  const std::size_t plane = input.extent(2) * input.extent(3);
  Tensor out(Shape{n, c});
  for (std::size_t p = 0; p < n * c; ++p) {
    double s = 0.0;
    const double* src = input.data() + p * plane;
    for (std::size_t k = 0; k < plane; ++k) s += src[k];
    out[p] = s / static_cast<double>(plane);
  }
  return out;
}

inline Tensor global_avg_pool_backward(const Shape& input_shape, const Tensor& output_grad) {
  if (input_shape.size() != 4 || output_grad.shape() != Shape{input_shape[0], input_shape[1]}) {
    throw ShapeError("global_avg_pool_backward shape mismatch");
  }
  Tensor grad(input_shape);
  const std::size_t plane = input_shape[2] * input_shape[3];
  const double inv = 1.0 / static_cast<double>(plane);
  for (std::size_t p = 0; p < output_grad.size(); ++p) {
    double* dst = grad.data() + p * plane;
    for (std::size_t k = 0; k < plane; ++k) dst[k] = output_grad[p] * inv;
  }
  return grad;
}

}  // namespace fpnn

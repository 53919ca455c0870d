#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "fpnn/core/tensor.hpp"

namespace fpnn {

/// Gradients returned by every layer backward.
struct LayerGrads {
  Tensor input_grad;
  std::map<std::string, Tensor> param_grads;
};

/// Geometry of a 2D or 3D convolution. Axes are ordered (depth,) height, width.
struct ConvSpec {
  std::vector<std::size_t> kernel;
  std::vector<std::size_t> stride;
  std::vector<std::size_t> padding;
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;

  static ConvSpec conv2d(std::size_t in_ch, std::size_t out_ch, std::size_t kh,
                         std::size_t kw, std::size_t stride = 1,
                         std::size_t pad = 0) {
    return {{kh, kw}, {stride, stride}, {pad, pad}, in_ch, out_ch};
  }

  static ConvSpec conv3d(std::size_t in_ch, std::size_t out_ch,
                         std::array<std::size_t, 3> k,
                         std::array<std::size_t, 3> pad = {0, 0, 0},
                         std::array<std::size_t, 3> stride = {1, 1, 1}) {
    return {{k[0], k[1], k[2]},
            {stride[0], stride[1], stride[2]},
            {pad[0], pad[1], pad[2]},
            in_ch,
            out_ch};
  }

  std::size_t spatial_rank() const { return kernel.size(); }

  /// floor((in + 2*pad - kernel) / stride) + 1; throws if < 1.
  std::size_t output_extent(std::size_t axis, std::size_t in) const {
    const std::size_t padded = in + 2 * padding.at(axis);
    if (padded < kernel.at(axis)) {
      throw ShapeError("convolution kernel extent " +
                       std::to_string(kernel[axis]) +
                       " exceeds padded input extent " + std::to_string(padded));
    }
    return (padded - kernel[axis]) / stride.at(axis) + 1;
  }

  Shape weight_shape() const {
    Shape s{out_channels, in_channels};
    s.insert(s.end(), kernel.begin(), kernel.end());
    return s;
  }

  std::size_t weight_count() const { return shape_size(weight_shape()); }

  void validate() const {
    const std::size_t r = kernel.size();
    if ((r != 2 && r != 3) || stride.size() != r || padding.size() != r) {
      throw InvalidArgument("ConvSpec must describe 2 or 3 spatial axes consistently");
    }
    for (std::size_t a = 0; a < r; ++a) {
      if (kernel[a] == 0 || stride[a] == 0) {
        throw InvalidArgument("ConvSpec kernel and stride must be positive");
      }
    }
    if (in_channels == 0 || out_channels == 0) {
      throw InvalidArgument("ConvSpec channel counts must be positive");
    }
  }
};

namespace detail {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

// Convolution problem lowered to three spatial axes; 2D uses a unit depth.
struct ConvGeometry {
  std::size_t batch = 1;
  bool batched = false;
  std::size_t cin = 0, cout = 0;
  std::array<std::size_t, 3> in{1, 1, 1};
  std::array<std::size_t, 3> out{1, 1, 1};
  std::array<std::size_t, 3> k{1, 1, 1};
  std::array<std::size_t, 3> s{1, 1, 1};
  std::array<std::size_t, 3> p{0, 0, 0};
  std::size_t spatial_rank = 2;

  std::size_t in_plane() const { return in[0] * in[1] * in[2]; }
  std::size_t out_plane() const { return out[0] * out[1] * out[2]; }
  std::size_t patch() const { return cin * k[0] * k[1] * k[2]; }

  Shape output_shape() const {
    Shape shape;
    if (batched) shape.push_back(batch);
    shape.push_back(cout);
    if (spatial_rank == 3) shape.push_back(out[0]);
    shape.push_back(out[1]);
    shape.push_back(out[2]);
    return shape;
  }
};

inline ConvGeometry conv_geometry(const Shape& input, const Shape& weights,
                                  const ConvSpec& spec) {
  spec.validate();
  ConvGeometry g;
  g.spatial_rank = spec.spatial_rank();
  const std::size_t r = g.spatial_rank;
  if (input.size() != r + 1 && input.size() != r + 2) {
    throw ShapeError("convolution input rank " + std::to_string(input.size()) +
                     " invalid for " + std::to_string(r) + " spatial axes");
  }
  g.batched = input.size() == r + 2;
  const std::size_t c_axis = g.batched ? 1 : 0;
  g.batch = g.batched ? input[0] : 1;
  g.cin = input[c_axis];
  g.cout = spec.out_channels;
  if (g.cin != spec.in_channels) {
    throw ShapeError("convolution input has " + std::to_string(g.cin) +
                     " channels, spec expects " + std::to_string(spec.in_channels));
  }
  if (weights != spec.weight_shape()) {
    throw ShapeError("convolution weights " + shape_str(weights) +
                     " do not match spec " + shape_str(spec.weight_shape()));
  }
  const std::size_t lead = 3 - r;  // unit depth for 2D
  for (std::size_t a = 0; a < r; ++a) {
    g.in[lead + a] = input[c_axis + 1 + a];
    g.k[lead + a] = spec.kernel[a];
    g.s[lead + a] = spec.stride[a];
    g.p[lead + a] = spec.padding[a];
    g.out[lead + a] = spec.output_extent(a, g.in[lead + a]);
  }
  return g;
}

// cols is [patch x (batch * out_plane)], columns grouped by sample.
inline void im2col(const double* input, const ConvGeometry& g, RowMat& cols) {
  const std::size_t P = g.out_plane();
  const std::size_t NP = g.batch * P;
  cols.resize(static_cast<Eigen::Index>(g.patch()), static_cast<Eigen::Index>(NP));
  for (std::size_t n = 0; n < g.batch; ++n) {
    const double* sample = input + n * g.cin * g.in_plane();
    std::size_t row = 0;
    for (std::size_t c = 0; c < g.cin; ++c) {
      const double* chan = sample + c * g.in_plane();
      for (std::size_t a = 0; a < g.k[0]; ++a)
        for (std::size_t b = 0; b < g.k[1]; ++b)
          for (std::size_t e = 0; e < g.k[2]; ++e, ++row) {
            double* dst = cols.data() + row * NP + n * P;
            for (std::size_t od = 0; od < g.out[0]; ++od) {
              const std::ptrdiff_t id = static_cast<std::ptrdiff_t>(od * g.s[0] + a) -
                                        static_cast<std::ptrdiff_t>(g.p[0]);
              const bool d_ok = id >= 0 && id < static_cast<std::ptrdiff_t>(g.in[0]);
              for (std::size_t oh = 0; oh < g.out[1]; ++oh) {
                const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * g.s[1] + b) -
                                          static_cast<std::ptrdiff_t>(g.p[1]);
                const bool h_ok = d_ok && ih >= 0 && ih < static_cast<std::ptrdiff_t>(g.in[1]);
                double* out_row = dst + (od * g.out[1] + oh) * g.out[2];
                if (!h_ok) {
                  std::fill(out_row, out_row + g.out[2], 0.0);
                  continue;
                }
                const double* in_row = chan + (static_cast<std::size_t>(id) * g.in[1] +
                                               static_cast<std::size_t>(ih)) * g.in[2];
                for (std::size_t ow = 0; ow < g.out[2]; ++ow) {
                  const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow * g.s[2] + e) -
                                            static_cast<std::ptrdiff_t>(g.p[2]);
                  out_row[ow] = (iw >= 0 && iw < static_cast<std::ptrdiff_t>(g.in[2]))
                                    ? in_row[iw]
                                    : 0.0;
                }
              }
            }
          }
    }
  }
}

// Adjoint of im2col: scatters column gradients back onto the input.
inline void col2im(const RowMat& cols, const ConvGeometry& g, double* input_grad) {
  const std::size_t P = g.out_plane();
  const std::size_t NP = g.batch * P;
  for (std::size_t n = 0; n < g.batch; ++n) {
    double* sample = input_grad + n * g.cin * g.in_plane();
    std::size_t row = 0;
    for (std::size_t c = 0; c < g.cin; ++c) {
      double* chan = sample + c * g.in_plane();
      for (std::size_t a = 0; a < g.k[0]; ++a)
        for (std::size_t b = 0; b < g.k[1]; ++b)
          for (std::size_t e = 0; e < g.k[2]; ++e, ++row) {
            const double* src = cols.data() + row * NP + n * P;
            for (std::size_t od = 0; od < g.out[0]; ++od) {
              const std::ptrdiff_t id = static_cast<std::ptrdiff_t>(od * g.s[0] + a) -
                                        static_cast<std::ptrdiff_t>(g.p[0]);
              if (id < 0 || id >= static_cast<std::ptrdiff_t>(g.in[0])) continue;
              for (std::size_t oh = 0; oh < g.out[1]; ++oh) {
                const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * g.s[1] + b) -
                                          static_cast<std::ptrdiff_t>(g.p[1]);
                if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(g.in[1])) continue;
                const double* in_row = src + (od * g.out[1] + oh) * g.out[2];
                double* dst = chan + (static_cast<std::size_t>(id) * g.in[1] +
                                      static_cast<std::size_t>(ih)) * g.in[2];
                for (std::size_t ow = 0; ow < g.out[2]; ++ow) {
                  const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow * g.s[2] + e) -
                                            static_cast<std::ptrdiff_t>(g.p[2]);
                  if (iw >= 0 && iw < static_cast<std::ptrdiff_t>(g.in[2])) dst[iw] += in_row[ow];
                }
              }
            }
          }
    }
  }
}

inline void check_bias(const Tensor& bias, std::size_t cout) {
  if (!bias.empty() && bias.shape() != Shape{cout}) {
    throw ShapeError("convolution bias " + shape_str(bias.shape()) +
                     " must have shape [" + std::to_string(cout) + "]");
  }
}

inline Tensor conv_forward(const Tensor& input, const Tensor& weights,
                           const Tensor& bias, const ConvSpec& spec) {
  const ConvGeometry g = conv_geometry(input.shape(), weights.shape(), spec);
  check_bias(bias, g.cout);
  RowMat cols;
  im2col(input.data(), g, cols);
  const std::size_t P = g.out_plane();
  const std::size_t NP = g.batch * P;
  ConstMapMat w(weights.data(), static_cast<Eigen::Index>(g.cout),
                static_cast<Eigen::Index>(g.patch()));
  RowMat prod(static_cast<Eigen::Index>(g.cout), static_cast<Eigen::Index>(NP));
  prod.noalias() = w * cols;

  Tensor out(g.output_shape());
  double* o = out.data();
  for (std::size_t n = 0; n < g.batch; ++n) {
    for (std::size_t co = 0; co < g.cout; ++co) {
      const double b = bias.empty() ? 0.0 : bias[co];
      const double* src = prod.data() + co * NP + n * P;
      double* dst = o + (n * g.cout + co) * P;
      for (std::size_t i = 0; i < P; ++i) dst[i] = src[i] + b;
    }
  }
  return require_finite(out, "convolution");
}

inline LayerGrads conv_backward(const Tensor& input, const Tensor& weights,
                                const ConvSpec& spec, const Tensor& output_grad,
                                bool with_bias) {
  const ConvGeometry g = conv_geometry(input.shape(), weights.shape(), spec);
  if (output_grad.shape() != g.output_shape()) {
    throw ShapeError("convolution output_grad " + shape_str(output_grad.shape()) +
                     " expected " + shape_str(g.output_shape()));
  }
  const std::size_t P = g.out_plane();
  const std::size_t NP = g.batch * P;
  const auto cout = static_cast<Eigen::Index>(g.cout);

  RowMat gmat(cout, static_cast<Eigen::Index>(NP));
  for (std::size_t n = 0; n < g.batch; ++n)
    for (std::size_t co = 0; co < g.cout; ++co) {
      const double* src = output_grad.data() + (n * g.cout + co) * P;
      std::copy(src, src + P, gmat.data() + co * NP + n * P);
    }

  RowMat cols;
  im2col(input.data(), g, cols);

  LayerGrads grads;
  Tensor gw(weights.shape());
  MapMat gw_map(gw.data(), cout, static_cast<Eigen::Index>(g.patch()));
  gw_map.noalias() = gmat * cols.transpose();
  grads.param_grads["weights"] = std::move(gw);

  if (with_bias) {
    Tensor gb(Shape{g.cout});
    for (std::size_t co = 0; co < g.cout; ++co) {
      double s = 0.0;
      const double* row = gmat.data() + co * NP;
      for (std::size_t i = 0; i < NP; ++i) s += row[i];
      gb[co] = s;
    }
    grads.param_grads["bias"] = std::move(gb);
  }

  ConstMapMat w(weights.data(), cout, static_cast<Eigen::Index>(g.patch()));
  RowMat gcols = w.transpose() * gmat;
  grads.input_grad = Tensor(input.shape());
  col2im(gcols, g, grads.input_grad.data());
  return grads;
}

}  // namespace detail

/// Cross-correlation of a [C_in,H,W] (or batched [N,C_in,H,W]) input with
/// [C_out,C_in,kh,kw] weights, zero padding. An empty `bias` means no bias.
inline Tensor conv2d_forward(const Tensor& input, const Tensor& weights,
                             const Tensor& bias, const ConvSpec& spec) {
  if (spec.spatial_rank() != 2) throw InvalidArgument("conv2d_forward needs a 2D ConvSpec");
  return detail::conv_forward(input, weights, bias, spec);
}

/// Gradients w.r.t. input, "weights" and (when `with_bias`) "bias".
inline LayerGrads conv2d_backward(const Tensor& input, const Tensor& weights,
                                  const ConvSpec& spec, const Tensor& output_grad,
                                  bool with_bias = true) {
  if (spec.spatial_rank() != 2) throw InvalidArgument("conv2d_backward needs a 2D ConvSpec");
  return detail::conv_backward(input, weights, spec, output_grad, with_bias);
}

/// As conv2d_forward over [C_in,D,H,W] inputs and [C_out,C_in,kd,kh,kw] weights.
inline Tensor conv3d_forward(const Tensor& input, const Tensor& weights,
                             const Tensor& bias, const ConvSpec& spec) {
  if (spec.spatial_rank() != 3) throw InvalidArgument("conv3d_forward needs a 3D ConvSpec");
  return detail::conv_forward(input, weights, bias, spec);
}

inline LayerGrads conv3d_backward(const Tensor& input, const Tensor& weights,
                                  const ConvSpec& spec, const Tensor& output_grad,
                                  bool with_bias = true) {
  if (spec.spatial_rank() != 3) throw InvalidArgument("conv3d_backward needs a 3D ConvSpec");
  return detail::conv_backward(input, weights, spec, output_grad, with_bias);
}

}  // namespace fpnn

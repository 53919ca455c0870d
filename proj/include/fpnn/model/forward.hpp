#pragma once

// Forward and reverse passes of the dual-stream network.
//
//   stream(x) = blocks(maxpool(stem(front(x))))      front: conv3d over depth
//   features  = [gap(stream_raw) | gap(stream_diff)]
//   out       = head(features), prediction = label_offset + label_scale * out
//
// Train-mode forwards record a trace that the backward pass consumes and the
// batch-norm statistics the caller commits after an optimizer step.

#include <array>
#include <span>
#include <vector>

#include "fpnn/core/activation.hpp"
#include "fpnn/core/batchnorm.hpp"
#include "fpnn/core/concat.hpp"
#include "fpnn/core/conv.hpp"
#include "fpnn/core/linear.hpp"
#include "fpnn/core/pooling.hpp"
#include "fpnn/model/params.hpp"
#include "fpnn/preprocess/samples.hpp"

namespace fpnn {

/// Stacked model inputs: raw [N,3,D,G,G], diff [N,3,D-1,G,G], labels [N].
struct Batch {
  Tensor raw;
  Tensor diff;
  Tensor labels;

  std::size_t size() const { return labels.size(); }
};

inline Batch make_batch(std::span<const SamplePair> samples, std::span<const std::size_t> indices) {
  if (indices.empty()) throw InvalidArgument("make_batch needs at least one sample");
  for (std::size_t i : indices)
    if (i >= samples.size()) throw InvalidArgument("make_batch: sample index out of range");
  const SamplePair& first = samples[indices[0]];
  const std::size_t n = indices.size();
  Shape rs{n}, ds{n};
  rs.insert(rs.end(), first.raw.shape().begin(), first.raw.shape().end());
  ds.insert(ds.end(), first.diff.shape().begin(), first.diff.shape().end());
  Batch b{Tensor(rs), Tensor(ds), Tensor(Shape{n})};
  for (std::size_t i = 0; i < n; ++i) {
    const SamplePair& s = samples[indices[i]];
    if (s.raw.shape() != first.raw.shape() || s.diff.shape() != first.diff.shape()) {
      throw ShapeError("make_batch: inconsistent sample shapes");
    }
    std::copy(s.raw.values().begin(), s.raw.values().end(), b.raw.data() + i * s.raw.size());
    std::copy(s.diff.values().begin(), s.diff.values().end(), b.diff.data() + i * s.diff.size());
    b.labels[i] = s.label;
  }
  return b;
}

inline Batch make_batch(std::span<const SamplePair> samples) {
  std::vector<std::size_t> idx(samples.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  return make_batch(samples, idx);
}

// ----------------------------------------------------------------- traces

struct ConvUnitTrace {
  Tensor input;
  Shape conv_shape;  // convolution output before squeezing a unit depth axis
  BatchNormCache cache;
  Tensor pre_activation;
  BatchNormState new_state;
};

struct BlockTrace {
  Tensor input;
  ConvUnitTrace b1, b2a, b2b, b3a, b3b, b3c, b4;
};

struct StreamTrace {
  ConvUnitTrace front;
  ConvUnitTrace stem;
  Tensor pool_input;
  std::vector<BlockTrace> blocks;
  Shape gap_shape;
};

struct HeadTrace {
  std::vector<Tensor> inputs;           // input of each linear layer
  std::vector<Tensor> pre_activations;  // output of each hidden linear layer
};

struct FpnnTrace {
  Mode mode = Mode::eval;
  StreamTrace raw, diff;
  HeadTrace head;
};

struct ForwardOutput {
  Tensor predictions;  // [N], cycles
  FpnnTrace trace;
};

namespace detail {

inline const PoolSpec kStemPool = PoolSpec::square(3, 2, 1);
inline const PoolSpec kBranchPool = PoolSpec::square(3, 1, 1);
inline constexpr std::array<std::size_t, 4> kBranchWidths{kBranch1x1Channels, kBranchOutChannels, kBranchOutChannels,
                                                          kBranchOutChannels};

inline Tensor unit_forward(const ConvUnit& u, const Tensor& x, Mode mode, double alpha, ConvUnitTrace& tr) {
  Tensor y = u.spec.spatial_rank() == 3 ? conv3d_forward(x, u.weight, Tensor{}, u.spec)
                                        : conv2d_forward(x, u.weight, Tensor{}, u.spec);
  tr.conv_shape = y.shape();
  if (y.rank() == 5) {
    if (y.extent(2) != 1) throw ShapeError("3D front end must collapse depth to 1");
    y.reshape(Shape{y.extent(0), y.extent(1), y.extent(3), y.extent(4)});
  }
  BatchNormResult bn = batchnorm2d(y, u.scale, u.shift, u.bn, mode);
  Tensor out = leaky_relu_forward(bn.output, alpha);
  tr.input = x;
  tr.cache = std::move(bn.cache);
  tr.pre_activation = std::move(bn.output);
  tr.new_state = std::move(bn.state);
  return out;
}

inline Tensor unit_backward(const ConvUnit& u, const ConvUnitTrace& tr, const Tensor& grad, double alpha,
                            ConvUnit& g) {
  const Tensor d = leaky_relu_backward(tr.pre_activation, alpha, grad);
  LayerGrads bn = batchnorm2d_backward(tr.cache, u.scale, d);
  g.scale += bn.param_grads.at("scale");
  g.shift += bn.param_grads.at("shift");
  const Tensor dconv = std::move(bn.input_grad).reshaped(tr.conv_shape);
  LayerGrads cg = u.spec.spatial_rank() == 3 ? conv3d_backward(tr.input, u.weight, u.spec, dconv, false)
                                             : conv2d_backward(tr.input, u.weight, u.spec, dconv, false);
  g.weight += cg.param_grads.at("weights");
  return std::move(cg.input_grad);
}

}  // namespace detail

/// One InceptionBlock on [N,C,H,W]: four conv-BN-LReLU branches concatenated
/// to 88 channels, plus the 1x1-projected input when the block has a
/// residual projection.
inline Tensor inception_block_forward(const Tensor& x, const InceptionBlockParams& b, Mode mode, double alpha,
                                      BlockTrace& tr) {
  if (x.rank() != 4 || x.extent(1) != b.in_channels) {
    throw ShapeError("inception block expects [N," + std::to_string(b.in_channels) + ",H,W], got " +
                     shape_str(x.shape()));
  }
  using detail::unit_forward;
  tr.input = x;
  Tensor y1 = unit_forward(b.branch1x1, x, mode, alpha, tr.b1);
  Tensor y2 = unit_forward(b.branch3x3_3x3, unit_forward(b.branch3x3_1x1, x, mode, alpha, tr.b2a), mode, alpha,
                           tr.b2b);
  Tensor y3 = unit_forward(
      b.branch3x3stack_3x3b,
      unit_forward(b.branch3x3stack_3x3a, unit_forward(b.branch3x3stack_1x1, x, mode, alpha, tr.b3a), mode, alpha,
                   tr.b3b),
      mode, alpha, tr.b3c);
  Tensor y4 = unit_forward(b.branch_pool, avg_pool2d(x, detail::kBranchPool), mode, alpha, tr.b4);
  Tensor cat = concat_channels({std::move(y1), std::move(y2), std::move(y3), std::move(y4)});
  if (b.residual_conv.empty()) return cat;
  return residual_add(cat, x, b.residual_conv);
}

inline Tensor inception_block_backward(const InceptionBlockParams& b, const BlockTrace& tr, const Tensor& grad,
                                       double alpha, InceptionBlockParams& g) {
  using detail::unit_backward;
  Tensor gx(tr.input.shape());
  if (!b.residual_conv.empty()) {
    LayerGrads rg = residual_backward(tr.input, b.residual_conv, grad);
    g.residual_conv += rg.param_grads.at("proj");
    gx += rg.input_grad;
  }
  const auto parts = split_channels(grad, detail::kBranchWidths);
  gx += unit_backward(b.branch1x1, tr.b1, parts[0], alpha, g.branch1x1);
  gx += unit_backward(b.branch3x3_1x1, tr.b2a,
                      unit_backward(b.branch3x3_3x3, tr.b2b, parts[1], alpha, g.branch3x3_3x3), alpha,
                      g.branch3x3_1x1);
  gx += unit_backward(
      b.branch3x3stack_1x1, tr.b3a,
      unit_backward(b.branch3x3stack_3x3a, tr.b3b,
                    unit_backward(b.branch3x3stack_3x3b, tr.b3c, parts[2], alpha, g.branch3x3stack_3x3b), alpha,
                    g.branch3x3stack_3x3a),
      alpha, g.branch3x3stack_1x1);
  gx += pool2d_backward(tr.input, detail::kBranchPool,
                        unit_backward(b.branch_pool, tr.b4, parts[3], alpha, g.branch_pool), PoolMode::avg);
  return gx;
}

/// Mean over the depth axis of [N,C,D,H,W].
inline Tensor depth_average(const Tensor& x) {
  if (x.rank() != 5) throw ShapeError("depth_average expects [N,C,D,H,W]");
  const std::size_t n = x.extent(0), c = x.extent(1), d = x.extent(2), plane = x.extent(3) * x.extent(4);
  Tensor out(Shape{n, c, x.extent(3), x.extent(4)});
  for (std::size_t p = 0; p < n * c; ++p)
    for (std::size_t k = 0; k < d; ++k) {
      const double* src = x.data() + (p * d + k) * plane;
      double* dst = out.data() + p * plane;
      for (std::size_t i = 0; i < plane; ++i) dst[i] += src[i];
    }
  for (double& v : out.values()) v /= static_cast<double>(d);
  return out;
}

/// One stream from [N,3,D,G,G] to pooled features [N, 64 or 88].
inline Tensor stream_forward(const StreamParams& s, const Tensor& x, const FpnnConfig& cfg, Mode mode,
                             StreamTrace& tr) {
  if (x.rank() != 5 || x.extent(1) != 3 || x.extent(2) != s.depth || x.extent(3) != cfg.grid ||
      x.extent(4) != cfg.grid) {
    throw ShapeError("stream input " + shape_str(x.shape()) + " does not match [N,3," + std::to_string(s.depth) +
                     "," + std::to_string(cfg.grid) + "," + std::to_string(cfg.grid) + "]");
  }
  const double a = cfg.alpha;
  Tensor h = s.front.spec.spatial_rank() == 3 ? detail::unit_forward(s.front, x, mode, a, tr.front)
                                              : detail::unit_forward(s.front, depth_average(x), mode, a, tr.front);
  if (s.stem.present()) {
    tr.pool_input = detail::unit_forward(s.stem, h, mode, a, tr.stem);
    h = max_pool2d(tr.pool_input, detail::kStemPool);
  }
  tr.blocks.resize(s.blocks.size());
  for (std::size_t i = 0; i < s.blocks.size(); ++i) h = inception_block_forward(h, s.blocks[i], mode, a, tr.blocks[i]);
  tr.gap_shape = h.shape();
  return global_avg_pool(h);
}

inline void stream_backward(const StreamParams& s, const StreamTrace& tr, const Tensor& grad, double alpha,
                            StreamParams& g) {
  Tensor h = global_avg_pool_backward(tr.gap_shape, grad);
  for (std::size_t i = s.blocks.size(); i-- > 0;) h = inception_block_backward(s.blocks[i], tr.blocks[i], h, alpha, g.blocks[i]);
  if (s.stem.present()) {
    h = pool2d_backward(tr.pool_input, detail::kStemPool, h, PoolMode::max);
    h = detail::unit_backward(s.stem, tr.stem, h, alpha, g.stem);
  }
  detail::unit_backward(s.front, tr.front, h, alpha, g.front);
}

namespace detail {

inline Tensor as_columns(const Tensor& t) { return t.reshaped(Shape{t.extent(0), t.extent(1), 1, 1}); }

}  // namespace detail

/// Predictions in cycles for a batch. Train mode normalizes with batch
/// statistics and records the trace; eval mode uses running statistics.
inline ForwardOutput fpnn_forward(const FpnnParams& p, const Batch& batch, Mode mode) {
  const FpnnConfig& cfg = p.config;
  ForwardOutput out;
  out.trace.mode = mode;
  const std::size_t n = batch.raw.rank() == 5 ? batch.raw.extent(0) : 0;
  if (n == 0) throw ShapeError("fpnn_forward: raw batch must be [N,3,D,G,G]");

  std::vector<Tensor> feats;
  feats.push_back(detail::as_columns(stream_forward(p.raw, batch.raw, cfg, mode, out.trace.raw)));
  if (p.diff.enabled()) {
    if (batch.diff.rank() != 5 || batch.diff.extent(0) != n) throw ShapeError("fpnn_forward: diff batch size mismatch");
    feats.push_back(detail::as_columns(stream_forward(p.diff, batch.diff, cfg, mode, out.trace.diff)));
  }
  Tensor h = concat_channels(feats);
  h.reshape(Shape{n, h.extent(1)});

  HeadTrace& ht = out.trace.head;
  for (std::size_t i = 0; i < p.head.size(); ++i) {
    ht.inputs.push_back(h);
    Tensor z = linear_forward(h, p.head[i].weight, p.head[i].bias);
    if (i + 1 < p.head.size()) {
      h = leaky_relu_forward(z, cfg.alpha);
      ht.pre_activations.push_back(std::move(z));
    } else {
      h = std::move(z);
    }
  }
  if (h.extent(1) != 1) throw ShapeError("head must end in width 1");
  out.predictions = Tensor(Shape{n});
  for (std::size_t i = 0; i < n; ++i) out.predictions[i] = p.label_offset + p.label_scale * h[i];
  require_finite(out.predictions, "fpnn_forward");
  return out;
}

inline Tensor fpnn_predict(const FpnnParams& p, const Batch& batch) {
  return fpnn_forward(p, batch, Mode::eval).predictions;
}

/// Parameter gradients of sum_i loss_grad[i] * prediction[i].
inline FpnnParams fpnn_backward(const FpnnParams& p, const FpnnTrace& trace, const Tensor& loss_grad) {
  if (trace.mode != Mode::train) throw InvalidArgument("fpnn_backward requires a train-mode forward trace");
  const std::size_t n = loss_grad.size();
  if (trace.head.inputs.empty() || trace.head.inputs[0].extent(0) != n) {
    throw ShapeError("fpnn_backward: loss_grad length does not match the batch");
  }
  FpnnParams g = zeros_like(p);
  Tensor h(Shape{n, 1});
  for (std::size_t i = 0; i < n; ++i) h[i] = p.label_scale * loss_grad[i];
  for (std::size_t i = p.head.size(); i-- > 0;) {
    if (i + 1 < p.head.size()) h = leaky_relu_backward(trace.head.pre_activations[i], p.config.alpha, h);
    LayerGrads lg = linear_backward(trace.head.inputs[i], p.head[i].weight, h);
    g.head[i].weight += lg.param_grads.at("weights");
    g.head[i].bias += lg.param_grads.at("bias");
    h = std::move(lg.input_grad);
  }
  std::vector<std::size_t> widths{p.raw.out_channels()};
  if (p.diff.enabled()) widths.push_back(p.diff.out_channels());
  const auto parts = split_channels(detail::as_columns(h), widths);
  stream_backward(p.raw, trace.raw, parts[0].reshaped(Shape{n, widths[0]}), p.config.alpha, g.raw);
  if (p.diff.enabled()) stream_backward(p.diff, trace.diff, parts[1].reshaped(Shape{n, widths[1]}), p.config.alpha, g.diff);
  return g;
}

/// Copies the batch-norm statistics recorded by a train-mode forward into `p`.
inline void commit_bn_states(FpnnParams& p, const FpnnTrace& trace) {
  if (trace.mode != Mode::train) return;
  auto commit_block = [](InceptionBlockParams& b, const BlockTrace& t) {
    b.branch1x1.bn = t.b1.new_state;
    b.branch3x3_1x1.bn = t.b2a.new_state;
    b.branch3x3_3x3.bn = t.b2b.new_state;
    b.branch3x3stack_1x1.bn = t.b3a.new_state;
    b.branch3x3stack_3x3a.bn = t.b3b.new_state;
    b.branch3x3stack_3x3b.bn = t.b3c.new_state;
    b.branch_pool.bn = t.b4.new_state;
  };
  auto commit_stream = [&](StreamParams& s, const StreamTrace& t) {
    if (!s.enabled()) return;
    s.front.bn = t.front.new_state;
    if (s.stem.present()) s.stem.bn = t.stem.new_state;
    for (std::size_t i = 0; i < s.blocks.size(); ++i) commit_block(s.blocks[i], t.blocks[i]);
  };
  commit_stream(p.raw, trace.raw);
  commit_stream(p.diff, trace.diff);
}

}  // namespace fpnn

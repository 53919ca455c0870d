#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <type_traits>
#include <vector>

#include "fpnn/core/batchnorm.hpp"
#include "fpnn/core/conv.hpp"
#include "fpnn/core/random.hpp"
#include "fpnn/core/tensor.hpp"
#include "fpnn/model/config.hpp"

namespace fpnn {

/// Bias-free convolution followed by batch normalization and Leaky ReLU.
struct ConvUnit {
  ConvSpec spec;
  Tensor weight;
  Tensor scale;
  Tensor shift;
  BatchNormState bn;

  bool present() const { return !weight.empty(); }
};

struct InceptionBlockParams {
  std::size_t in_channels = 0;
  ConvUnit branch1x1;            // 1x1 -> 16
  ConvUnit branch3x3_1x1;        // 1x1 -> 16
  ConvUnit branch3x3_3x3;        // 3x3 16 -> 24
  ConvUnit branch3x3stack_1x1;   // 1x1 -> 16
  ConvUnit branch3x3stack_3x3a;  // 3x3 16 -> 24
  ConvUnit branch3x3stack_3x3b;  // 3x3 24 -> 24
  ConvUnit branch_pool;          // 3x3 avg pool, then 3x3 -> 24
  Tensor residual_conv;          // [88, C_in, 1, 1]; empty when residuals are detached
};

inline constexpr std::size_t kBranch1x1Channels = 16;
inline constexpr std::size_t kBranchReduceChannels = 16;
inline constexpr std::size_t kBranchOutChannels = 24;

struct StreamParams {
  std::size_t depth = 0;  // frames in this stream's samples
  ConvUnit front;         // conv3d over the full depth, or 1x1 after depth averaging
  ConvUnit stem;          // 7x7/64 stride 2; absent when initial layers are detached
  std::vector<InceptionBlockParams> blocks;

  bool enabled() const { return front.present(); }
  std::size_t out_channels() const { return blocks.empty() ? kStemChannels : kBlockChannels; }
};

struct LinearParams {
  Tensor weight;  // [in, out]
  Tensor bias;    // [out]
};

/// Every trainable tensor and batch-norm state of a model. Predictions are
/// label_offset + label_scale * (network output); both constants are fixed
/// from the training labels before training and never updated by gradients.
struct FpnnParams {
  FpnnConfig config;
  StreamParams raw;
  StreamParams diff;
  std::vector<LinearParams> head;
  double label_offset = 0.0;
  double label_scale = 1.0;
};

// ----------------------------------------------------------------- visitors

namespace detail {

template <typename U, typename Fn>
void visit_unit(U& unit, const std::string& name, Fn& fn) {
  if (!unit.present()) return;
  fn(name + ".weight", unit.weight);
  fn(name + ".bn_scale", unit.scale);
  fn(name + ".bn_shift", unit.shift);
}

template <typename B, typename Fn>
void visit_block_units(B& b, const std::string& prefix, Fn&& fn) {
  fn(prefix + ".branch1x1", b.branch1x1);
  fn(prefix + ".branch3x3_1x1", b.branch3x3_1x1);
  fn(prefix + ".branch3x3_3x3", b.branch3x3_3x3);
  fn(prefix + ".branch3x3stack_1x1", b.branch3x3stack_1x1);
  fn(prefix + ".branch3x3stack_3x3a", b.branch3x3stack_3x3a);
  fn(prefix + ".branch3x3stack_3x3b", b.branch3x3stack_3x3b);
  fn(prefix + ".branch_pool", b.branch_pool);
}

template <typename S, typename Fn>
void visit_stream_units(S& s, const std::string& prefix, Fn&& fn) {
  if (!s.enabled()) return;
  fn(prefix + ".front", s.front);
  if (s.stem.present()) fn(prefix + ".stem", s.stem);
  for (std::size_t i = 0; i < s.blocks.size(); ++i)
    visit_block_units(s.blocks[i], prefix + ".block" + std::to_string(i), fn);
}

}  // namespace detail

/// Calls fn(name, unit) for every present ConvUnit, in a fixed order.
template <typename P, typename Fn>
  requires std::is_same_v<std::remove_const_t<P>, FpnnParams>
void for_each_conv_unit(P& p, Fn&& fn) {
  detail::visit_stream_units(p.raw, "raw", fn);
  detail::visit_stream_units(p.diff, "diff", fn);
}

/// Calls fn(name, tensor) for every trainable tensor, in a fixed order.
template <typename P, typename Fn>
  requires std::is_same_v<std::remove_const_t<P>, FpnnParams>
void for_each_param(P& p, Fn&& fn) {
  for (auto* s : {&p.raw, &p.diff}) {
    const std::string prefix = s == &p.raw ? "raw" : "diff";
    if (!s->enabled()) continue;
    detail::visit_unit(s->front, prefix + ".front", fn);
    detail::visit_unit(s->stem, prefix + ".stem", fn);
    for (std::size_t i = 0; i < s->blocks.size(); ++i) {
      const std::string bp = prefix + ".block" + std::to_string(i);
      auto& b = s->blocks[i];
      detail::visit_block_units(b, bp, [&](const std::string& n, auto& u) { detail::visit_unit(u, n, fn); });
      if (!b.residual_conv.empty()) fn(bp + ".residual_conv", b.residual_conv);
    }
  }
  for (std::size_t i = 0; i < p.head.size(); ++i) {
    fn("head." + std::to_string(i) + ".weight", p.head[i].weight);
    fn("head." + std::to_string(i) + ".bias", p.head[i].bias);
  }
}

inline std::size_t parameter_count(const FpnnParams& p) {
  std::size_t n = 0;
  for_each_param(p, [&](const std::string&, const Tensor& t) { n += t.size(); });
  return n;
}

/// Same structure as `p` with every trainable tensor zeroed; used for
/// gradients and optimizer moments.
inline FpnnParams zeros_like(const FpnnParams& p) {
  FpnnParams z = p;
  for_each_param(z, [](const std::string&, Tensor& t) { t.fill(0.0); });
  return z;
}

inline std::vector<Tensor*> param_list(FpnnParams& p) {
  std::vector<Tensor*> out;
  for_each_param(p, [&](const std::string&, Tensor& t) { out.push_back(&t); });
  return out;
}

// ----------------------------------------------------------------- building

namespace detail {

inline Tensor kaiming_uniform(const Shape& shape, std::size_t fan_in, double alpha, std::uint64_t seed) {
  const double gain = std::sqrt(2.0 / (1.0 + alpha * alpha));
  const double bound = gain * std::sqrt(3.0 / static_cast<double>(fan_in));
  Rng rng(seed);
  Tensor t(shape);
  for (double& v : t.values()) v = rng.uniform(-bound, bound);
  return t;
}

inline ConvUnit make_unit(const ConvSpec& spec, const FpnnConfig& cfg, const std::string& name) {
  spec.validate();
  ConvUnit u;
  u.spec = spec;
  const std::size_t fan_in = spec.weight_count() / spec.out_channels;
  u.weight = kaiming_uniform(spec.weight_shape(), fan_in, cfg.alpha, derive_seed(cfg.seed, name + ".weight"));
  u.scale = Tensor(Shape{spec.out_channels}, 1.0);
  u.shift = Tensor(Shape{spec.out_channels}, 0.0);
  u.bn = BatchNormState::fresh(spec.out_channels);
  return u;
}

inline InceptionBlockParams make_block(std::size_t in_ch, const FpnnConfig& cfg, const std::string& name) {
  InceptionBlockParams b;
  b.in_channels = in_ch;
  const auto c1 = [](std::size_t i, std::size_t o) { return ConvSpec::conv2d(i, o, 1, 1); };
  const auto c3 = [](std::size_t i, std::size_t o) { return ConvSpec::conv2d(i, o, 3, 3, 1, 1); };
  b.branch1x1 = make_unit(c1(in_ch, kBranch1x1Channels), cfg, name + ".branch1x1");
  b.branch3x3_1x1 = make_unit(c1(in_ch, kBranchReduceChannels), cfg, name + ".branch3x3_1x1");
  b.branch3x3_3x3 = make_unit(c3(kBranchReduceChannels, kBranchOutChannels), cfg, name + ".branch3x3_3x3");
  b.branch3x3stack_1x1 = make_unit(c1(in_ch, kBranchReduceChannels), cfg, name + ".branch3x3stack_1x1");
  b.branch3x3stack_3x3a =
      make_unit(c3(kBranchReduceChannels, kBranchOutChannels), cfg, name + ".branch3x3stack_3x3a");
  b.branch3x3stack_3x3b = make_unit(c3(kBranchOutChannels, kBranchOutChannels), cfg, name + ".branch3x3stack_3x3b");
  b.branch_pool = make_unit(c3(in_ch, kBranchOutChannels), cfg, name + ".branch_pool");
  if (!cfg.detach.residual) {
    b.residual_conv = kaiming_uniform(Shape{kBlockChannels, in_ch, 1, 1}, in_ch, cfg.alpha,
                                      derive_seed(cfg.seed, name + ".residual_conv"));
  }
  return b;
}

inline StreamParams make_stream(std::size_t depth, const FpnnConfig& cfg, const std::string& name) {
  StreamParams s;
  s.depth = depth;
  s.front = cfg.detach.conv3d
                ? make_unit(ConvSpec::conv2d(3, kStemChannels, 1, 1), cfg, name + ".front")
                : make_unit(ConvSpec::conv3d(3, kStemChannels, {depth, 3, 3}, {0, 1, 1}), cfg, name + ".front");
  if (!cfg.detach.initial_layers) {
    s.stem = make_unit(ConvSpec::conv2d(kStemChannels, kStemChannels, 7, 7, 2, 3), cfg, name + ".stem");
  }
  std::size_t ch = kStemChannels;
  for (std::size_t i = 0; i < cfg.noi; ++i) {
    s.blocks.push_back(make_block(ch, cfg, name + ".block" + std::to_string(i)));
    ch = kBlockChannels;
  }
  return s;
}

}  // namespace detail

/// Feature width entering the head.
inline std::size_t fused_width(const FpnnParams& p) {
  std::size_t f = 0;
  for (const auto* s : {&p.raw, &p.diff})
    if (s->enabled()) f += s->out_channels();
  return f;
}

/// Deterministic initialization: every tensor draws from its own stream
/// derived from (seed, parameter name).
inline FpnnParams build_model(const FpnnConfig& cfg) {
  validate_config(cfg);
  FpnnParams p;
  p.config = cfg;
  p.raw = detail::make_stream(cfg.depth, cfg, "raw");
  if (!cfg.detach.diff_branch) p.diff = detail::make_stream(cfg.depth - 1, cfg, "diff");
  std::size_t in = fused_width(p);
  std::vector<std::size_t> widths = cfg.head_hidden;
  widths.push_back(1);
  for (std::size_t i = 0; i < widths.size(); ++i) {
    const std::string name = "head." + std::to_string(i);
    p.head.push_back({detail::kaiming_uniform(Shape{in, widths[i]}, in, cfg.alpha, derive_seed(cfg.seed, name + ".weight")),
                      Tensor(Shape{widths[i]}, 0.0)});
    in = widths[i];
  }
  return p;
}

}  // namespace fpnn

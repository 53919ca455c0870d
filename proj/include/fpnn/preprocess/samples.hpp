#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fpnn/core/random.hpp"
#include "fpnn/core/tensor.hpp"
#include "fpnn/io/binary.hpp"
#include "fpnn/preprocess/battery.hpp"
#include "fpnn/preprocess/filters.hpp"

namespace fpnn {

inline constexpr std::size_t kChannels = 3;     // voltage, current, temperature
inline constexpr std::size_t kSampleDepth = 4;  // first cycle + three most recent

struct PreprocessConfig {
  std::size_t grid = 32;
  std::size_t n_input_cycles = 10;
  std::size_t hampel_window = 11;
  double hampel_sigmas = 3.0;
  std::size_t savgol_window = 9;
  std::size_t savgol_order = 3;
};

/// One video-like training example.
struct SamplePair {
  Tensor raw;   // [3, 4, G, G]: channels V/I/T, frames (1, t-2, t-1, t)
  Tensor diff;  // [3, 3, G, G]: frames (t-2, t-1, t) minus frame 1
  double label = 0.0;  // battery life in cycles
  std::string battery_id;
  int anchor_cycle = 0;

  friend bool operator==(const SamplePair&, const SamplePair&) = default;
};

/// Per-channel min/max for each stream, fitted on training samples only.
struct ScalerParams {
  std::array<double, kChannels> raw_min{}, raw_max{}, diff_min{}, diff_max{};
};

/// Linear interpolation of V/I/T onto G*G evenly spaced capacities over
/// [0, Q_max], reshaped row-major to a [3, G, G] frame. G == 1 samples the
/// grid centre Q_max / 2. Capacities below the first sample take its value.
inline Tensor resample_to_grid(const CycleCurve& curve, std::size_t grid) {
  const std::size_t n = curve.length();
  if (n < 2) throw DataError("resample_to_grid: curve needs at least 2 points");
  if (grid == 0) throw InvalidArgument("resample_to_grid: grid must be positive");
  const std::size_t points = grid * grid;
  const double q_max = curve.charged_capacity.back();
  Tensor frame(Shape{kChannels, grid, grid});
  const std::array<const std::vector<double>*, kChannels> series{&curve.voltage, &curve.current,
                                                                 &curve.temperature};
  const auto& q = curve.charged_capacity;
  std::size_t seg = 0;
  for (std::size_t k = 0; k < points; ++k) {
    const double target = points == 1 ? 0.5 * q_max
                                      : q_max * static_cast<double>(k) / static_cast<double>(points - 1);
    while (seg + 2 < n && q[seg + 1] < target) ++seg;
    double w;
    std::size_t i0 = seg, i1 = seg + 1;
    if (target <= q[0]) {
      i0 = i1 = 0;
      w = 0.0;
    } else if (target >= q[n - 1]) {
      i0 = i1 = n - 1;
      w = 0.0;
    } else {
      w = (target - q[i0]) / (q[i1] - q[i0]);
    }
    for (std::size_t c = 0; c < kChannels; ++c) {
      const auto& s = *series[c];
      frame[c * points + k] = s[i0] + w * (s[i1] - s[i0]);
    }
  }
  return frame;
}

/// Outlier removal followed by Savitzky-Golay smoothing of V/I/T.
inline CycleCurve clean_curve(const CycleCurve& curve, const PreprocessConfig& cfg) {
  CycleCurve out = curve;
  for (auto member : {&CycleCurve::voltage, &CycleCurve::current, &CycleCurve::temperature}) {
    auto cleaned = hampel_filter(curve.*member, cfg.hampel_window, cfg.hampel_sigmas);
    out.*member = savitzky_golay(cleaned, cfg.savgol_window, cfg.savgol_order);
  }
  return out;
}

inline Tensor cycle_frame(const CycleCurve& curve, const PreprocessConfig& cfg) {
  return resample_to_grid(clean_curve(curve, cfg), cfg.grid);
}

/// One sample per anchor cycle t in [4, n_input_cycles]; frames are
/// (1, t-2, t-1, t) and the differential stream subtracts frame 1.
inline std::vector<SamplePair> assemble_samples(const BatteryRecord& battery, const PreprocessConfig& cfg) {
  const std::size_t n = cfg.n_input_cycles;
  if (n < kSampleDepth) throw InvalidArgument("n_input_cycles must be at least 4");
  if (battery.cycles.size() < n) {
    throw DataError("battery " + battery.battery_id + " has " + std::to_string(battery.cycles.size()) +
                    " cycles, need " + std::to_string(n));
  }
  std::vector<Tensor> frames;
  frames.reserve(n);
  for (std::size_t i = 0; i < n; ++i) frames.push_back(cycle_frame(battery.cycles[i], cfg));

  const std::size_t G = cfg.grid, plane = G * G;
  std::vector<SamplePair> out;
  for (std::size_t t = kSampleDepth; t <= n; ++t) {
    const std::array<std::size_t, kSampleDepth> idx{0, t - 3, t - 2, t - 1};
    SamplePair s{Tensor(Shape{kChannels, kSampleDepth, G, G}), Tensor(Shape{kChannels, kSampleDepth - 1, G, G}),
                 static_cast<double>(battery.life), battery.battery_id, static_cast<int>(t)};
    for (std::size_t c = 0; c < kChannels; ++c) {
      const double* first = frames[0].data() + c * plane;
      for (std::size_t d = 0; d < kSampleDepth; ++d) {
        const double* src = frames[idx[d]].data() + c * plane;
        double* raw = s.raw.data() + (c * kSampleDepth + d) * plane;
        std::copy(src, src + plane, raw);
        if (d == 0) continue;
        double* diff = s.diff.data() + (c * (kSampleDepth - 1) + d - 1) * plane;
        for (std::size_t k = 0; k < plane; ++k) diff[k] = src[k] - first[k];
      }
    }
    out.push_back(std::move(s));
  }
  return out;
}

namespace detail {

inline void channel_range(const Tensor& t, std::array<double, kChannels>& lo, std::array<double, kChannels>& hi) {
  const std::size_t per = t.size() / kChannels;
  for (std::size_t c = 0; c < kChannels; ++c)
    for (std::size_t k = 0; k < per; ++k) {
      lo[c] = std::min(lo[c], t[c * per + k]);
      hi[c] = std::max(hi[c], t[c * per + k]);
    }
}

inline void scale_channels(Tensor& t, const std::array<double, kChannels>& lo,
                           const std::array<double, kChannels>& hi) {
  const std::size_t per = t.size() / kChannels;
  for (std::size_t c = 0; c < kChannels; ++c) {
    const double span = hi[c] - lo[c];
    for (std::size_t k = 0; k < per; ++k) {
      double& v = t[c * per + k];
      v = 2.0 * (v - lo[c]) / span - 1.0;
    }
  }
}

}  // namespace detail

inline ScalerParams fit_scaler(std::span<const SamplePair> train) {
  if (train.empty()) throw InvalidArgument("fit_scaler needs at least one sample");
  constexpr double inf = std::numeric_limits<double>::infinity();
  ScalerParams p;
  p.raw_min.fill(inf);
  p.diff_min.fill(inf);
  p.raw_max.fill(-inf);
  p.diff_max.fill(-inf);
  for (const SamplePair& s : train) {
    detail::channel_range(s.raw, p.raw_min, p.raw_max);
    detail::channel_range(s.diff, p.diff_min, p.diff_max);
  }
  static constexpr const char* names[] = {"voltage", "current", "temperature"};
  for (std::size_t c = 0; c < kChannels; ++c) {
    if (!(p.raw_max[c] > p.raw_min[c])) throw DataError(std::string("degenerate raw channel: ") + names[c]);
    if (!(p.diff_max[c] > p.diff_min[c])) throw DataError(std::string("degenerate diff channel: ") + names[c]);
  }
  return p;
}

/// x -> 2 (x - min) / (max - min) - 1 per channel and stream; label untouched.
inline SamplePair apply_scaler(const SamplePair& sample, const ScalerParams& p) {
  SamplePair out = sample;
  detail::scale_channels(out.raw, p.raw_min, p.raw_max);
  detail::scale_channels(out.diff, p.diff_min, p.diff_max);
  return out;
}

inline std::vector<SamplePair> apply_scaler(std::span<const SamplePair> samples, const ScalerParams& p) {
  std::vector<SamplePair> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(apply_scaler(s, p));
  return out;
}

struct SplitIds {
  std::vector<std::string> train;
  std::vector<std::string> test;
};

/// Number of training batteries for a 94:30 split, round(n * 94 / 124).
inline std::size_t train_count_94_30(std::size_t n) {
  const std::size_t k = (n * 94 * 2 + 124) / (124 * 2);
  return std::clamp<std::size_t>(k, 1, n - 1);
}

/// Seeded shuffle of battery ids, first round(n*94/124) to train. The split
/// is by battery so no battery contributes samples to both sides.
inline SplitIds split_train_test(std::vector<std::string> ids, std::uint64_t seed) {
  if (ids.size() < 2) throw InvalidArgument("split_train_test needs at least 2 batteries");
  std::sort(ids.begin(), ids.end());
  if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) throw DataError("duplicate battery ids");
  Rng rng(seed);
  rng.shuffle(ids);
  const std::size_t k = train_count_94_30(ids.size());
  SplitIds out;
  out.train.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(k));
  out.test.assign(ids.begin() + static_cast<std::ptrdiff_t>(k), ids.end());
  return out;
}

/// Holds out round(fraction * n) of the given batteries (at least one, and
/// leaving at least one) for validation.
inline SplitIds split_validation(std::vector<std::string> ids, double fraction, std::uint64_t seed) {
  if (ids.size() < 2) throw InvalidArgument("validation split needs at least 2 batteries");
  std::sort(ids.begin(), ids.end());
  Rng rng(seed);
  rng.shuffle(ids);
  const auto n_val = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::lround(fraction * static_cast<double>(ids.size()))), 1, ids.size() - 1);
  SplitIds out;
  out.test.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_val));
  out.train.assign(ids.begin() + static_cast<std::ptrdiff_t>(n_val), ids.end());
  return out;
}

inline std::vector<SamplePair> select_batteries(std::span<const SamplePair> samples,
                                                std::span<const std::string> ids) {
  const std::set<std::string> wanted(ids.begin(), ids.end());
  std::vector<SamplePair> out;
  for (const auto& s : samples)
    if (wanted.count(s.battery_id)) out.push_back(s);
  return out;
}

// ----------------------------------------------------------------- archives

/// Packs samples as "raw" [N,3,4,G,G], "diff" [N,3,3,G,G], "labels" [N] and
/// "anchor_cycles" [N]. Battery ids travel in the JSON manifest.
inline io::NamedTensors pack_samples(std::span<const SamplePair> samples) {
  if (samples.empty()) throw InvalidArgument("cannot pack an empty sample set");
  const Shape rs = samples[0].raw.shape(), ds = samples[0].diff.shape();
  const std::size_t n = samples.size();
  Shape raw_shape{n}, diff_shape{n};
  raw_shape.insert(raw_shape.end(), rs.begin(), rs.end());
  diff_shape.insert(diff_shape.end(), ds.begin(), ds.end());
  Tensor raw(raw_shape), diff(diff_shape), labels(Shape{n}), anchors(Shape{n});
  for (std::size_t i = 0; i < n; ++i) {
    const auto& s = samples[i];
    if (s.raw.shape() != rs || s.diff.shape() != ds) throw ShapeError("pack_samples: inconsistent sample shapes");
    std::copy(s.raw.values().begin(), s.raw.values().end(), raw.data() + i * s.raw.size());
    std::copy(s.diff.values().begin(), s.diff.values().end(), diff.data() + i * s.diff.size());
    labels[i] = s.label;
    anchors[i] = s.anchor_cycle;
  }
  return {{"raw", std::move(raw)}, {"diff", std::move(diff)}, {"labels", std::move(labels)},
          {"anchor_cycles", std::move(anchors)}};
}

inline std::vector<SamplePair> unpack_samples(const io::NamedTensors& tensors,
                                              std::span<const std::string> battery_ids) {
  const Tensor& raw = io::find_tensor(tensors, "raw");
  const Tensor& diff = io::find_tensor(tensors, "diff");
  const Tensor& labels = io::find_tensor(tensors, "labels");
  const Tensor& anchors = io::find_tensor(tensors, "anchor_cycles");
  const std::size_t n = labels.size();
  if (raw.rank() != 5 || diff.rank() != 5 || raw.extent(0) != n || diff.extent(0) != n || anchors.size() != n ||
      battery_ids.size() != n) {
    throw FormatError("sample archive: inconsistent tensor extents");
  }
  const Shape rs(raw.shape().begin() + 1, raw.shape().end());
  const Shape ds(diff.shape().begin() + 1, diff.shape().end());
  const std::size_t rn = shape_size(rs), dn = shape_size(ds);
  std::vector<SamplePair> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    SamplePair s;
    s.raw = Tensor(rs, std::vector<double>(raw.data() + i * rn, raw.data() + (i + 1) * rn));
    s.diff = Tensor(ds, std::vector<double>(diff.data() + i * dn, diff.data() + (i + 1) * dn));
    s.label = labels[i];
    s.anchor_cycle = static_cast<int>(anchors[i]);
    s.battery_id = battery_ids[i];
    out.push_back(std::move(s));
  }
  return out;
}

inline nlohmann::ordered_json scaler_to_json(const ScalerParams& p) {
  nlohmann::ordered_json j;
  j["raw_min"] = p.raw_min;
  j["raw_max"] = p.raw_max;
  j["diff_min"] = p.diff_min;
  j["diff_max"] = p.diff_max;
  return j;
}

inline ScalerParams scaler_from_json(const nlohmann::json& j) {
  ScalerParams p;
  p.raw_min = j.at("raw_min").get<std::array<double, kChannels>>();
  p.raw_max = j.at("raw_max").get<std::array<double, kChannels>>();
  p.diff_min = j.at("diff_min").get<std::array<double, kChannels>>();
  p.diff_max = j.at("diff_max").get<std::array<double, kChannels>>();
  return p;
}

}  // namespace fpnn

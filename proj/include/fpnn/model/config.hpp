#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fpnn/core/activation.hpp"
#include "fpnn/core/error.hpp"

namespace fpnn {

inline constexpr std::size_t kMaxNoi = 8;
inline constexpr std::size_t kStemChannels = 64;
inline constexpr std::size_t kBlockChannels = 88;

/// Architectural components that can be removed for ablation.
struct DetachFlags {
  bool initial_layers = false;
  bool conv3d = false;
  bool residual = false;
  bool diff_branch = false;

  bool any() const { return initial_layers || conv3d || residual || diff_branch; }
  friend bool operator==(const DetachFlags&, const DetachFlags&) = default;
};

struct FpnnConfig {
  std::size_t noi = 3;
  std::size_t grid = 32;
  std::size_t depth = 4;
  double alpha = kDefaultLeakySlope;
  std::vector<std::size_t> head_hidden{64};
  DetachFlags detach;
  std::uint64_t seed = 0;

  friend bool operator==(const FpnnConfig&, const FpnnConfig&) = default;
};

inline void validate_config(const FpnnConfig& c) {
  if (c.noi > kMaxNoi) throw InvalidArgument("noi must lie in [0, " + std::to_string(kMaxNoi) + "]");
  if (c.grid == 0) throw InvalidArgument("grid side must be positive");
  if (c.depth < 2) throw InvalidArgument("sample depth must be at least 2");
  check_leaky_slope(c.alpha);
  for (std::size_t w : c.head_hidden)
    if (w == 0) throw InvalidArgument("head layer widths must be positive");
}

inline nlohmann::ordered_json config_to_json(const FpnnConfig& c) {
  nlohmann::ordered_json j;
  j["noi"] = c.noi;
  j["grid"] = c.grid;
  j["depth"] = c.depth;
  j["alpha"] = c.alpha;
  j["head_hidden"] = c.head_hidden;
  j["detach"] = {{"initial_layers", c.detach.initial_layers},
                 {"conv3d", c.detach.conv3d},
                 {"residual", c.detach.residual},
                 {"diff_branch", c.detach.diff_branch}};
  j["seed"] = c.seed;
  return j;
}

inline FpnnConfig config_from_json(const nlohmann::json& j) {
  try {
    FpnnConfig c;
    c.noi = j.at("noi").get<std::size_t>();
    c.grid = j.at("grid").get<std::size_t>();
    c.depth = j.at("depth").get<std::size_t>();
    c.alpha = j.at("alpha").get<double>();
    c.head_hidden = j.at("head_hidden").get<std::vector<std::size_t>>();
    const auto& d = j.at("detach");
    c.detach = {d.at("initial_layers").get<bool>(), d.at("conv3d").get<bool>(), d.at("residual").get<bool>(),
                d.at("diff_branch").get<bool>()};
    c.seed = j.at("seed").get<std::uint64_t>();
    validate_config(c);
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("invalid model config: ") + e.what());
  }
}

}  // namespace fpnn

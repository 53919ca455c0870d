#pragma once

// Synthetic battery fleets with known life.
//
// Capacity fades as cap(k) = 1.1 (1 - fade * k^1.5 / 1000) Ah and life is the
// first cycle with cap(k) <= 0.88 Ah. Each cycle's charge curve follows a
// C1(Q1)-C2 protocol to 80% SOC, then 1C CC-CV to 3.6 V. Ageing enters the
// curves through a voltage shift (down early in the charge, up late), a
// temperature bump and a resistance rise, all proportional to the consumed
// life fraction (k - 1) / L with L = (200 / fade)^(2/3). Per-battery offsets
// in voltage, ambient temperature and resistance vary the absolute levels
// between cells but cancel in first-cycle differences.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "fpnn/core/error.hpp"
#include "fpnn/core/random.hpp"
#include "fpnn/preprocess/battery.hpp"

namespace fpnn {

inline constexpr int kMaxStoredCycles = 120;
inline constexpr double kEndOfLifeCapacityAh = 0.8 * kNominalCapacityAh;
inline constexpr double kLowerVoltage = 2.0;
inline constexpr double kCutoffVoltage = 3.6;
inline constexpr std::size_t kPointsPerCycle = 80;

struct SynthPolicy {
  double c1 = 6.0;   // C-rate up to q1
  double q1 = 40.0;  // % SOC switch point
  double c2 = 4.0;   // C-rate from q1 to 80% SOC
  double fade_rate = 0.02;
  std::array<double, 3> noise_sigma{1e-4, 2e-4, 2e-3};  // V, A, degC
  std::uint64_t seed = 0;
};

inline void validate_policy(const SynthPolicy& p) {
  if (!(p.q1 > 0.0 && p.q1 < 80.0)) throw InvalidArgument("policy q1 must lie in (0, 80)");
  if (!(p.c1 > 0.0) || !(p.c2 > 0.0)) throw InvalidArgument("policy C-rates must be positive");
  if (!(p.fade_rate > 0.0) || !std::isfinite(p.fade_rate)) throw InvalidArgument("policy fade_rate must be positive");
  for (double s : p.noise_sigma)
    if (!(s >= 0.0) || !std::isfinite(s)) throw InvalidArgument("policy noise_sigma must be non-negative");
}

inline double synth_capacity(double fade_rate, int cycle) {
  return kNominalCapacityAh * (1.0 - fade_rate * std::pow(static_cast<double>(cycle), 1.5) / 1000.0);
}

/// End-of-life rule on a capacity series indexed from cycle 1; the 1e-12
/// slack absorbs rounding when the fade is fitted to an exact life. Returns 0
/// when the series never reaches the threshold.
inline int life_from_capacities(const std::vector<double>& capacity) {
  for (std::size_t i = 0; i < capacity.size(); ++i)
    if (capacity[i] <= kEndOfLifeCapacityAh + 1e-12) return static_cast<int>(i) + 1;
  return 0;
}

inline int synth_life(double fade_rate) {
  if (!(fade_rate > 0.0)) throw InvalidArgument("fade_rate must be positive");
  const double guess = std::pow(200.0 / fade_rate, 2.0 / 3.0);
  if (guess > 1e8) throw InvalidArgument("fade_rate too small: life exceeds 1e8 cycles");
  int k = std::max(1, static_cast<int>(std::floor(guess)) - 2);
  while (synth_capacity(fade_rate, k) > kEndOfLifeCapacityAh + 1e-12) ++k;
  while (k > 1 && synth_capacity(fade_rate, k - 1) <= kEndOfLifeCapacityAh + 1e-12) --k;
  return k;
}

/// Fade rate whose fitted life is exactly `life` cycles.
inline double fade_for_life(double life) {
  if (!(life >= 1.0)) throw InvalidArgument("life must be at least 1");
  return 200.0 / std::pow(life, 1.5);
}

inline std::string policy_label(const SynthPolicy& p) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2fC(%.0f%%)-%.2fC", p.c1, p.q1, p.c2);
  return buf;
}

namespace detail {

inline double open_circuit_voltage(double soc) {
  return 3.1 + 0.3 * soc + 0.05 * std::log((soc + 0.02) / (1.02 - soc));
}

struct CellNuisance {
  double voltage_offset = 0.0;
  double ambient = 30.0;
  double resistance = 0.02;
};

}  // namespace detail

/// Pure function of the policy; the id only labels the record.
inline BatteryRecord generate_battery(const SynthPolicy& policy, const std::string& id) {
  validate_policy(policy);
  const int life = synth_life(policy.fade_rate);
  const int stored = std::min(life, kMaxStoredCycles);
  const double life_scale = std::pow(200.0 / policy.fade_rate, 2.0 / 3.0);

  Rng cell_rng(derive_seed(policy.seed, "cell"));
  detail::CellNuisance cell;
  cell.voltage_offset = cell_rng.uniform(-0.03, 0.03);
  cell.ambient = cell_rng.uniform(28.0, 36.0);
  cell.resistance = cell_rng.uniform(0.015, 0.025);
  Rng noise(derive_seed(policy.seed, "noise"));

  BatteryRecord b{id, {}, life, kNominalCapacityAh, policy_label(policy)};
  b.cycles.reserve(static_cast<std::size_t>(stored));
  const double one_c = kNominalCapacityAh;
  const double q1 = policy.q1 / 100.0;
  for (int k = 1; k <= stored; ++k) {
    const double age = static_cast<double>(k - 1) / life_scale;
    const double cap = synth_capacity(policy.fade_rate, k);
    const double resistance = cell.resistance * (1.0 + 0.5 * age);
    const double shift = 0.3 * age;
    const double bump = 10.0 * age;
    CycleCurve c{k, {}, {}, {}, {}};
    for (auto* v : {&c.charged_capacity, &c.voltage, &c.current, &c.temperature}) v->reserve(kPointsPerCycle);
    for (std::size_t i = 0; i < kPointsPerCycle; ++i) {
      const double soc = static_cast<double>(i) / static_cast<double>(kPointsPerCycle - 1);
      double current = soc < q1 ? policy.c1 * one_c : soc < 0.8 ? policy.c2 * one_c : one_c;
      const double base = detail::open_circuit_voltage(soc) + cell.voltage_offset + shift * std::tanh(6.0 * (soc - 0.45));
      double voltage = base + current * resistance;
      if (soc >= 0.8 && voltage >= kCutoffVoltage) {
        current = std::max(0.02, (kCutoffVoltage - base) / resistance);
        voltage = kCutoffVoltage;
      }
      const double temperature = cell.ambient + 0.6 * current * current * resistance / 0.02 * (0.3 + soc) +
                                 bump * std::sin(3.141592653589793 * soc);
      c.charged_capacity.push_back(cap * soc);
      c.voltage.push_back(
          std::clamp(voltage + noise.normal(0.0, policy.noise_sigma[0]), kLowerVoltage, kCutoffVoltage));
      c.current.push_back(current + noise.normal(0.0, policy.noise_sigma[1]));
      c.temperature.push_back(temperature + noise.normal(0.0, policy.noise_sigma[2]));
    }
    b.cycles.push_back(std::move(c));
  }
  validate_record(b);
  return b;
}

struct FleetConfig {
  std::size_t n_batteries = 24;
  std::uint64_t seed = 7;
  double life_min = 300.0;
  double life_max = 1200.0;
  std::array<double, 3> noise_sigma{1e-4, 2e-4, 2e-3};
};

/// Policy for battery `index`: target life log-uniform over
/// [life_min, life_max], C-rates and switch point uniform over a narrow band
/// around 5.2C(40%)-4.2C so the curve shape alone does not identify a cell.
inline SynthPolicy sample_policy(const FleetConfig& cfg, std::size_t index) {
  Rng rng(derive_seed(cfg.seed, "policy", index));
  SynthPolicy p;
  p.c1 = rng.uniform(4.8, 5.6);
  p.q1 = rng.uniform(30.0, 50.0);
  p.c2 = rng.uniform(3.8, 4.6);
  const double life = std::exp(rng.uniform(std::log(cfg.life_min), std::log(cfg.life_max)));
  p.fade_rate = fade_for_life(life);
  p.noise_sigma = cfg.noise_sigma;
  p.seed = derive_seed(cfg.seed, "battery", index);
  return p;
}

inline std::string synth_battery_id(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "synth-%03zu", index);
  return buf;
}

inline std::vector<BatteryRecord> generate_fleet(const FleetConfig& cfg) {
  if (cfg.n_batteries < 2) throw InvalidArgument("fleet needs at least 2 batteries");
  if (!(cfg.life_min >= 1.0 && cfg.life_max >= cfg.life_min)) throw InvalidArgument("invalid life range");
  std::vector<BatteryRecord> fleet;
  fleet.reserve(cfg.n_batteries);
  for (std::size_t i = 0; i < cfg.n_batteries; ++i)
    fleet.push_back(generate_battery(sample_policy(cfg, i), synth_battery_id(i)));
  return fleet;
}

/// Writes one canonical battery directory per record, named by battery id.
inline void write_fleet(const std::filesystem::path& root, const std::vector<BatteryRecord>& fleet) {
  std::filesystem::create_directories(root);
  for (const auto& b : fleet) write_battery(root / b.battery_id, b);
}

}  // namespace fpnn

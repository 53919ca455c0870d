#pragma once

#include <string>
#include <vector>

#include "fpnn/preprocess/samples.hpp"

namespace fpnn {

/// Share of the training batteries held out for early stopping.
inline constexpr double kValidationFraction = 0.2;

struct ExperimentData {
  PreprocessConfig preprocess;
  SplitIds split;       // train / test batteries
  SplitIds validation;  // training batteries divided into fit (train) and validation (test)
  ScalerParams scaler;  // fit on every training battery
  std::vector<SamplePair> train, val, test;
};

inline std::vector<SamplePair> assemble_all(const std::vector<BatteryRecord>& batteries, const PreprocessConfig& cfg) {
  std::vector<SamplePair> all;
  for (const auto& b : batteries) {
    auto s = assemble_samples(b, cfg);
    all.insert(all.end(), std::make_move_iterator(s.begin()), std::make_move_iterator(s.end()));
  }
  return all;
}

inline std::vector<std::string> battery_ids(const std::vector<BatteryRecord>& batteries) {
  std::vector<std::string> ids;
  ids.reserve(batteries.size());
  for (const auto& b : batteries) ids.push_back(b.battery_id);
  return ids;
}

/// Splits training batteries into fit and validation subsets by battery.
inline SplitIds validation_split(std::vector<std::string> train_ids, std::uint64_t seed) {
  return split_validation(std::move(train_ids), kValidationFraction, derive_seed(seed, "val"));
}

/// The shared preprocessing pipeline: samples, seeded 94:30 battery split,
/// scaler fit on the training batteries, validation carve-out.
inline ExperimentData prepare_experiment(const std::vector<BatteryRecord>& batteries, const PreprocessConfig& cfg,
                                         std::uint64_t seed) {
  ExperimentData d;
  d.preprocess = cfg;
  const auto all = assemble_all(batteries, cfg);
  d.split = split_train_test(battery_ids(batteries), derive_seed(seed, "split"));
  const auto train_all = select_batteries(all, d.split.train);
  d.scaler = fit_scaler(train_all);
  d.validation = validation_split(d.split.train, seed);
  d.train = apply_scaler(select_batteries(train_all, d.validation.train), d.scaler);
  d.val = apply_scaler(select_batteries(train_all, d.validation.test), d.scaler);
  d.test = apply_scaler(select_batteries(all, d.split.test), d.scaler);
  return d;
}

}  // namespace fpnn

#pragma once

// Experiment harnesses: one train/evaluate cell, the NOI sweep grid, the
// detachment ablation and the hyperparameter search objective.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "fpnn/hyperopt/bayes.hpp"
#include "fpnn/training/data.hpp"
#include "fpnn/training/train.hpp"

namespace fpnn {

/// The cycle counts a sample can be built from.
inline constexpr std::array<std::size_t, 4> kInputCycleOptions{10, 20, 30, 40};

inline void check_input_cycles(std::size_t cycles) {
  if (std::find(kInputCycleOptions.begin(), kInputCycleOptions.end(), cycles) == kInputCycleOptions.end()) {
    throw InvalidArgument("input cycles must be 10, 20, 30 or 40, got " + std::to_string(cycles));
  }
}

inline std::string dataset_label(std::size_t cycles) { return std::to_string(cycles) + " Cycles"; }

struct CellOutcome {
  bool ok = false;
  Metrics metrics{std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN(),
                  std::numeric_limits<double>::quiet_NaN()};
  double best_val_mape = std::numeric_limits<double>::quiet_NaN();
  std::size_t epochs_run = 0;
  double seconds = 0.0;
  std::string error;
};

/// Trains on `data.train` with early stopping on `data.val` and evaluates on
/// `data.test`. Library errors are captured in the outcome, not thrown.
inline CellOutcome run_cell(const ExperimentData& data, const FpnnConfig& model, const TrainConfig& tc) {
  CellOutcome out;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    const TrainResult r = train(build_model(model), data.train, data.val, tc);
    out.epochs_run = r.history.size();
    out.best_val_mape = r.best_val_mape;
    out.metrics = evaluate(r.params, data.test).metrics;
    out.ok = true;
  } catch (const Error& e) {
    out.error = e.what();
    log::info("cell failed: ", e.what());
  }
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

/// Seed of the sweep cell (cycles, noi): the base seed plus fixed offsets.
inline std::uint64_t sweep_cell_seed(std::uint64_t seed, std::size_t cycles, std::size_t noi) {
  return seed + 100 * cycles + noi;
}

struct SweepRow {
  std::size_t cycles = 0;
  std::size_t noi = 0;
  std::uint64_t seed = 0;
  CellOutcome outcome;
};

using SweepObserver = std::function<void(const SweepRow&)>;

/// Trains one model per (cycles, noi) cell. The battery split and every
/// hyperparameter other than NOI are shared by all cells.
inline std::vector<SweepRow> noi_sweep(const std::vector<BatteryRecord>& batteries, const std::vector<std::size_t>& cycles,
                                       const std::vector<std::size_t>& nois, const PreprocessConfig& base_pre,
                                       const FpnnConfig& base_model, const TrainConfig& base_train, std::uint64_t seed,
                                       const SweepObserver& observer = nullptr) {
  if (cycles.empty() || nois.empty()) throw InvalidArgument("noi sweep grid is empty");
  for (std::size_t c : cycles) check_input_cycles(c);
  for (std::size_t n : nois)
    if (n > kMaxNoi) throw InvalidArgument("noi " + std::to_string(n) + " out of range");
  std::vector<SweepRow> rows;
  for (std::size_t c : cycles) {
    PreprocessConfig pc = base_pre;
    pc.n_input_cycles = c;
    const ExperimentData data = prepare_experiment(batteries, pc, seed);
    for (std::size_t n : nois) {
      SweepRow row{c, n, sweep_cell_seed(seed, c, n), {}};
      FpnnConfig mc = base_model;
      mc.noi = n;
      mc.grid = pc.grid;
      mc.seed = row.seed;
      TrainConfig tc = base_train;
      tc.seed = row.seed;
      log::info("sweep cell ", dataset_label(c), " noi ", n);
      row.outcome = run_cell(data, mc, tc);
      if (observer) observer(row);
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

enum class Detach { initial_layers, conv3d, residual, diff_branch, none };

inline constexpr std::array<Detach, 5> kAblationOrder{Detach::initial_layers, Detach::conv3d, Detach::residual,
                                                       Detach::diff_branch, Detach::none};

inline const char* detach_label(Detach d) {
  switch (d) {
    case Detach::initial_layers: return "Initial layers";
    case Detach::conv3d: return "3D conv";
    case Detach::residual: return "Residual";
    case Detach::diff_branch: return "A branch";
    case Detach::none: return "No detach";
  }
  return "";
}

inline const char* detach_key(Detach d) {
  switch (d) {
    case Detach::initial_layers: return "initial_layers";
    case Detach::conv3d: return "conv3d";
    case Detach::residual: return "residual";
    case Detach::diff_branch: return "diff_branch";
    case Detach::none: return "none";
  }
  return "";
}

inline Detach parse_detach(const std::string& key) {
  for (Detach d : kAblationOrder)
    if (key == detach_key(d)) return d;
  throw InvalidArgument("unknown detachment '" + key + "'");
}

inline DetachFlags detach_flags(Detach d) {
  DetachFlags f;
  f.initial_layers = d == Detach::initial_layers;
  f.conv3d = d == Detach::conv3d;
  f.residual = d == Detach::residual;
  f.diff_branch = d == Detach::diff_branch;
  return f;
}

struct AblationRow {
  std::size_t cycles = 0;
  Detach detach = Detach::none;
  std::uint64_t seed = 0;
  CellOutcome outcome;
};

using AblationObserver = std::function<void(const AblationRow&)>;

/// Trains one model per (cycles, detachment). Every detachment of a dataset
/// shares the split and the seed so rows differ only in the removed part.
inline std::vector<AblationRow> ablate(const std::vector<BatteryRecord>& batteries, const std::vector<std::size_t>& cycles,
                                       const std::vector<Detach>& detachments, const PreprocessConfig& base_pre,
                                       const FpnnConfig& base_model, const TrainConfig& base_train, std::uint64_t seed,
                                       const AblationObserver& observer = nullptr) {
  if (cycles.empty() || detachments.empty()) throw InvalidArgument("ablation grid is empty");
  for (std::size_t c : cycles) check_input_cycles(c);
  std::vector<AblationRow> rows;
  for (std::size_t c : cycles) {
    PreprocessConfig pc = base_pre;
    pc.n_input_cycles = c;
    const ExperimentData data = prepare_experiment(batteries, pc, seed);
    for (Detach d : detachments) {
      AblationRow row{c, d, sweep_cell_seed(seed, c, base_model.noi), {}};
      FpnnConfig mc = base_model;
      mc.grid = pc.grid;
      mc.detach = detach_flags(d);
      mc.seed = row.seed;
      TrainConfig tc = base_train;
      tc.seed = row.seed;
      log::info("ablation cell ", dataset_label(c), " detach ", detach_label(d));
      row.outcome = run_cell(data, mc, tc);
      if (observer) observer(row);
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

namespace detail {

inline std::string table_number(double v) {
  if (!std::isfinite(v)) return "NaN";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

inline std::string metric_fields(const CellOutcome& o) {
  if (!o.ok) return "NaN,NaN,NaN";
  return table_number(o.metrics.mape) + "," + table_number(o.metrics.mae) + "," + table_number(o.metrics.rmse);
}

}  // namespace detail

inline constexpr std::string_view kSweepHeader = "dataset,blocks,mape,mae,rmse";
inline constexpr std::string_view kAblationHeader = "dataset,detach,mape,mae,rmse";

/// NOI sweep table; failed cells become NaN rows.
inline std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::string out = std::string(kSweepHeader) + "\n";
  for (const auto& r : rows)
    out += dataset_label(r.cycles) + "," + std::to_string(r.noi) + "," + detail::metric_fields(r.outcome) + "\n";
  return out;
}

/// Ablation table; failed cells become NaN rows.
inline std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::string out = std::string(kAblationHeader) + "\n";
  for (const auto& r : rows)
    out += dataset_label(r.cycles) + "," + detach_label(r.detach) + "," + detail::metric_fields(r.outcome) + "\n";
  return out;
}

// ------------------------------------------------------------ search space

/// Hyperparameter search bounds: learning rate, batch size, Leaky ReLU
/// slope, weight decay and NOI.
inline SearchSpace fpnn_search_space() {
  return {{continuous_dim("learning_rate", 1e-4, 1e-2, true), integer_dim("batch_size", 8, 64),
           continuous_dim("alpha", 0.005, 0.3), continuous_dim("weight_decay", 1e-6, 1e-3, true),
           integer_dim("noi", 0, 4)}};
}

/// Writes the point's values into the configs; unknown names are an error.
inline void apply_point(const SearchSpace& space, const SearchPoint& p, FpnnConfig& model, TrainConfig& tc) {
  if (p.size() != space.dims.size()) throw ShapeError("search point does not match the search space");
  for (std::size_t i = 0; i < p.size(); ++i) {
    const std::string& n = space.dims[i].name;
    if (n == "learning_rate") {
      tc.learning_rate = p[i];
    } else if (n == "batch_size") {
      tc.batch_size = static_cast<std::size_t>(p[i]);
    } else if (n == "alpha") {
      model.alpha = p[i];
    } else if (n == "weight_decay") {
      tc.weight_decay = p[i];
    } else if (n == "noi") {
      model.noi = static_cast<std::size_t>(p[i]);
    } else if (n == "epochs") {
      tc.epochs = static_cast<std::size_t>(p[i]);
    } else {
      throw InvalidArgument("search dimension '" + n + "' does not map to a configuration field");
    }
  }
}

/// Objective for the search: best validation MAPE of a training run.
inline Objective validation_objective(const ExperimentData& data, const SearchSpace& space, FpnnConfig base_model,
                                      TrainConfig base_train) {
  return [&data, space, base_model, base_train](const SearchPoint& p) {
    FpnnConfig mc = base_model;
    TrainConfig tc = base_train;
    mc.grid = data.preprocess.grid;
    apply_point(space, p, mc, tc);
    return train(build_model(mc), data.train, data.val, tc).best_val_mape;
  };
}

}  // namespace fpnn

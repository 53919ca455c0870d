#pragma once

// Command implementations behind the `fpnn` executable. Each command writes
// its artifacts plus one run_manifest.json into its output directory.

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fpnn/datagen/synth.hpp"
#include "fpnn/hyperopt/experiments.hpp"
#include "fpnn/model/export.hpp"
#include "fpnn/training/checkpoint.hpp"

namespace fpnn::app {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

/// Invalid flag values; the executable exits with status 2.
class UsageError : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

inline constexpr std::string_view kManifestName = "run_manifest.json";

// ------------------------------------------------------------------ manifest

class RunManifest {
 public:
  RunManifest(std::string command, fs::path out_dir)
      : command_(std::move(command)), out_(std::move(out_dir)), start_(std::chrono::steady_clock::now()) {}

  ojson config = ojson::object();
  ojson seeds = ojson::object();
  std::vector<std::string> inputs;

  void artifact(const fs::path& p) { artifacts_.push_back(p); }

  /// Writes the manifest with a checksum per artifact (paths relative to the
  /// output directory).
  void write() const {
    ojson j;
    j["command"] = command_;
    j["config"] = config;
    j["seeds"] = seeds;
    j["inputs"] = inputs;
    j["output_dir"] = out_.string();
    j["wall_clock_seconds"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    ojson arts = ojson::object();
    std::vector<fs::path> sorted = artifacts_;
    std::sort(sorted.begin(), sorted.end());
    for (const auto& p : sorted) arts[fs::relative(p, out_).generic_string()] = io::hex64(io::file_checksum(p));
    j["artifacts"] = arts;
    io::write_file_atomic(out_ / kManifestName, j.dump(2) + "\n");
  }

 private:
  std::string command_;
  fs::path out_;
  std::chrono::steady_clock::time_point start_;
  std::vector<fs::path> artifacts_;
};

inline void write_artifact(RunManifest& m, const fs::path& path, std::string_view bytes) {
  io::write_file_atomic(path, bytes);
  m.artifact(path);
}

// ------------------------------------------------------------- flag parsing

/// Parses "10,20", "0-4" or mixtures such as "0-2,4" into sorted unique values.
inline std::vector<std::size_t> parse_index_list(const std::string& text, const std::string& flag) {
  std::vector<std::size_t> out;
  std::stringstream ss(text);
  std::string item;
  auto number = [&](const std::string& s) {
    if (s.empty() || !std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; })) {
      throw UsageError(flag + ": '" + text + "' is not a list of non-negative integers");
    }
    return static_cast<std::size_t>(std::stoul(s));
  };
  while (std::getline(ss, item, ',')) {
    const auto dash = item.find('-');
    if (dash == std::string::npos) {
      out.push_back(number(item));
    } else {
      const std::size_t lo = number(item.substr(0, dash)), hi = number(item.substr(dash + 1));
      if (lo > hi) throw UsageError(flag + ": empty range '" + item + "'");
      for (std::size_t v = lo; v <= hi; ++v) out.push_back(v);
    }
  }
  if (out.empty()) throw UsageError(flag + ": empty list");
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

inline void require_cycles(std::size_t cycles) {
  try {
    check_input_cycles(cycles);
  } catch (const InvalidArgument& e) {
    throw UsageError(std::string("--cycles: ") + e.what());
  }
}

/// Model and training values given on the command line; unset fields fall
/// back to the config file, then to the built-in defaults.
struct Overrides {
  std::optional<std::size_t> noi, epochs, batch_size, patience;
  std::optional<double> alpha, learning_rate, weight_decay;
};

struct ResolvedConfig {
  FpnnConfig model;
  TrainConfig training;
};

inline ojson resolved_to_json(const ResolvedConfig& c) {
  return {{"model", config_to_json(c.model)}, {"training", train_config_to_json(c.training)}};
}

inline nlohmann::json read_json_file(const fs::path& path) {
  try {
    return nlohmann::json::parse(io::read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

/// Precedence: flags > config file (`{"model": {...}, "training": {...}}`,
/// partial objects allowed) > defaults. The seed seeds model and training.
inline ResolvedConfig resolve_config(const std::optional<fs::path>& config_file, const Overrides& o,
                                     std::uint64_t seed) {
  nlohmann::json model = config_to_json(FpnnConfig{});
  nlohmann::json training = train_config_to_json(TrainConfig{});
  if (config_file) {
    const auto j = read_json_file(*config_file);
    if (!j.is_object()) throw FormatError(config_file->string() + ": expected a JSON object");
    for (const auto& [key, value] : j.items()) {
      if (key != "model" && key != "training" && key != "objective") {
        throw FormatError(config_file->string() + ": unknown section '" + key + "'");
      }
    }
    if (j.contains("model")) model.merge_patch(j["model"]);
    if (j.contains("training")) training.merge_patch(j["training"]);
  }
  if (o.noi) model["noi"] = *o.noi;
  if (o.alpha) model["alpha"] = *o.alpha;
  if (o.epochs) training["epochs"] = *o.epochs;
  if (o.batch_size) training["batch_size"] = *o.batch_size;
  if (o.patience) training["patience"] = *o.patience;
  if (o.learning_rate) training["learning_rate"] = *o.learning_rate;
  if (o.weight_decay) training["weight_decay"] = *o.weight_decay;
  model["seed"] = seed;
  training["seed"] = seed;
  try {
    return {config_from_json(model), train_config_from_json(training)};
  } catch (const InvalidArgument& e) {
    throw UsageError(e.what());
  }
}

// -------------------------------------------------------- prepared samples

inline ojson preprocess_to_json(const PreprocessConfig& c) {
  ojson j;
  j["grid"] = c.grid;
  j["n_input_cycles"] = c.n_input_cycles;
  j["hampel_window"] = c.hampel_window;
  j["hampel_sigmas"] = c.hampel_sigmas;
  j["savgol_window"] = c.savgol_window;
  j["savgol_order"] = c.savgol_order;
  return j;
}

inline PreprocessConfig preprocess_from_json(const nlohmann::json& j) {
  try {
    PreprocessConfig c;
    c.grid = j.at("grid").get<std::size_t>();
    c.n_input_cycles = j.at("n_input_cycles").get<std::size_t>();
    c.hampel_window = j.at("hampel_window").get<std::size_t>();
    c.hampel_sigmas = j.at("hampel_sigmas").get<double>();
    c.savgol_window = j.at("savgol_window").get<std::size_t>();
    c.savgol_order = j.at("savgol_order").get<std::size_t>();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("invalid preprocessing config: ") + e.what());
  }
}

inline fs::path ids_path_for(const fs::path& archive) {
  fs::path p = archive;
  p.replace_extension(".ids.json");
  return p;
}

/// Writes `<name>.fpnn` and the per-sample battery ids `<name>.ids.json`.
inline void write_sample_set(RunManifest& m, const fs::path& dir, const std::string& name,
                             std::span<const SamplePair> samples) {
  const fs::path archive = dir / (name + ".fpnn");
  write_artifact(m, archive, io::encode_archive(pack_samples(samples)));
  nlohmann::json ids = nlohmann::json::array();
  for (const auto& s : samples) ids.push_back(s.battery_id);
  write_artifact(m, ids_path_for(archive), ids.dump() + "\n");
}

inline std::vector<SamplePair> read_sample_set(const fs::path& archive) {
  const auto ids_json = read_json_file(ids_path_for(archive));
  std::vector<std::string> ids;
  try {
    ids = ids_json.get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(ids_path_for(archive).string() + ": " + e.what());
  }
  return unpack_samples(io::read_archive(archive), ids);
}

/// A prepared directory resolves to `<dir>/<split>.fpnn`; a file is used as is.
inline fs::path resolve_sample_archive(const fs::path& data, const std::string& split) {
  if (fs::is_directory(data)) {
    if (split != "train" && split != "test") throw UsageError("--split must be 'train' or 'test'");
    return data / (split + ".fpnn");
  }
  if (!fs::exists(data)) throw IoError("sample data not found: " + data.string());
  return data;
}

inline std::vector<BatteryRecord> load_fleet(const fs::path& dir) {
  auto batteries = load_canonical_dataset(dir);
  if (batteries.size() < 2) {
    throw DataError(dir.string() + ": need at least 2 battery directories, found " + std::to_string(batteries.size()));
  }
  return batteries;
}

// ------------------------------------------------------------------ commands

struct GenOptions {
  std::size_t n = 24;
  std::uint64_t seed = 7;
  double life_min = FleetConfig{}.life_min;
  double life_max = FleetConfig{}.life_max;
  fs::path out;
};

/// Writes a synthetic fleet; returns the one-line summary.
inline std::string cmd_gen(const GenOptions& o) {
  if (o.n < 2) throw UsageError("--n must be at least 2");
  if (!(o.life_min >= 1.0 && o.life_max >= o.life_min)) throw UsageError("--life-min/--life-max: invalid range");
  FleetConfig fc;
  fc.n_batteries = o.n;
  fc.seed = o.seed;
  fc.life_min = o.life_min;
  fc.life_max = o.life_max;
  const auto fleet = generate_fleet(fc);
  fs::create_directories(o.out);
  RunManifest m("gen", o.out);
  m.config = {{"n", o.n}, {"life_min", o.life_min}, {"life_max", o.life_max}, {"noise_sigma", fc.noise_sigma}};
  m.seeds = {{"seed", o.seed}};
  write_fleet(o.out, fleet);
  for (const auto& b : fleet) {
    m.artifact(o.out / b.battery_id / "meta.json");
    m.artifact(o.out / b.battery_id / "cycles.csv");
  }
  m.write();
  std::vector<int> lives;
  for (const auto& b : fleet) lives.push_back(b.life);
  std::sort(lives.begin(), lives.end());
  const double median = lives.size() % 2 ? lives[lives.size() / 2]
                                         : 0.5 * (lives[lives.size() / 2 - 1] + lives[lives.size() / 2]);
  std::ostringstream s;
  s << "generated " << fleet.size() << " batteries: life min " << lives.front() << " median " << median << " max "
    << lives.back();
  return s.str();
}

struct PreprocessOptions {
  fs::path data;
  std::size_t cycles = 10;
  std::size_t grid = 32;
  std::uint64_t seed = 0;
  fs::path out;
};

inline std::string cmd_preprocess(const PreprocessOptions& o) {
  require_cycles(o.cycles);
  if (o.grid == 0) throw UsageError("--grid must be positive");
  PreprocessConfig pc;
  pc.grid = o.grid;
  pc.n_input_cycles = o.cycles;
  const auto batteries = load_fleet(o.data);
  const auto all = assemble_all(batteries, pc);
  const SplitIds split = split_train_test(battery_ids(batteries), derive_seed(o.seed, "split"));
  const auto train_raw = select_batteries(all, split.train);
  const ScalerParams scaler = fit_scaler(train_raw);
  const auto train = apply_scaler(train_raw, scaler);
  const auto test = apply_scaler(select_batteries(all, split.test), scaler);

  fs::create_directories(o.out);
  RunManifest m("preprocess", o.out);
  m.config = {{"preprocess", preprocess_to_json(pc)}};
  m.seeds = {{"seed", o.seed}, {"split", derive_seed(o.seed, "split")}};
  m.inputs = {o.data.string()};
  write_sample_set(m, o.out, "train", train);
  write_sample_set(m, o.out, "test", test);
  write_artifact(m, o.out / "scaler.json", scaler_to_json(scaler).dump(2) + "\n");
  ojson sj;
  sj["seed"] = o.seed;
  sj["preprocess"] = preprocess_to_json(pc);
  sj["train"] = split.train;
  sj["test"] = split.test;
  write_artifact(m, o.out / "split.json", sj.dump(2) + "\n");
  m.write();
  std::ostringstream s;
  s << "preprocessed " << batteries.size() << " batteries: " << split.train.size() << " train (" << train.size()
    << " samples), " << split.test.size() << " test (" << test.size() << " samples)";
  return s.str();
}

struct CommonTrainOptions {
  std::optional<fs::path> config;
  Overrides overrides;
  std::uint64_t seed = 0;
};

struct TrainOptions {
  fs::path data;  // prepared directory
  CommonTrainOptions common;
  fs::path out;
};

inline std::string history_csv(const std::vector<EpochRecord>& h) {
  std::string out = "epoch,train_loss,val_mape\n";
  for (const auto& r : h)
    out += std::to_string(r.epoch) + "," + detail::format_double(r.train_loss) + "," +
           detail::format_double(r.val_mape) + "\n";
  return out;
}

inline std::size_t sample_grid(std::span<const SamplePair> samples) {
  if (samples.empty()) throw DataError("sample set is empty");
  return samples[0].raw.extent(samples[0].raw.rank() - 1);
}

inline std::string cmd_train(const TrainOptions& o) {
  ResolvedConfig cfg = resolve_config(o.common.config, o.common.overrides, o.common.seed);
  const fs::path archive = resolve_sample_archive(o.data, "train");
  const auto samples = read_sample_set(archive);
  cfg.model.grid = sample_grid(samples);
  std::vector<std::string> ids;
  for (const auto& s : samples)
    if (std::find(ids.begin(), ids.end(), s.battery_id) == ids.end()) ids.push_back(s.battery_id);
  const SplitIds vs = validation_split(ids, o.common.seed);
  const auto fit = select_batteries(samples, vs.train);
  const auto val = select_batteries(samples, vs.test);

  nlohmann::json meta = nlohmann::json::object();
  const fs::path split_json = archive.parent_path() / "split.json";
  const fs::path scaler_json = archive.parent_path() / "scaler.json";
  if (fs::exists(split_json)) meta["preprocess"] = read_json_file(split_json).at("preprocess");
  if (fs::exists(scaler_json)) meta["scaler"] = read_json_file(scaler_json);
  meta["training"] = train_config_to_json(cfg.training);
  meta["validation_batteries"] = vs.test;

  const TrainResult r = train(build_model(cfg.model), fit, val, cfg.training, [](const EpochRecord& e) {
    log::info("epoch ", e.epoch, " train_loss ", e.train_loss, " val_mape ", e.val_mape);
  });

  fs::create_directories(o.out);
  RunManifest m("train", o.out);
  m.config = resolved_to_json(cfg);
  m.seeds = {{"seed", o.common.seed}, {"validation", derive_seed(o.common.seed, "val")}};
  m.inputs = {archive.string()};
  if (o.common.config) m.inputs.push_back(o.common.config->string());
  io::write_file_atomic(o.out / "checkpoint.fpnn", encode_checkpoint(r.params, meta));
  m.artifact(o.out / "checkpoint.fpnn");
  write_artifact(m, o.out / "history.csv", history_csv(r.history));
  m.write();
  std::ostringstream s;
  s << "trained " << r.history.size() << " epochs on " << fit.size() << " samples; best epoch " << r.best_epoch
    << " val MAPE " << r.best_val_mape << "%" << (r.stopped_early ? " (early stop)" : "");
  return s.str();
}

struct EvalOptions {
  fs::path checkpoint;
  fs::path data;
  std::string split = "test";
  fs::path out;
};

inline ojson report_to_json(const EvalReport& rep) {
  ojson j;
  j["metrics"] = {{"mape", rep.metrics.mape}, {"mae", rep.metrics.mae}, {"rmse", rep.metrics.rmse}};
  j["n_samples"] = rep.residuals.size();
  ojson per = ojson::array();
  for (const auto& b : rep.per_battery) {
    per.push_back({{"battery_id", b.battery_id},
                   {"samples", b.samples},
                   {"label", b.label},
                   {"mean_prediction", b.mean_prediction},
                   {"mae", b.mae}});
  }
  j["per_battery"] = per;
  ojson res = ojson::array();
  for (const auto& r : rep.residuals) {
    res.push_back({{"battery_id", r.battery_id},
                   {"anchor_cycle", r.anchor_cycle},
                   {"label", r.label},
                   {"prediction", r.prediction},
                   {"residual", r.residual()}});
  }
  j["residuals"] = res;
  return j;
}

inline std::string residuals_csv(const EvalReport& rep) {
  std::string out = "battery_id,anchor_cycle,label,prediction,residual\n";
  for (const auto& r : rep.residuals)
    out += r.battery_id + "," + std::to_string(r.anchor_cycle) + "," + detail::format_double(r.label) + "," +
           detail::format_double(r.prediction) + "," + detail::format_double(r.residual()) + "\n";
  return out;
}

inline std::string cmd_eval(const EvalOptions& o) {
  if (!fs::exists(o.checkpoint)) throw IoError("checkpoint not found: " + o.checkpoint.string());
  const Checkpoint ck = load_checkpoint(o.checkpoint);
  const fs::path archive = resolve_sample_archive(o.data, o.split);
  const auto samples = read_sample_set(archive);
  if (sample_grid(samples) != ck.params.config.grid) {
    throw DataError("samples use grid " + std::to_string(sample_grid(samples)) + " but the model expects " +
                    std::to_string(ck.params.config.grid));
  }
  const EvalReport rep = evaluate(ck.params, samples);
  fs::create_directories(o.out);
  RunManifest m("eval", o.out);
  m.config = {{"split", o.split}, {"model", config_to_json(ck.params.config)}};
  m.inputs = {o.checkpoint.string(), archive.string()};
  write_artifact(m, o.out / "report.json", report_to_json(rep).dump(2) + "\n");
  write_artifact(m, o.out / "residuals.csv", residuals_csv(rep));
  m.write();
  std::ostringstream s;
  s << "evaluated " << samples.size() << " samples: MAPE " << rep.metrics.mape << "% MAE " << rep.metrics.mae
    << " RMSE " << rep.metrics.rmse;
  return s.str();
}

struct SweepOptions {
  fs::path data;  // canonical fleet directory
  std::string cycles = "10,20,30,40";
  std::string noi = "0-4";
  std::size_t grid = 32;
  CommonTrainOptions common;
  fs::path out;
};

inline std::string cmd_sweep_noi(const SweepOptions& o) {
  const auto cycles = parse_index_list(o.cycles, "--cycles");
  for (std::size_t c : cycles) require_cycles(c);
  const auto nois = parse_index_list(o.noi, "--noi");
  for (std::size_t n : nois)
    if (n > kMaxNoi) throw UsageError("--noi: values must lie in [0, " + std::to_string(kMaxNoi) + "]");
  if (o.grid == 0) throw UsageError("--grid must be positive");
  const ResolvedConfig cfg = resolve_config(o.common.config, o.common.overrides, o.common.seed);
  const auto batteries = load_fleet(o.data);
  PreprocessConfig pc;
  pc.grid = o.grid;
  const auto rows = noi_sweep(batteries, cycles, nois, pc, cfg.model, cfg.training, o.common.seed,
                              [](const SweepRow& r) {
                                log::info(dataset_label(r.cycles), " noi ", r.noi, r.outcome.ok
                                                                                      ? " mape " + std::to_string(r.outcome.metrics.mape)
                                                                                      : " failed: " + r.outcome.error);
                              });
  fs::create_directories(o.out);
  RunManifest m("sweep-noi", o.out);
  m.config = resolved_to_json(cfg);
  m.config["grid"] = o.grid;
  m.config["cycles"] = cycles;
  m.config["noi"] = nois;
  m.seeds["seed"] = o.common.seed;
  ojson cells = ojson::array();
  for (const auto& r : rows) {
    cells.push_back({{"dataset", dataset_label(r.cycles)}, {"blocks", r.noi}, {"seed", r.seed}, {"ok", r.outcome.ok},
                     {"error", r.outcome.error}});
  }
  m.seeds["cells"] = cells;
  m.inputs = {o.data.string()};
  write_artifact(m, o.out / "sweep.csv", sweep_csv(rows));
  m.write();
  return "wrote " + std::to_string(rows.size()) + " sweep cells to " + (o.out / "sweep.csv").string();
}

struct AblateOptions {
  fs::path data;
  std::string cycles = "10";
  std::string detach = "initial_layers,conv3d,residual,diff_branch,none";
  std::size_t grid = 32;
  CommonTrainOptions common;
  fs::path out;
};

inline std::string cmd_ablate(const AblateOptions& o) {
  const auto cycles = parse_index_list(o.cycles, "--cycles");
  for (std::size_t c : cycles) require_cycles(c);
  std::vector<Detach> dets;
  {
    std::stringstream ss(o.detach);
    std::string item;
    while (std::getline(ss, item, ',')) {
      try {
        dets.push_back(parse_detach(item));
      } catch (const InvalidArgument& e) {
        throw UsageError(std::string("--detach: ") + e.what());
      }
    }
    if (dets.empty()) throw UsageError("--detach: empty list");
    // Rows always follow the table order.
    std::vector<Detach> ordered;
    for (Detach d : kAblationOrder)
      if (std::find(dets.begin(), dets.end(), d) != dets.end()) ordered.push_back(d);
    dets = ordered;
  }
  if (o.grid == 0) throw UsageError("--grid must be positive");
  const ResolvedConfig cfg = resolve_config(o.common.config, o.common.overrides, o.common.seed);
  const auto batteries = load_fleet(o.data);
  PreprocessConfig pc;
  pc.grid = o.grid;
  const auto rows = ablate(batteries, cycles, dets, pc, cfg.model, cfg.training, o.common.seed,
                           [](const AblationRow& r) {
                             log::info(dataset_label(r.cycles), " ", detach_label(r.detach),
                                       r.outcome.ok ? " mape " + std::to_string(r.outcome.metrics.mape)
                                                    : " failed: " + r.outcome.error);
                           });
  fs::create_directories(o.out);
  RunManifest m("ablate", o.out);
  m.config = resolved_to_json(cfg);
  m.config["grid"] = o.grid;
  m.config["cycles"] = cycles;
  ojson cells = ojson::array();
  for (const auto& r : rows) {
    cells.push_back({{"dataset", dataset_label(r.cycles)}, {"detach", detach_key(r.detach)}, {"seed", r.seed},
                     {"ok", r.outcome.ok}, {"error", r.outcome.error}});
  }
  m.seeds = {{"seed", o.common.seed}, {"cells", cells}};
  m.inputs = {o.data.string()};
  write_artifact(m, o.out / "ablation.csv", ablation_csv(rows));
  m.write();
  return "wrote " + std::to_string(rows.size()) + " ablation rows to " + (o.out / "ablation.csv").string();
}

struct HyperoptOptions {
  fs::path data;
  std::size_t cycles = 10;
  std::size_t grid = 32;
  std::size_t budget = 20;
  CommonTrainOptions common;
  fs::path out;
};

inline std::string cmd_hyperopt(const HyperoptOptions& o) {
  require_cycles(o.cycles);
  if (o.budget < 4) throw UsageError("--budget must be at least 4");
  if (o.grid == 0) throw UsageError("--grid must be positive");
  const ResolvedConfig cfg = resolve_config(o.common.config, o.common.overrides, o.common.seed);
  const auto batteries = load_fleet(o.data);
  PreprocessConfig pc;
  pc.grid = o.grid;
  pc.n_input_cycles = o.cycles;
  const ExperimentData data = prepare_experiment(batteries, pc, o.common.seed);
  const SearchSpace space = fpnn_search_space();
  BayesOptions bo;
  bo.budget = o.budget;
  bo.seed = derive_seed(o.common.seed, "bayes");
  const auto result = bayes_optimize(validation_objective(data, space, cfg.model, cfg.training), space, bo,
                                     [&](const Trial& t) {
                                       log::info("trial ", t.index, " ", point_to_json(space, t.point).dump(), " ",
                                                 status_name(t.status), " ", t.objective);
                                     });
  ResolvedConfig best = cfg;
  best.model.grid = o.grid;
  apply_point(space, result.best.point, best.model, best.training);
  ojson best_json = resolved_to_json(best);
  best_json["objective"] = result.best.objective;

  fs::create_directories(o.out);
  RunManifest m("hyperopt", o.out);
  m.config = resolved_to_json(cfg);
  m.config["grid"] = o.grid;
  m.config["cycles"] = o.cycles;
  m.config["budget"] = o.budget;
  m.seeds = {{"seed", o.common.seed}, {"bayes", bo.seed}};
  m.inputs = {o.data.string()};
  write_artifact(m, o.out / "trials.csv", trials_csv(space, result.trials));
  write_artifact(m, o.out / "best_config.json", best_json.dump(2) + "\n");
  m.write();
  return "best validation MAPE " + std::to_string(result.best.objective) + "% at " +
         point_to_json(space, result.best.point).dump();
}

struct ExportOptions {
  fs::path checkpoint;
  std::size_t block = 0;
  std::string stream = "raw";
  fs::path out;
};

inline std::string cmd_export_weights(const ExportOptions& o) {
  if (!fs::exists(o.checkpoint)) throw IoError("checkpoint not found: " + o.checkpoint.string());
  const Checkpoint ck = load_checkpoint(o.checkpoint);
  auto mats = export_block_weights(ck.params, o.block, o.stream);
  static constexpr char kPanels[] = "abcdefgh";
  for (std::size_t i = 0; i < mats.size(); ++i) mats[i].name = std::string(1, kPanels[i]) + "_" + mats[i].name;
  fs::create_directories(o.out);
  RunManifest m("export-weights", o.out);
  m.config = {{"block", o.block}, {"stream", o.stream}, {"model", config_to_json(ck.params.config)}};
  m.inputs = {o.checkpoint.string()};
  for (const auto& p : write_block_weights(o.out, mats)) m.artifact(p);
  m.write();
  return "wrote " + std::to_string(mats.size()) + " weight matrices to " + o.out.string();
}

}  // namespace fpnn::app

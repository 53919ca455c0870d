#pragma once

#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fpnn/app/commands.hpp"

namespace fpnn::app {

inline const char* error_kind(const std::exception& e) {
  if (dynamic_cast<const UsageError*>(&e)) return "UsageError";
  if (dynamic_cast<const VersionError*>(&e)) return "VersionError";
  if (dynamic_cast<const FormatError*>(&e)) return "FormatError";
  if (dynamic_cast<const ShapeError*>(&e)) return "ShapeError";
  if (dynamic_cast<const NumericError*>(&e)) return "NumericError";
  if (dynamic_cast<const InvalidArgument*>(&e)) return "InvalidArgument";
  if (dynamic_cast<const DataError*>(&e)) return "DataError";
  if (dynamic_cast<const IoError*>(&e)) return "IoError";
  if (dynamic_cast<const std::filesystem::filesystem_error*>(&e)) return "IoError";
  return "Error";
}

/// Single machine-parsable line: `fpnn: error: <Kind>: <message>`.
inline void print_error(std::ostream& err, const std::string& kind, std::string message) {
  std::replace(message.begin(), message.end(), '\n', ' ');
  err << "fpnn: error: " << kind << ": " << message << "\n";
}

namespace detail {

inline void add_training_flags(CLI::App* sub, CommonTrainOptions& c, bool with_noi = true) {
  sub->add_option("--config", c.config, "JSON config with optional 'model' and 'training' sections");
  sub->add_option("--seed", c.seed, "Seed for splits, initialization and shuffling");
  if (with_noi) sub->add_option("--noi", c.overrides.noi, "Number of inception blocks");
  sub->add_option("--alpha", c.overrides.alpha, "Leaky ReLU slope");
  sub->add_option("--epochs", c.overrides.epochs, "Maximum epochs");
  sub->add_option("--batch-size", c.overrides.batch_size, "Mini-batch size (>= 2)");
  sub->add_option("--lr", c.overrides.learning_rate, "Adam learning rate");
  sub->add_option("--weight-decay", c.overrides.weight_decay, "Decoupled weight decay");
  sub->add_option("--patience", c.overrides.patience, "Early-stopping patience in epochs");
}

}  // namespace detail

/// Runs the command line; returns the process exit status (0 success,
/// 1 runtime failure, 2 usage error).
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Flexible parallel neural network for early battery life prediction"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every command");

  GenOptions gen;
  auto* g = app.add_subcommand("gen", "Generate a synthetic fleet in the canonical dataset layout");
  g->add_option("--n", gen.n, "Number of batteries")->capture_default_str();
  g->add_option("--seed", gen.seed, "Fleet seed")->capture_default_str();
  g->add_option("--life-min", gen.life_min, "Shortest target life in cycles")->capture_default_str();
  g->add_option("--life-max", gen.life_max, "Longest target life in cycles")->capture_default_str();
  g->add_option("--out", gen.out, "Output dataset directory")->required();

  PreprocessOptions pre;
  auto* p = app.add_subcommand("preprocess", "Build scaled train/test sample archives from a dataset");
  p->add_option("--data", pre.data, "Canonical dataset directory")->required();
  p->add_option("--cycles", pre.cycles, "Input cycles: 10, 20, 30 or 40")->capture_default_str();
  p->add_option("--grid", pre.grid, "Grid side G")->capture_default_str();
  p->add_option("--seed", pre.seed, "Split seed")->capture_default_str();
  p->add_option("--out", pre.out, "Output directory")->required();

  TrainOptions tr;
  auto* t = app.add_subcommand("train", "Train a model on a prepared directory");
  t->add_option("--data", tr.data, "Prepared directory (from preprocess) or train archive")->required();
  detail::add_training_flags(t, tr.common);
  t->add_option("--out", tr.out, "Output directory")->required();

  EvalOptions ev;
  auto* e = app.add_subcommand("eval", "Evaluate a checkpoint");
  e->add_option("--checkpoint", ev.checkpoint, "Checkpoint file")->required();
  e->add_option("--data", ev.data, "Prepared directory or sample archive")->required();
  e->add_option("--split", ev.split, "Split inside a prepared directory: train or test")->capture_default_str();
  e->add_option("--out", ev.out, "Output directory")->required();

  SweepOptions sw;
  auto* s = app.add_subcommand("sweep-noi", "Train one model per (input cycles, NOI) cell");
  s->add_option("--data", sw.data, "Canonical dataset directory")->required();
  s->add_option("--cycles", sw.cycles, "Cycle list, e.g. 10,20")->capture_default_str();
  s->add_option("--noi", sw.noi, "NOI list or range, e.g. 0-4")->capture_default_str();
  s->add_option("--grid", sw.grid, "Grid side G")->capture_default_str();
  detail::add_training_flags(s, sw.common, false);
  s->add_option("--out", sw.out, "Output directory")->required();

  AblateOptions ab;
  auto* a = app.add_subcommand("ablate", "Train one model per detachment");
  a->add_option("--data", ab.data, "Canonical dataset directory")->required();
  a->add_option("--cycles", ab.cycles, "Cycle list, e.g. 10,20")->capture_default_str();
  a->add_option("--detach", ab.detach, "Detachments: initial_layers,conv3d,residual,diff_branch,none")
      ->capture_default_str();
  a->add_option("--grid", ab.grid, "Grid side G")->capture_default_str();
  detail::add_training_flags(a, ab.common);
  a->add_option("--out", ab.out, "Output directory")->required();

  HyperoptOptions ho;
  auto* h = app.add_subcommand("hyperopt", "Bayesian search over training hyperparameters and NOI");
  h->add_option("--data", ho.data, "Canonical dataset directory")->required();
  h->add_option("--cycles", ho.cycles, "Input cycles")->capture_default_str();
  h->add_option("--grid", ho.grid, "Grid side G")->capture_default_str();
  h->add_option("--budget", ho.budget, "Number of trials (>= 4)")->capture_default_str();
  detail::add_training_flags(h, ho.common);
  h->add_option("--out", ho.out, "Output directory")->required();

  ExportOptions ex;
  auto* x = app.add_subcommand("export-weights", "Write the kernels of one inception block as CSV matrices");
  x->add_option("--checkpoint", ex.checkpoint, "Checkpoint file")->required();
  x->add_option("--block", ex.block, "Block index")->capture_default_str();
  x->add_option("--stream", ex.stream, "Stream: raw or diff")->capture_default_str();
  x->add_option("--out", ex.out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& h) {
    return app.exit(h, out, err);
  } catch (const CLI::CallForAllHelp& h) {
    return app.exit(h, out, err);
  } catch (const CLI::ParseError& pe) {
    print_error(err, "UsageError", pe.what());
    return 2;
  }

  try {
    std::string summary;
    if (*g) summary = cmd_gen(gen);
    else if (*p) summary = cmd_preprocess(pre);
    else if (*t) summary = cmd_train(tr);
    else if (*e) summary = cmd_eval(ev);
    else if (*s) summary = cmd_sweep_noi(sw);
    else if (*a) summary = cmd_ablate(ab);
    else if (*h) summary = cmd_hyperopt(ho);
    else if (*x) summary = cmd_export_weights(ex);
    out << summary << "\n";
    return 0;
  } catch (const UsageError& ue) {
    print_error(err, "UsageError", ue.what());
    return 2;
  } catch (const std::exception& ex_) {
    print_error(err, error_kind(ex_), ex_.what());
    return 1;
  }
}

}  // namespace fpnn::app

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>
#include <string>
#include <vector>

#include "fpnn/app/cli.hpp"

namespace fs = std::filesystem;
using namespace fpnn;
using namespace fpnn::app;

namespace {

struct CliRun {
  int code = -1;
  std::string out, err;
};

CliRun cli(std::vector<std::string> args) {
  args.insert(args.begin(), "fpnn");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  CliRun r;
  r.code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

nlohmann::json manifest(const fs::path& dir) { return nlohmann::json::parse(slurp(dir / kManifestName)); }

/// Golden template lines: `#` stands for one numeric field (%.4f or NaN).
void expect_matches_template(const std::string& csv, const fs::path& golden) {
  const auto want = lines_of(slurp(golden));
  const auto got = lines_of(csv);
  ASSERT_FALSE(want.empty()) << golden;
  ASSERT_EQ(got.size(), want.size()) << csv;
  const std::regex number(R"(-?[0-9]+\.[0-9]{4}|NaN)");
  for (std::size_t i = 0; i < want.size(); ++i) {
    std::vector<std::string> wf, gf;
    std::stringstream ws(want[i]), gs(got[i]);
    for (std::string f; std::getline(ws, f, ',');) wf.push_back(f);
    for (std::string f; std::getline(gs, f, ',');) gf.push_back(f);
    ASSERT_EQ(gf.size(), wf.size()) << "line " << i << ": " << got[i];
    for (std::size_t k = 0; k < wf.size(); ++k) {
      if (wf[k] == "#") {
        EXPECT_TRUE(std::regex_match(gf[k], number)) << "line " << i << " field " << k << ": " << gf[k];
      } else {
        EXPECT_EQ(gf[k], wf[k]) << "line " << i << " field " << k;
      }
    }
  }
}

const fs::path kGolden = FPNN_GOLDEN_DIR;

class Cli : public ::testing::Test {
 protected:
  static inline fs::path root;
  static inline fs::path fleet;
  static inline fs::path prep;

  static void SetUpTestSuite() {
    root = fs::temp_directory_path() / ("fpnn_cli_test_" + std::to_string(::getpid()));
    fs::remove_all(root);
    fs::create_directories(root);
    fleet = root / "fleet";
    prep = root / "prep";
    ASSERT_EQ(cli({"gen", "--n", "8", "--seed", "3", "--out", fleet.string()}).code, 0);
    ASSERT_EQ(cli({"preprocess", "--data", fleet.string(), "--cycles", "10", "--grid", "8", "--seed", "3", "--out",
                   prep.string()})
                  .code,
              0);
  }
  static void TearDownTestSuite() { fs::remove_all(root); }

  static std::vector<std::string> quick_train_flags() {
    return {"--noi", "1", "--epochs", "3", "--batch-size", "8", "--seed", "3"};
  }

  static fs::path trained_checkpoint() {
    const fs::path run = root / "run";
    if (!fs::exists(run / "checkpoint.fpnn")) {
      auto args = std::vector<std::string>{"train", "--data", prep.string(), "--out", run.string()};
      for (auto& f : quick_train_flags()) args.push_back(f);
      const auto r = cli(args);
      EXPECT_EQ(r.code, 0) << r.err;
    }
    return run / "checkpoint.fpnn";
  }
};

TEST_F(Cli, GenWritesFleetAndManifest) {
  const auto r = cli({"gen", "--n", "5", "--seed", "9", "--out", (root / "g1").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("generated 5 batteries: life min"), std::string::npos);
  const auto m = manifest(root / "g1");
  EXPECT_EQ(m["command"], "gen");
  EXPECT_EQ(m["seeds"]["seed"], 9);
  EXPECT_EQ(m["artifacts"].size(), 10u);
  EXPECT_EQ(load_canonical_dataset(root / "g1").size(), 5u);
}

TEST_F(Cli, GenRerunReproducesChecksums) {
  ASSERT_EQ(cli({"gen", "--n", "4", "--seed", "5", "--out", (root / "ga").string()}).code, 0);
  ASSERT_EQ(cli({"gen", "--n", "4", "--seed", "5", "--out", (root / "gb").string()}).code, 0);
  EXPECT_EQ(manifest(root / "ga")["artifacts"], manifest(root / "gb")["artifacts"]);
  ASSERT_EQ(cli({"gen", "--n", "4", "--seed", "6", "--out", (root / "gc").string()}).code, 0);
  EXPECT_NE(manifest(root / "ga")["artifacts"], manifest(root / "gc")["artifacts"]);
}

TEST_F(Cli, UsageErrorsExitTwoWithOneLine) {
  for (const auto& args : std::vector<std::vector<std::string>>{
           {"gen", "--n", "1", "--out", (root / "x").string()},
           {"preprocess", "--data", fleet.string(), "--cycles", "15", "--out", (root / "x").string()},
           {"hyperopt", "--data", fleet.string(), "--budget", "3", "--out", (root / "x").string()},
           {"sweep-noi", "--data", fleet.string(), "--noi", "2-1", "--out", (root / "x").string()},
           {"ablate", "--data", fleet.string(), "--detach", "head", "--out", (root / "x").string()},
           {"gen", "--bogus"},
           {"frobnicate"}}) {
    const auto r = cli(args);
    EXPECT_EQ(r.code, 2) << args[0];
    EXPECT_EQ(r.err.rfind("fpnn: error: UsageError: ", 0), 0u) << r.err;
    EXPECT_EQ(std::count(r.err.begin(), r.err.end(), '\n'), 1) << r.err;
  }
  EXPECT_FALSE(fs::exists(root / "x"));
}

TEST_F(Cli, PreprocessArchivesMatchInMemoryPipeline) {
  PreprocessConfig pc;
  pc.grid = 8;
  pc.n_input_cycles = 10;
  const ExperimentData data = prepare_experiment(load_canonical_dataset(fleet), pc, 3);

  const auto test = read_sample_set(prep / "test.fpnn");
  EXPECT_EQ(test, data.test);

  const auto train = read_sample_set(prep / "train.fpnn");
  EXPECT_EQ(train.size(), data.train.size() + data.val.size());
  EXPECT_EQ(select_batteries(train, data.validation.train), data.train);
  EXPECT_EQ(select_batteries(train, data.validation.test), data.val);

  const auto split = nlohmann::json::parse(slurp(prep / "split.json"));
  EXPECT_EQ(split["train"].get<std::vector<std::string>>(), data.split.train);
  EXPECT_EQ(split["test"].get<std::vector<std::string>>(), data.split.test);
  EXPECT_EQ(split["preprocess"]["grid"], 8);
}

TEST_F(Cli, TrainWritesCheckpointHistoryAndManifest) {
  const fs::path ck = trained_checkpoint();
  const fs::path run = ck.parent_path();
  const auto hist = lines_of(slurp(run / "history.csv"));
  ASSERT_EQ(hist.size(), 4u);
  EXPECT_EQ(hist[0], "epoch,train_loss,val_mape");
  const auto m = manifest(run);
  EXPECT_EQ(m["command"], "train");
  EXPECT_EQ(m["config"]["model"]["noi"], 1);
  EXPECT_EQ(m["config"]["training"]["epochs"], 3);
  EXPECT_TRUE(m["artifacts"].contains("checkpoint.fpnn"));
  EXPECT_EQ(m["artifacts"]["checkpoint.fpnn"], io::hex64(io::file_checksum(ck)));
  const Checkpoint c = load_checkpoint(ck);
  EXPECT_EQ(c.params.config.grid, 8u);
  EXPECT_TRUE(c.metadata.contains("scaler"));
  EXPECT_TRUE(c.metadata.contains("validation_batteries"));
}

TEST_F(Cli, TrainIsReproducible) {
  const fs::path ck = trained_checkpoint();
  auto args = std::vector<std::string>{"train", "--data", prep.string(), "--out", (root / "run2").string()};
  for (auto& f : quick_train_flags()) args.push_back(f);
  ASSERT_EQ(cli(args).code, 0);
  EXPECT_EQ(slurp(ck), slurp(root / "run2" / "checkpoint.fpnn"));
}

TEST_F(Cli, ConfigFilePrecedence) {
  const fs::path cfg = root / "cfg.json";
  std::ofstream(cfg) << R"({"model": {"noi": 2, "alpha": 0.05}, "training": {"epochs": 2, "learning_rate": 0.002}})";
  const fs::path out = root / "run_cfg";
  const auto r = cli({"train", "--data", prep.string(), "--config", cfg.string(), "--epochs", "1", "--out", out.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto m = manifest(out);
  EXPECT_EQ(m["config"]["model"]["noi"], 2);
  EXPECT_DOUBLE_EQ(m["config"]["model"]["alpha"].get<double>(), 0.05);
  EXPECT_EQ(m["config"]["training"]["epochs"], 1);  // flag beats file
  EXPECT_DOUBLE_EQ(m["config"]["training"]["learning_rate"].get<double>(), 0.002);

  std::ofstream(cfg) << R"({"optimizer": {}})";
  const auto bad = cli({"train", "--data", prep.string(), "--config", cfg.string(), "--out", out.string()});
  EXPECT_EQ(bad.code, 1);
  EXPECT_NE(bad.err.find("FormatError"), std::string::npos) << bad.err;
}

TEST_F(Cli, EvalTwiceGivesIdenticalOutputs) {
  const fs::path ck = trained_checkpoint();
  ASSERT_EQ(cli({"eval", "--checkpoint", ck.string(), "--data", prep.string(), "--out", (root / "e1").string()}).code,
            0);
  ASSERT_EQ(cli({"eval", "--checkpoint", ck.string(), "--data", prep.string(), "--out", (root / "e2").string()}).code,
            0);
  EXPECT_EQ(slurp(root / "e1" / "report.json"), slurp(root / "e2" / "report.json"));
  EXPECT_EQ(slurp(root / "e1" / "residuals.csv"), slurp(root / "e2" / "residuals.csv"));
  const auto rep = nlohmann::json::parse(slurp(root / "e1" / "report.json"));
  const auto test = read_sample_set(prep / "test.fpnn");
  EXPECT_EQ(rep["n_samples"], test.size());
  for (const char* k : {"mape", "mae", "rmse"}) EXPECT_TRUE(std::isfinite(rep["metrics"][k].get<double>()));
  const auto res = lines_of(slurp(root / "e1" / "residuals.csv"));
  EXPECT_EQ(res[0], "battery_id,anchor_cycle,label,prediction,residual");
  EXPECT_EQ(res.size(), test.size() + 1);
}

TEST_F(Cli, EvalErrors) {
  const auto missing = cli({"eval", "--checkpoint", (root / "nope.fpnn").string(), "--data", prep.string(), "--out",
                            (root / "ex").string()});
  EXPECT_EQ(missing.code, 1);
  EXPECT_EQ(missing.err.rfind("fpnn: error: IoError: ", 0), 0u) << missing.err;

  const fs::path junk = root / "junk.fpnn";
  std::ofstream(junk) << "not a checkpoint";
  const auto corrupt = cli({"eval", "--checkpoint", junk.string(), "--data", prep.string(), "--out",
                            (root / "ex").string()});
  EXPECT_EQ(corrupt.code, 1);
  EXPECT_NE(corrupt.err.find("FormatError"), std::string::npos) << corrupt.err;
  EXPECT_FALSE(fs::exists(root / "ex"));
}

TEST_F(Cli, ExportWeightsWritesEightPanels) {
  const fs::path ck = trained_checkpoint();
  const fs::path out = root / "w";
  ASSERT_EQ(cli({"export-weights", "--checkpoint", ck.string(), "--block", "0", "--out", out.string()}).code, 0);
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(out))
    if (e.path().extension() == ".csv") names.push_back(e.path().filename().string());
  std::sort(names.begin(), names.end());
  ASSERT_EQ(names.size(), 8u);
  for (std::size_t i = 0; i < names.size(); ++i) EXPECT_EQ(names[i][0], static_cast<char>('a' + i)) << names[i];

  const auto range = cli({"export-weights", "--checkpoint", ck.string(), "--block", "1", "--out", out.string()});
  EXPECT_EQ(range.code, 1);
  EXPECT_NE(range.err.find("out of range"), std::string::npos) << range.err;
  const auto stream = cli({"export-weights", "--checkpoint", ck.string(), "--stream", "sideways", "--out", out.string()});
  EXPECT_NE(stream.code, 0);
}

TEST_F(Cli, ExportWeightsOnUntrainedCheckpoint) {
  FpnnConfig c;
  c.grid = 8;
  c.noi = 3;
  const fs::path ck = root / "untrained.fpnn";
  save_checkpoint(ck, build_model(c));
  EXPECT_EQ(cli({"export-weights", "--checkpoint", ck.string(), "--block", "2", "--stream", "diff", "--out",
                 (root / "wu").string()})
                .code,
            0);
  const auto r = cli({"export-weights", "--checkpoint", ck.string(), "--block", "5", "--out", (root / "wu").string()});
  EXPECT_EQ(r.code, 1);
}

TEST_F(Cli, SweepSmallGridRowsAndSeeds) {
  const fs::path out = root / "sweep";
  const auto r = cli({"sweep-noi", "--data", fleet.string(), "--cycles", "10,20", "--noi", "0-2", "--grid", "8",
                      "--epochs", "1", "--seed", "3", "--out", out.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = lines_of(slurp(out / "sweep.csv"));
  ASSERT_EQ(rows.size(), 7u);
  EXPECT_EQ(rows[0], "dataset,blocks,mape,mae,rmse");
  const auto cells = manifest(out)["seeds"]["cells"];
  ASSERT_EQ(cells.size(), 6u);
  for (const auto& c : cells) {
    const std::size_t cycles = std::stoul(c["dataset"].get<std::string>());
    EXPECT_EQ(c["seed"], sweep_cell_seed(3, cycles, c["blocks"].get<std::size_t>()));
  }
}

TEST_F(Cli, SweepFullGridMatchesGolden) {
  const fs::path out = root / "sweep_full";
  const auto r = cli({"sweep-noi", "--data", fleet.string(), "--grid", "8", "--epochs", "1", "--seed", "3", "--out",
                      out.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  expect_matches_template(slurp(out / "sweep.csv"), kGolden / "sweep_full_grid.template");
}

TEST_F(Cli, AblateDefaultRowsMatchGolden) {
  const fs::path out = root / "ablate";
  const auto r = cli({"ablate", "--data", fleet.string(), "--grid", "8", "--noi", "1", "--epochs", "1", "--seed", "3",
                      "--out", out.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  expect_matches_template(slurp(out / "ablation.csv"), kGolden / "ablation_default.template");
}

TEST_F(Cli, AblateKeepsTableOrderForSubsets) {
  const fs::path out = root / "ablate_sub";
  ASSERT_EQ(cli({"ablate", "--data", fleet.string(), "--grid", "8", "--noi", "1", "--epochs", "1", "--detach",
                 "none,diff_branch", "--out", out.string()})
                .code,
            0);
  const auto rows = lines_of(slurp(out / "ablation.csv"));
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[1].substr(0, 19), "10 Cycles,A branch,");
  EXPECT_EQ(rows[2].substr(0, 20), "10 Cycles,No detach,");
}

TEST_F(Cli, DivergedAblationCellsBecomeNanRows) {
  // A huge step size drives the loss to infinity in every cell; the run
  // still completes and writes one NaN row per detachment.
  const fs::path out = root / "ablate_nan";
  const auto r = cli({"ablate", "--data", fleet.string(), "--grid", "8", "--noi", "1", "--epochs", "3", "--lr", "1e30",
                      "--seed", "3", "--out", out.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(slurp(out / "ablation.csv"), slurp(kGolden / "ablation_diverged.csv"));
  for (const auto& c : manifest(out)["seeds"]["cells"]) {
    EXPECT_FALSE(c["ok"].get<bool>());
    EXPECT_NE(c["error"].get<std::string>().find("non-finite"), std::string::npos);
  }
}

TEST(TableCsv, MixedOutcomesMatchGolden) {
  auto ok = [](double mape, double mae, double rmse) {
    CellOutcome o;
    o.ok = true;
    o.metrics = {mape, mae, rmse};
    return o;
  };
  const CellOutcome failed;
  std::vector<AblationRow> ab{{10, Detach::initial_layers, 1, failed},    {10, Detach::conv3d, 1, ok(4.5, 30.25, 41.0)},
                              {10, Detach::residual, 1, ok(3.14159, 21.0, 28.999999)},
                              {10, Detach::diff_branch, 1, ok(98.92, 806.1, 914.7)},
                              {10, Detach::none, 1, ok(2.47, 20.5, 28.0)},  {40, Detach::initial_layers, 2, failed}};
  EXPECT_EQ(ablation_csv(ab), slurp(kGolden / "ablation_mixed.csv"));

  std::vector<SweepRow> sw{{10, 0, 1, ok(5.0, 40.0, 50.0)}, {10, 1, 2, failed}, {40, 4, 3, ok(0.88, 7.25, 10.125)}};
  EXPECT_EQ(sweep_csv(sw), slurp(kGolden / "sweep_mixed.csv"));
}

TEST_F(Cli, HyperoptTrialsBestConfigAndDeterminism) {
  const std::vector<std::string> base{"hyperopt", "--data", fleet.string(), "--grid", "8", "--budget", "10",
                                      "--epochs", "2", "--seed", "3"};
  auto with_out = [&](const fs::path& out) {
    auto a = base;
    a.push_back("--out");
    a.push_back(out.string());
    return a;
  };
  const auto r = cli(with_out(root / "ho1"));
  ASSERT_EQ(r.code, 0) << r.err;
  const auto rows = lines_of(slurp(root / "ho1" / "trials.csv"));
  ASSERT_EQ(rows.size(), 11u);
  EXPECT_EQ(rows[0], "trial,point_json,objective,status");

  double initial_best = std::numeric_limits<double>::infinity(), best = initial_best;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto last = rows[i].rfind(',');
    const auto prev = rows[i].rfind(',', last - 1);
    const std::string status = rows[i].substr(last + 1);
    if (status != "ok") continue;
    const double v = std::stod(rows[i].substr(prev + 1, last - prev - 1));
    best = std::min(best, v);
    if (i <= 4) initial_best = std::min(initial_best, v);
  }
  EXPECT_LE(best, initial_best);
  const auto bc = nlohmann::json::parse(slurp(root / "ho1" / "best_config.json"));
  EXPECT_DOUBLE_EQ(bc["objective"].get<double>(), best);

  ASSERT_EQ(cli(with_out(root / "ho2")).code, 0);
  EXPECT_EQ(slurp(root / "ho1" / "trials.csv"), slurp(root / "ho2" / "trials.csv"));
  EXPECT_EQ(slurp(root / "ho1" / "best_config.json"), slurp(root / "ho2" / "best_config.json"));

  const auto t = cli({"train", "--data", prep.string(), "--config", (root / "ho1" / "best_config.json").string(),
                      "--epochs", "1", "--out", (root / "ho_train").string()});
  ASSERT_EQ(t.code, 0) << t.err;
  EXPECT_EQ(manifest(root / "ho_train")["config"]["model"]["noi"], bc["model"]["noi"]);
}

TEST(CliHelp, HelpExitsZero) {
  const auto r = cli({"--help"});
  EXPECT_EQ(r.code, 0);
  for (const char* c : {"gen", "preprocess", "train", "eval", "sweep-noi", "ablate", "hyperopt", "export-weights"})
    EXPECT_NE(r.out.find(c), std::string::npos) << c;
}

TEST(IndexList, ParsesListsAndRanges) {
  EXPECT_EQ(parse_index_list("0-2,4", "--noi"), (std::vector<std::size_t>{0, 1, 2, 4}));
  EXPECT_EQ(parse_index_list("20,10,20", "--cycles"), (std::vector<std::size_t>{10, 20}));
  EXPECT_THROW(parse_index_list("", "--noi"), UsageError);
  EXPECT_THROW(parse_index_list("3-1", "--noi"), UsageError);
  EXPECT_THROW(parse_index_list("a", "--noi"), UsageError);
}

}  // namespace

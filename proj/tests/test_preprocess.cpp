#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "fpnn/preprocess/battery.hpp"
#include "fpnn/preprocess/filters.hpp"
#include "fpnn/preprocess/samples.hpp"

using namespace fpnn;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  auto p = fs::temp_directory_path() / ("fpnn_pre_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// Smooth, cycle-dependent curves with a little seeded noise.
BatteryRecord toy_battery(const std::string& id, int cycles, int life, std::uint64_t seed) {
  Rng rng(seed);
  BatteryRecord b{id, {}, life, kNominalCapacityAh, "toy"};
  for (int k = 1; k <= cycles; ++k) {
    CycleCurve c{k, {}, {}, {}, {}};
    const std::size_t n = 40;
    for (std::size_t i = 0; i < n; ++i) {
      const double q = 1.05 * static_cast<double>(i) / static_cast<double>(n - 1);
      c.charged_capacity.push_back(q);
      c.voltage.push_back(3.0 + 0.5 * q + 0.002 * k * q + 0.001 * rng.normal());
      c.current.push_back(4.4 - 1.0 * q * q - 0.001 * k + 0.001 * rng.normal());
      c.temperature.push_back(30.0 + 3.0 * q + 0.01 * k + 0.01 * rng.normal());
    }
    b.cycles.push_back(std::move(c));
  }
  return b;
}

std::vector<double> naive_hampel(const std::vector<double>& x, std::size_t window, double k) {
  auto median = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
  };
  const std::ptrdiff_t half = static_cast<std::ptrdiff_t>(window / 2);
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(x.size());
  std::vector<double> out = x;
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    std::vector<double> w;
    for (std::ptrdiff_t j = std::max<std::ptrdiff_t>(0, i - half); j <= std::min(n - 1, i + half); ++j)
      w.push_back(x[static_cast<std::size_t>(j)]);
    const double med = median(w);
    for (double& v : w) v = std::abs(v - med);
    const double mad = median(w);
    if (std::abs(x[static_cast<std::size_t>(i)] - med) > k * 1.4826 * mad) out[static_cast<std::size_t>(i)] = med;
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------- hampel

TEST(Hampel, ConstantSeriesUnchanged) {
  std::vector<double> x(25, 3.25);
  const auto r = hampel_filter_counted(x);
  EXPECT_EQ(r.series, x);
  EXPECT_EQ(r.replaced, 0u);
}

TEST(Hampel, SingleSpikeReplaced) {
  const std::vector<double> x{1, 1, 1, 100, 1, 1, 1};
  const auto r = hampel_filter_counted(x);
  EXPECT_EQ(r.series, (std::vector<double>{1, 1, 1, 1, 1, 1, 1}));
  EXPECT_EQ(r.replaced, 1u);
}

TEST(Hampel, GaussianDrawMatchesSortingOracle) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    Rng rng(seed);
    std::vector<double> x(200);
    for (double& v : x) v = rng.normal();
    const auto r = hampel_filter_counted(x, 11, 3.0);
    EXPECT_EQ(r.series, naive_hampel(x, 11, 3.0)) << "seed " << seed;
  }
}

TEST(Hampel, InlierGaussianDrawUnchanged) {
  // The first seeded draw that the sorting oracle leaves untouched.
  std::vector<double> x(100);
  bool found = false;
  for (std::uint64_t seed = 1; seed <= 500 && !found; ++seed) {
    Rng rng(seed);
    for (double& v : x) v = rng.normal();
    found = naive_hampel(x, 11, 3.0) == x;
  }
  ASSERT_TRUE(found);
  const auto r = hampel_filter_counted(x, 11, 3.0);
  EXPECT_EQ(r.replaced, 0u);
  EXPECT_EQ(r.series, x);
}

TEST(Hampel, RejectsShortSeriesAndEvenWindow) {
  EXPECT_THROW(hampel_filter(std::vector<double>{1, 2}), InvalidArgument);
  EXPECT_THROW(hampel_filter(std::vector<double>{1, 2, 3, 4}, 4), InvalidArgument);
}

// ---------------------------------------------------------------- savitzky-golay

TEST(SavitzkyGolay, ReproducesPolynomialsUpToOrder) {
  std::vector<double> quad, cubic;
  for (int i = 0; i < 30; ++i) {
    const double t = 0.1 * i - 1.3;
    quad.push_back(2.0 - 0.7 * t + 1.5 * t * t);
    cubic.push_back(0.3 + t - 0.25 * t * t + 0.8 * t * t * t);
  }
  const auto q = savitzky_golay(quad, 7, 2);
  for (std::size_t i = 0; i < quad.size(); ++i) EXPECT_NEAR(q[i], quad[i], 1e-9);
  const auto c = savitzky_golay(cubic, 9, 3);
  for (std::size_t i = 0; i < cubic.size(); ++i) EXPECT_NEAR(c[i], cubic[i], 1e-9);
}

TEST(SavitzkyGolay, ConstantUnchanged) {
  std::vector<double> x(20, -4.5);
  for (double v : savitzky_golay(x)) EXPECT_NEAR(v, -4.5, 1e-12);
}

TEST(SavitzkyGolay, MatchesPerWindowLeastSquares) {
  Rng rng(11);
  const std::size_t n = 25, window = 7, order = 2, half = window / 2;
  std::vector<double> x(n);
  for (double& v : x) v = rng.uniform(-1, 1);
  const auto y = savitzky_golay(x, window, order);

  auto fit_eval = [&](std::size_t start, double offset) {
    Eigen::MatrixXd A(window, order + 1);
    Eigen::VectorXd b(window);
    for (std::size_t j = 0; j < window; ++j) {
      const double t = static_cast<double>(j) - static_cast<double>(half);
      for (std::size_t k = 0; k <= order; ++k) A(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k)) = std::pow(t, k);
      b(static_cast<Eigen::Index>(j)) = x[start + j];
    }
    const Eigen::VectorXd coef = A.colPivHouseholderQr().solve(b);
    double s = 0.0;
    for (std::size_t k = 0; k <= order; ++k) s += coef(static_cast<Eigen::Index>(k)) * std::pow(offset, k);
    return s;
  };
  for (std::size_t i = 0; i < n; ++i) {
    double expected;
    if (i < half) {
      expected = fit_eval(0, static_cast<double>(i) - static_cast<double>(half));
    } else if (i + half >= n) {
      expected = fit_eval(n - window, static_cast<double>(i - (n - window)) - static_cast<double>(half));
    } else {
      expected = fit_eval(i - half, 0.0);
    }
    EXPECT_NEAR(y[i], expected, 1e-9) << "index " << i;
  }
}

TEST(SavitzkyGolay, RejectsInvalidArguments) {
  std::vector<double> x(20, 1.0);
  EXPECT_THROW(savitzky_golay(x, 6, 2), InvalidArgument);
  EXPECT_THROW(savitzky_golay(x, 3, 1), InvalidArgument);
  EXPECT_THROW(savitzky_golay(x, 7, 7), InvalidArgument);
  EXPECT_THROW(savitzky_golay(std::vector<double>(5, 1.0), 7, 2), InvalidArgument);
}

// ---------------------------------------------------------------- dataset io

TEST(Dataset, EmptyDirectoryGivesEmptyList) {
  EXPECT_TRUE(load_canonical_dataset(fresh_dir("empty")).empty());
  EXPECT_THROW(load_canonical_dataset(fresh_dir("empty") / "missing"), IoError);
}

TEST(Dataset, RoundTripIsIdentical) {
  const auto root = fresh_dir("roundtrip");
  const auto a = toy_battery("b1", 12, 480, 5);
  const auto b = toy_battery("b0", 11, 300, 6);
  write_battery(root / "b1", a);
  write_battery(root / "b0", b);
  const auto loaded = load_canonical_dataset(root);
  ASSERT_EQ(loaded.size(), 2u);
  EXPECT_EQ(loaded[0], b);
  EXPECT_EQ(loaded[1], a);
}

TEST(Dataset, DescendingGridNamesTheCycle) {
  const auto root = fresh_dir("descending");
  auto b = toy_battery("bad", 5, 100, 1);
  std::swap(b.cycles[2].charged_capacity[4], b.cycles[2].charged_capacity[5]);
  write_battery(root / "bad", b);
  try {
    load_canonical_dataset(root);
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("cycle 3"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("bad"), std::string::npos);
  }
}

TEST(Dataset, MissingMetadataAndLengthMismatch) {
  const auto root = fresh_dir("broken");
  write_battery(root / "x", toy_battery("x", 4, 50, 2));
  fs::remove(root / "x" / "meta.json");
  EXPECT_THROW(load_canonical_dataset(root), DataError);

  auto b = toy_battery("y", 4, 50, 2);
  b.cycles[1].voltage.pop_back();
  EXPECT_THROW(validate_record(b), DataError);
}

// ---------------------------------------------------------------- resample

TEST(Resample, LinearRampIsLinearInFlatIndex) {
  CycleCurve c{1, {}, {}, {}, {}};
  for (int i = 0; i <= 20; ++i) {
    const double q = 0.05 * i;
    c.charged_capacity.push_back(q);
    c.voltage.push_back(2.0 + 3.0 * q);
    c.current.push_back(-q);
    c.temperature.push_back(25.0);
  }
  const std::size_t G = 4;
  const Tensor f = resample_to_grid(c, G);
  ASSERT_EQ(f.shape(), (Shape{3, G, G}));
  for (std::size_t k = 0; k < G * G; ++k) {
    const double q = 1.0 * static_cast<double>(k) / 15.0;
    EXPECT_NEAR(f[k], 2.0 + 3.0 * q, 1e-12);
    EXPECT_NEAR(f[16 + k], -q, 1e-12);
    EXPECT_NEAR(f[32 + k], 25.0, 1e-12);
  }
}

TEST(Resample, SingleCellTakesGridCentre) {
  CycleCurve c{1, {0.0, 0.4, 1.0}, {1.0, 2.0, 5.0}, {0, 0, 0}, {0, 0, 0}};
  const Tensor f = resample_to_grid(c, 1);
  // centre 0.5 lies in [0.4, 1.0]: 2 + (0.1 / 0.6) * 3
  EXPECT_NEAR(f[0], 2.5, 1e-12);
}

TEST(Resample, PiecewiseLinearProbes) {
  // Knots at q = 0, 0.3, 0.5, 1.2 with voltages 1, 4, 0, 7; G = 3 gives
  // targets k * 1.2 / 8.
  CycleCurve c{1, {0.0, 0.3, 0.5, 1.2}, {1.0, 4.0, 0.0, 7.0}, {0, 0, 0, 0}, {0, 0, 0, 0}};
  const Tensor f = resample_to_grid(c, 3);
  // k=1: q=0.15 -> 1 + 0.5*3 = 2.5
  EXPECT_NEAR(f[1], 2.5, 1e-12);
  // k=2: q=0.3 -> 4
  EXPECT_NEAR(f[2], 4.0, 1e-12);
  // k=3: q=0.45 -> 4 - 0.75*4 = 1
  EXPECT_NEAR(f[3], 1.0, 1e-12);
  // k=5: q=0.75 -> (0.25/0.7)*7 = 2.5
  EXPECT_NEAR(f[5], 2.5, 1e-12);
  // k=8: q=1.2 -> 7
  EXPECT_NEAR(f[8], 7.0, 1e-12);
}

TEST(Resample, ClampsBelowFirstSampleAndRejectsShortCurve) {
  CycleCurve c{1, {0.2, 1.0}, {3.0, 4.0}, {1, 1}, {0, 0}};
  const Tensor f = resample_to_grid(c, 2);
  EXPECT_EQ(f[0], 3.0);
  EXPECT_NEAR(f[1], 3.0 + (1.0 / 3.0 - 0.2) / 0.8, 1e-12);
  CycleCurve one{1, {0.5}, {1.0}, {1.0}, {1.0}};
  EXPECT_THROW(resample_to_grid(one, 2), DataError);
}

// ---------------------------------------------------------------- samples

TEST(Samples, SevenSamplesForTenCyclesAndFrameOrder) {
  const auto b = toy_battery("b", 12, 400, 9);
  PreprocessConfig cfg;
  cfg.grid = 4;
  cfg.n_input_cycles = 10;
  const auto samples = assemble_samples(b, cfg);
  ASSERT_EQ(samples.size(), 7u);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    EXPECT_EQ(samples[i].anchor_cycle, static_cast<int>(i) + 4);
    EXPECT_EQ(samples[i].label, 400.0);
    EXPECT_EQ(samples[i].battery_id, "b");
    EXPECT_EQ(samples[i].raw.shape(), (Shape{3, 4, 4, 4}));
    EXPECT_EQ(samples[i].diff.shape(), (Shape{3, 3, 4, 4}));
  }
  // anchor 4 stacks frames of cycles 1, 2, 3, 4
  const auto& s = samples[0];
  for (int d = 0; d < 4; ++d) {
    const Tensor frame = cycle_frame(b.cycles[static_cast<std::size_t>(d)], cfg);
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t k = 0; k < 16; ++k) EXPECT_EQ(s.raw[(c * 4 + static_cast<std::size_t>(d)) * 16 + k], frame[c * 16 + k]);
  }
}

TEST(Samples, DiffIsRawMinusFirstFrame) {
  const auto b = toy_battery("b", 10, 400, 4);
  PreprocessConfig cfg;
  cfg.grid = 5;
  for (const auto& s : assemble_samples(b, cfg)) {
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t d = 1; d < 4; ++d)
        for (std::size_t k = 0; k < 25; ++k)
          EXPECT_EQ(s.diff[(c * 3 + d - 1) * 25 + k], s.raw[(c * 4 + d) * 25 + k] - s.raw[(c * 4) * 25 + k]);
  }
}

TEST(Samples, InsufficientCyclesRejected) {
  PreprocessConfig cfg;
  cfg.n_input_cycles = 20;
  EXPECT_THROW(assemble_samples(toy_battery("short", 12, 100, 1), cfg), DataError);
}

TEST(Samples, DeterministicAcrossRuns) {
  PreprocessConfig cfg;
  cfg.grid = 6;
  const auto a = assemble_samples(toy_battery("b", 10, 200, 8), cfg);
  const auto b = assemble_samples(toy_battery("b", 10, 200, 8), cfg);
  EXPECT_EQ(a, b);
}

// ---------------------------------------------------------------- scaler

TEST(Scaler, MidpointAndEndpoints) {
  SamplePair a{Tensor(Shape{3, 4, 1, 1}, 0.0), Tensor(Shape{3, 3, 1, 1}, -1.0), 100.0, "a", 4};
  SamplePair b{Tensor(Shape{3, 4, 1, 1}, 10.0), Tensor(Shape{3, 3, 1, 1}, 3.0), 200.0, "b", 4};
  const std::vector<SamplePair> train{a, b};
  const auto p = fit_scaler(train);
  EXPECT_EQ(p.raw_min[1], 0.0);
  EXPECT_EQ(p.raw_max[1], 10.0);
  SamplePair mid{Tensor(Shape{3, 4, 1, 1}, 5.0), Tensor(Shape{3, 3, 1, 1}, 1.0), 150.0, "m", 4};
  const auto m = apply_scaler(mid, p);
  for (double v : m.raw.values()) EXPECT_EQ(v, 0.0);
  for (double v : m.diff.values()) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(m.label, 150.0);
  const auto lo = apply_scaler(a, p), hi = apply_scaler(b, p);
  for (double v : lo.raw.values()) EXPECT_EQ(v, -1.0);
  for (double v : hi.raw.values()) EXPECT_EQ(v, 1.0);
}

TEST(Scaler, DegenerateChannelRejected) {
  SamplePair a{Tensor(Shape{3, 4, 1, 1}, 1.0), Tensor(Shape{3, 3, 1, 1}, 0.0), 1.0, "a", 4};
  const std::vector<SamplePair> one{a};
  EXPECT_THROW(fit_scaler(one), DataError);
}

TEST(Scaler, TrainSetMapsIntoUnitRange) {
  PreprocessConfig cfg;
  cfg.grid = 4;
  std::vector<SamplePair> all;
  for (int i = 0; i < 6; ++i) {
    auto s = assemble_samples(toy_battery("b" + std::to_string(i), 10, 100 + 50 * i, 20 + i), cfg);
    all.insert(all.end(), s.begin(), s.end());
  }
  const auto p = fit_scaler(all);
  for (const auto& s : apply_scaler(all, p)) {
    for (double v : s.raw.values()) {
      EXPECT_GE(v, -1.0);
      EXPECT_LE(v, 1.0);
    }
    for (double v : s.diff.values()) {
      EXPECT_GE(v, -1.0);
      EXPECT_LE(v, 1.0);
    }
  }
}

// ---------------------------------------------------------------- split

std::vector<std::string> ids(std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back("cell" + std::to_string(i));
  return out;
}

TEST(Split, CanonicalSizes) {
  const auto s124 = split_train_test(ids(124), 7);
  EXPECT_EQ(s124.train.size(), 94u);
  EXPECT_EQ(s124.test.size(), 30u);
  const auto s62 = split_train_test(ids(62), 7);
  EXPECT_EQ(s62.train.size(), static_cast<std::size_t>(std::lround(62.0 * 94.0 / 124.0)));
  EXPECT_EQ(s62.train.size(), 47u);
  EXPECT_EQ(s62.test.size(), 15u);
}

TEST(Split, DeterministicAndDisjoint) {
  const auto a = split_train_test(ids(40), 3);
  const auto b = split_train_test(ids(40), 3);
  EXPECT_EQ(a.train, b.train);
  EXPECT_EQ(a.test, b.test);
  std::set<std::string> train(a.train.begin(), a.train.end());
  for (const auto& t : a.test) EXPECT_EQ(train.count(t), 0u);
  EXPECT_EQ(train.size() + a.test.size(), 40u);
  EXPECT_NE(split_train_test(ids(40), 4).train, a.train);
}

TEST(Split, ProportionalRoundingProperty) {
  for (std::size_t n = 2; n <= 300; ++n) {
    const auto s = split_train_test(ids(n), n);
    const double exact = static_cast<double>(n) * 94.0 / 124.0;
    const auto expected = std::clamp<std::size_t>(static_cast<std::size_t>(std::floor(exact + 0.5)), 1, n - 1);
    EXPECT_EQ(s.train.size(), expected) << n;
  }
}

TEST(Split, TooFewBatteries) { EXPECT_THROW(split_train_test(ids(1), 1), InvalidArgument); }

// ---------------------------------------------------------------- archives

TEST(SampleArchive, PackUnpackRoundTrip) {
  PreprocessConfig cfg;
  cfg.grid = 3;
  const auto samples = assemble_samples(toy_battery("z", 10, 321, 2), cfg);
  std::vector<std::string> bids;
  for (const auto& s : samples) bids.push_back(s.battery_id);
  const auto path = fresh_dir("archive") / "train.bin";
  io::write_archive(path, pack_samples(samples));
  EXPECT_EQ(unpack_samples(io::read_archive(path), bids), samples);
}

#pragma once

// Gaussian-process regression on the unit cube.
//
// Kernel k(a, b) = s2 exp(-0.5 sum_i ((a_i - b_i) / l_i)^2) plus noise on the
// diagonal. Objectives are standardized before conditioning; predictions are
// returned in the original units.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "fpnn/core/error.hpp"
#include "fpnn/core/log.hpp"
#include "fpnn/core/random.hpp"

namespace fpnn {

using GpPoint = std::vector<double>;

struct GpHyper {
  std::vector<double> length_scales;  // one per dimension
  double signal_var = 1.0;            // in standardized units
  double noise_var = 1e-6;            // in standardized units
};

struct GpSurrogate {
  std::size_t dim = 0;
  std::vector<GpPoint> points;
  std::vector<double> targets;  // standardized
  double y_mean = 0.0;
  double y_scale = 1.0;
  GpHyper hyper;
  double jitter = 0.0;          // extra diagonal added to reach positive definiteness
  std::vector<double> chol;     // lower factor of K + (noise + jitter) I, row-major n x n
  std::vector<double> alpha;    // (K + (noise + jitter) I)^-1 targets
};

struct GpPrediction {
  double mean = 0.0;
  double variance = 0.0;
};

inline constexpr double kMaxJitter = 1e-6;

namespace detail {

inline double se_kernel(const GpPoint& a, const GpPoint& b, const GpHyper& h) {
  double r2 = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = (a[i] - b[i]) / h.length_scales[i];
    r2 += d * d;
  }
  return h.signal_var * std::exp(-0.5 * r2);
}

/// In-place Cholesky factorization of a symmetric n x n matrix (row-major).
/// Returns false when a pivot is not strictly positive.
inline bool cholesky(std::vector<double>& a, std::size_t n) {
  for (std::size_t j = 0; j < n; ++j) {
    double d = a[j * n + j];
    for (std::size_t k = 0; k < j; ++k) d -= a[j * n + k] * a[j * n + k];
    if (!(d > 0.0) || !std::isfinite(d)) return false;
    const double ljj = std::sqrt(d);
    a[j * n + j] = ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = a[i * n + j];
      for (std::size_t k = 0; k < j; ++k) s -= a[i * n + k] * a[j * n + k];
      a[i * n + j] = s / ljj;
    }
    for (std::size_t i = 0; i < j; ++i) a[i * n + j] = 0.0;
  }
  return true;
}

/// Solves L z = b in place.
inline void forward_solve(const std::vector<double>& l, std::size_t n, std::vector<double>& b) {
  for (std::size_t i = 0; i < n; ++i) {
    double s = b[i];
    for (std::size_t k = 0; k < i; ++k) s -= l[i * n + k] * b[k];
    b[i] = s / l[i * n + i];
  }
}

/// Solves L^T z = b in place.
inline void backward_solve(const std::vector<double>& l, std::size_t n, std::vector<double>& b) {
  for (std::size_t ii = n; ii-- > 0;) {
    double s = b[ii];
    for (std::size_t k = ii + 1; k < n; ++k) s -= l[k * n + ii] * b[k];
    b[ii] = s / l[ii * n + ii];
  }
}

inline void check_points(std::span<const GpPoint> points, std::span<const double> objectives) {
  if (points.size() != objectives.size()) throw ShapeError("gp: point and objective counts differ");
  if (points.empty()) throw InvalidArgument("gp needs observations");
  const std::size_t d = points[0].size();
  if (d == 0) throw InvalidArgument("gp points need at least one dimension");
  for (const auto& p : points) {
    if (p.size() != d) throw ShapeError("gp: points have different dimensions");
    for (double v : p)
      if (!std::isfinite(v)) throw NumericError("gp: non-finite coordinate");
  }
  for (double y : objectives)
    if (!std::isfinite(y)) throw NumericError("gp: non-finite objective");
}

inline std::size_t count_distinct(std::span<const GpPoint> points) {
  std::vector<GpPoint> sorted(points.begin(), points.end());
  std::sort(sorted.begin(), sorted.end());
  return static_cast<std::size_t>(std::unique(sorted.begin(), sorted.end()) - sorted.begin());
}

inline void check_hyper(const GpHyper& h, std::size_t dim) {
  if (h.length_scales.size() != dim) throw ShapeError("gp: one length scale per dimension required");
  for (double l : h.length_scales)
    if (!(l > 0.0) || !std::isfinite(l)) throw InvalidArgument("gp: length scales must be positive");
  if (!(h.signal_var > 0.0) || !std::isfinite(h.signal_var)) throw InvalidArgument("gp: signal variance must be positive");
  if (!(h.noise_var >= 0.0) || !std::isfinite(h.noise_var)) throw InvalidArgument("gp: noise variance must be >= 0");
}

}  // namespace detail

/// Exact GP posterior for fixed kernel hyperparameters. The diagonal jitter
/// escalates from 0 through 1e-12 .. 1e-6 until the factorization succeeds.
inline GpSurrogate gp_condition(std::span<const GpPoint> points, std::span<const double> objectives,
                                const GpHyper& hyper) {
  detail::check_points(points, objectives);
  GpSurrogate s;
  s.dim = points[0].size();
  detail::check_hyper(hyper, s.dim);
  s.hyper = hyper;
  s.points.assign(points.begin(), points.end());
  const std::size_t n = points.size();

  double mean = 0.0;
  for (double y : objectives) mean += y;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double y : objectives) var += (y - mean) * (y - mean);
  var /= static_cast<double>(n);
  s.y_mean = mean;
  s.y_scale = var > 0.0 ? std::sqrt(var) : 1.0;
  s.targets.resize(n);
  for (std::size_t i = 0; i < n; ++i) s.targets[i] = (objectives[i] - mean) / s.y_scale;

  std::vector<double> k(n * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j <= i; ++j) k[i * n + j] = k[j * n + i] = detail::se_kernel(points[i], points[j], hyper);

  for (double jitter = 0.0;; jitter = jitter == 0.0 ? 1e-12 : jitter * 10.0) {
    if (jitter > kMaxJitter * (1.0 + 1e-9)) {
      const bool dup = detail::count_distinct(points) < n;
      throw NumericError(std::string("gp: kernel matrix not positive definite after jitter 1e-6") +
                         (dup ? " (duplicate points with near-zero noise)" : ""));
    }
    std::vector<double> a = k;
    for (std::size_t i = 0; i < n; ++i) a[i * n + i] += hyper.noise_var + jitter;
    if (detail::cholesky(a, n)) {
      s.chol = std::move(a);
      s.jitter = jitter;
      break;
    }
  }
  s.alpha = s.targets;
  detail::forward_solve(s.chol, n, s.alpha);
  detail::backward_solve(s.chol, n, s.alpha);
  return s;
}

/// Posterior mean and latent variance at `x`, in objective units. Variance
/// excludes the observation noise and is clamped at zero.
inline GpPrediction gp_predict(const GpSurrogate& s, const GpPoint& x) {
  if (x.size() != s.dim) {
    throw ShapeError("gp_predict: point has " + std::to_string(x.size()) + " dimensions, surrogate has " +
                     std::to_string(s.dim));
  }
  const std::size_t n = s.points.size();
  std::vector<double> kx(n);
  for (std::size_t i = 0; i < n; ++i) kx[i] = detail::se_kernel(x, s.points[i], s.hyper);
  double mu = 0.0;
  for (std::size_t i = 0; i < n; ++i) mu += kx[i] * s.alpha[i];
  detail::forward_solve(s.chol, n, kx);
  double q = 0.0;
  for (double v : kx) q += v * v;
  const double var = std::max(0.0, s.hyper.signal_var - q);
  return {s.y_mean + s.y_scale * mu, var * s.y_scale * s.y_scale};
}

/// Log marginal likelihood of the standardized targets.
inline double gp_log_marginal_likelihood(const GpSurrogate& s) {
  const std::size_t n = s.points.size();
  double fit = 0.0, logdet = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    fit += s.targets[i] * s.alpha[i];
    logdet += std::log(s.chol[i * n + i]);
  }
  return -0.5 * fit - logdet - 0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);
}

struct GpFitOptions {
  double min_length = 0.02;
  double max_length = 5.0;
  double min_noise = 1e-6;
  double max_noise = 1.0;
  double min_signal = 0.05;
  double max_signal = 20.0;
  std::size_t starts = 4;
  std::size_t max_sweeps = 60;
  std::uint64_t seed = 0;
};

/// Fits length scales, signal and noise variance by maximizing the log
/// marginal likelihood with a multi-start coordinate search in log space,
/// then conditions on the data.
inline GpSurrogate gp_fit(std::span<const GpPoint> points, std::span<const double> objectives,
                          const GpFitOptions& opt = {}) {
  detail::check_points(points, objectives);
  if (detail::count_distinct(points) < 2) throw InvalidArgument("gp_fit needs at least 2 distinct points");
  const std::size_t d = points[0].size();
  // Coordinates: log length scales, log signal variance, log noise variance.
  std::vector<double> lo(d + 2), hi(d + 2);
  for (std::size_t i = 0; i < d; ++i) {
    lo[i] = std::log(opt.min_length);
    hi[i] = std::log(opt.max_length);
  }
  lo[d] = std::log(opt.min_signal);
  hi[d] = std::log(opt.max_signal);
  lo[d + 1] = std::log(opt.min_noise);
  hi[d + 1] = std::log(opt.max_noise);

  auto to_hyper = [&](const std::vector<double>& c) {
    GpHyper h;
    h.length_scales.resize(d);
    for (std::size_t i = 0; i < d; ++i) h.length_scales[i] = std::exp(c[i]);
    h.signal_var = std::exp(c[d]);
    h.noise_var = std::exp(c[d + 1]);
    return h;
  };
  auto score = [&](const std::vector<double>& c) {
    try {
      return gp_log_marginal_likelihood(gp_condition(points, objectives, to_hyper(c)));
    } catch (const NumericError&) {
      return -std::numeric_limits<double>::infinity();
    }
  };

  Rng rng(derive_seed(opt.seed, "gp_fit"));
  std::vector<double> best_c;
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t start = 0; start < std::max<std::size_t>(1, opt.starts); ++start) {
    std::vector<double> c(d + 2);
    for (std::size_t i = 0; i < c.size(); ++i) {
      // First start: unit-scale lengths 0.3, unit signal, small noise.
      c[i] = start == 0 ? (i < d ? std::log(0.3) : i == d ? 0.0 : std::log(1e-3)) : rng.uniform(lo[i], hi[i]);
    }
    double val = score(c);
    double step = 1.0;
    for (std::size_t sweep = 0; sweep < opt.max_sweeps && step > 1e-3; ++sweep) {
      bool improved = false;
      for (std::size_t i = 0; i < c.size(); ++i) {
        for (double dir : {1.0, -1.0}) {
          std::vector<double> t = c;
          t[i] = std::clamp(c[i] + dir * step, lo[i], hi[i]);
          if (t[i] == c[i]) continue;
          const double v = score(t);
          if (v > val) {
            c = std::move(t);
            val = v;
            improved = true;
            break;
          }
        }
      }
      if (!improved) step *= 0.5;
    }
    if (val > best || best_c.empty()) {
      best = val;
      best_c = c;
    }
  }
  log::debug("gp_fit log marginal likelihood ", best);
  return gp_condition(points, objectives, to_hyper(best_c));
}

/// Expected improvement below `best` for a Gaussian with mean `mu` and
/// standard deviation `sigma`.
inline double expected_improvement(double mu, double sigma, double best) {
  if (!(sigma >= 0.0)) throw InvalidArgument("expected_improvement: sigma must be >= 0");
  if (sigma == 0.0) return std::max(0.0, best - mu);
  const double z = (best - mu) / sigma;
  const double cdf = 0.5 * std::erfc(-z / std::numbers::sqrt2);
  const double pdf = std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
  return std::max(0.0, (best - mu) * cdf + sigma * pdf);
}

inline double expected_improvement(const GpSurrogate& s, const GpPoint& x, double best) {
  const GpPrediction p = gp_predict(s, x);
  return expected_improvement(p.mean, std::sqrt(p.variance), best);
}

}  // namespace fpnn

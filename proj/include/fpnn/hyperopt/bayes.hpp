#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fpnn/hyperopt/gp.hpp"
#include "fpnn/preprocess/battery.hpp"

namespace fpnn {

struct Dimension {
  enum class Kind { continuous, integer };
  std::string name;
  Kind kind = Kind::continuous;
  double lo = 0.0;
  double hi = 1.0;
  bool log_scale = false;  // continuous only
};

struct SearchSpace {
  std::vector<Dimension> dims;

  std::size_t index_of(const std::string& name) const {
    for (std::size_t i = 0; i < dims.size(); ++i)
      if (dims[i].name == name) return i;
    throw InvalidArgument("search space has no dimension '" + name + "'");
  }
};

inline Dimension continuous_dim(std::string name, double lo, double hi, bool log_scale = false) {
  return {std::move(name), Dimension::Kind::continuous, lo, hi, log_scale};
}

inline Dimension integer_dim(std::string name, int lo, int hi) {
  return {std::move(name), Dimension::Kind::integer, static_cast<double>(lo), static_cast<double>(hi), false};
}

inline void validate_space(const SearchSpace& s) {
  if (s.dims.empty()) throw InvalidArgument("search space needs at least one dimension");
  for (std::size_t i = 0; i < s.dims.size(); ++i) {
    const auto& d = s.dims[i];
    if (d.name.empty()) throw InvalidArgument("search dimension " + std::to_string(i) + " has no name");
    for (std::size_t j = 0; j < i; ++j)
      if (s.dims[j].name == d.name) throw InvalidArgument("duplicate search dimension '" + d.name + "'");
    if (!(d.lo < d.hi) || !std::isfinite(d.lo) || !std::isfinite(d.hi)) {
      throw InvalidArgument("search dimension '" + d.name + "' needs finite lo < hi");
    }
    if (d.kind == Dimension::Kind::integer && (d.lo != std::floor(d.lo) || d.hi != std::floor(d.hi))) {
      throw InvalidArgument("integer dimension '" + d.name + "' needs integral bounds");
    }
    if (d.log_scale && (d.kind != Dimension::Kind::continuous || !(d.lo > 0.0))) {
      throw InvalidArgument("log-scaled dimension '" + d.name + "' must be continuous with lo > 0");
    }
  }
}

/// Point in search-space units, one value per dimension.
using SearchPoint = std::vector<double>;

/// Maps a unit-cube coordinate to a dimension value; integers are rounded.
inline double from_unit(const Dimension& d, double u) {
  u = std::clamp(u, 0.0, 1.0);
  if (d.kind == Dimension::Kind::integer) return std::clamp(std::round(d.lo + u * (d.hi - d.lo)), d.lo, d.hi);
  if (d.log_scale) return std::clamp(std::exp(std::log(d.lo) + u * (std::log(d.hi) - std::log(d.lo))), d.lo, d.hi);
  return d.lo + u * (d.hi - d.lo);
}

inline double to_unit(const Dimension& d, double v) {
  const double u = d.log_scale ? (std::log(v) - std::log(d.lo)) / (std::log(d.hi) - std::log(d.lo))
                               : (v - d.lo) / (d.hi - d.lo);
  return std::clamp(u, 0.0, 1.0);
}

inline SearchPoint point_from_unit(const SearchSpace& s, const GpPoint& u) {
  SearchPoint p(s.dims.size());
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = from_unit(s.dims[i], u[i]);
  return p;
}

inline GpPoint point_to_unit(const SearchSpace& s, const SearchPoint& p) {
  GpPoint u(s.dims.size());
  for (std::size_t i = 0; i < u.size(); ++i) u[i] = to_unit(s.dims[i], p[i]);
  return u;
}

inline nlohmann::ordered_json point_to_json(const SearchSpace& s, const SearchPoint& p) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (std::size_t i = 0; i < s.dims.size(); ++i) {
    if (s.dims[i].kind == Dimension::Kind::integer) {
      j[s.dims[i].name] = static_cast<long long>(p[i]);
    } else {
      j[s.dims[i].name] = p[i];
    }
  }
  return j;
}

struct Trial {
  enum class Status { ok, failed };
  std::size_t index = 0;
  SearchPoint point;
  double objective = std::numeric_limits<double>::quiet_NaN();
  Status status = Status::failed;
  std::string message;  // failure reason
};

inline const char* status_name(Trial::Status s) { return s == Trial::Status::ok ? "ok" : "failed"; }

struct BayesResult {
  Trial best;
  std::vector<Trial> trials;
};

struct BayesOptions {
  std::size_t budget = 20;
  std::uint64_t seed = 0;
  std::size_t initial = 4;
  std::size_t random_candidates = 1024;
  std::size_t local_candidates = 64;
  double local_sigma = 0.05;  // unit-cube standard deviation around the incumbent
};

using TrialObserver = std::function<void(const Trial&)>;

/// Objective evaluator: returns the value to minimize. A throw or a
/// non-finite value marks the trial failed.
using Objective = std::function<double(const SearchPoint&)>;

namespace detail {

inline double radical_inverse(std::size_t i, unsigned base) {
  double f = 1.0, r = 0.0;
  while (i > 0) {
    f /= base;
    r += f * static_cast<double>(i % base);
    i /= base;
  }
  return r;
}

inline unsigned nth_prime(std::size_t k) {
  static constexpr unsigned primes[] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53};
  if (k < std::size(primes)) return primes[k];
  unsigned p = primes[std::size(primes) - 1];
  std::size_t found = std::size(primes) - 1;
  while (found < k) {
    p += 2;
    bool prime = true;
    for (unsigned q = 3; q * q <= p; q += 2)
      if (p % q == 0) {
        prime = false;
        break;
      }
    if (prime) ++found;
  }
  return p;
}

/// Halton point `i` (1-based) with a seeded Cranley-Patterson rotation.
inline GpPoint halton_point(std::size_t i, const std::vector<double>& shift) {
  GpPoint u(shift.size());
  for (std::size_t k = 0; k < u.size(); ++k) u[k] = std::fmod(radical_inverse(i, nth_prime(k)) + shift[k], 1.0);
  return u;
}

inline Trial evaluate_trial(const Objective& f, std::size_t index, SearchPoint p) {
  Trial t;
  t.index = index;
  t.point = std::move(p);
  try {
    const double v = f(t.point);
    if (std::isfinite(v)) {
      t.objective = v;
      t.status = Trial::Status::ok;
    } else {
      t.message = "non-finite objective";
    }
  } catch (const std::exception& e) {
    t.message = e.what();
  }
  return t;
}

}  // namespace detail

/// Minimizes `f` over `space`: `initial` quasi-random trials, then proposals
/// maximizing expected improvement under a GP refit after every trial.
/// Failed trials are kept in the record and excluded from the surrogate.
inline BayesResult bayes_optimize(const Objective& f, const SearchSpace& space, const BayesOptions& opt,
                                  const TrialObserver& observer = nullptr) {
  validate_space(space);
  if (opt.budget < 4) throw InvalidArgument("bayes_optimize budget must be at least 4");
  if (opt.initial == 0) throw InvalidArgument("bayes_optimize needs at least one initial trial");
  const std::size_t d = space.dims.size();
  BayesResult res;

  auto record = [&](Trial t) {
    if (t.status == Trial::Status::ok) {
      log::debug("trial ", t.index, " objective ", t.objective);
    } else {
      log::info("trial ", t.index, " failed: ", t.message);
    }
    if (observer) observer(t);
    res.trials.push_back(std::move(t));
  };

  Rng shift_rng(derive_seed(opt.seed, "halton"));
  std::vector<double> shift(d);
  for (double& s : shift) s = shift_rng.uniform();
  const std::size_t n_init = std::min(opt.initial, opt.budget);
  for (std::size_t i = 0; i < n_init; ++i) {
    record(detail::evaluate_trial(f, i, point_from_unit(space, detail::halton_point(i + 1, shift))));
  }

  for (std::size_t t = n_init; t < opt.budget; ++t) {
    std::vector<GpPoint> xs;
    std::vector<double> ys;
    const Trial* incumbent = nullptr;
    for (const auto& tr : res.trials) {
      if (tr.status != Trial::Status::ok) continue;
      xs.push_back(point_to_unit(space, tr.point));
      ys.push_back(tr.objective);
      if (!incumbent || tr.objective < incumbent->objective) incumbent = &tr;
    }
    Rng rng(derive_seed(opt.seed, "proposal", t));
    std::vector<GpPoint> cands;
    cands.reserve(opt.random_candidates + opt.local_candidates);
    for (std::size_t c = 0; c < opt.random_candidates; ++c) {
      GpPoint u(d);
      for (double& v : u) v = rng.uniform();
      cands.push_back(std::move(u));
    }
    if (incumbent) {
      const GpPoint centre = point_to_unit(space, incumbent->point);
      for (std::size_t c = 0; c < opt.local_candidates; ++c) {
        GpPoint u(d);
        for (std::size_t k = 0; k < d; ++k) u[k] = std::clamp(centre[k] + opt.local_sigma * rng.normal(), 0.0, 1.0);
        cands.push_back(std::move(u));
      }
    }
    // Integer dimensions are scored at their rounded location.
    for (auto& u : cands) u = point_to_unit(space, point_from_unit(space, u));

    GpPoint chosen = cands.front();
    if (xs.size() >= 2 && detail::count_distinct(xs) >= 2) {
      GpFitOptions fo;
      fo.seed = derive_seed(opt.seed, "surrogate", t);
      const GpSurrogate gp = gp_fit(xs, ys, fo);
      std::vector<SearchPoint> seen;
      for (const auto& tr : res.trials) seen.push_back(tr.point);
      double best_ei = -1.0;
      bool best_is_new = false;
      for (const auto& u : cands) {
        const double ei = expected_improvement(gp, u, incumbent->objective);
        const SearchPoint p = point_from_unit(space, u);
        const bool is_new = std::find(seen.begin(), seen.end(), p) == seen.end();
        // Unevaluated points win over repeats; ties keep the earlier candidate.
        if ((is_new && !best_is_new) || (is_new == best_is_new && ei > best_ei)) {
          best_ei = ei;
          best_is_new = is_new;
          chosen = u;
        }
      }
    }
    record(detail::evaluate_trial(f, t, point_from_unit(space, chosen)));
  }

  const Trial* best = nullptr;
  for (const auto& tr : res.trials)
    if (tr.status == Trial::Status::ok && (!best || tr.objective < best->objective)) best = &tr;
  if (!best) throw NumericError("bayes_optimize: all " + std::to_string(res.trials.size()) + " trials failed");
  res.best = *best;
  return res;
}

/// Trials log: `trial,point_json,objective,status`.
inline std::string trials_csv(const SearchSpace& space, const std::vector<Trial>& trials) {
  std::string out = "trial,point_json,objective,status\n";
  for (const auto& t : trials) {
    std::string pj = point_to_json(space, t.point).dump();
    std::string quoted = "\"";
    for (char c : pj) quoted += c == '"' ? std::string("\"\"") : std::string(1, c);
    quoted += '"';
    out += std::to_string(t.index) + "," + quoted + "," +
           (t.status == Trial::Status::ok ? detail::format_double(t.objective) : std::string("NaN")) + "," +
           status_name(t.status) + "\n";
  }
  return out;
}

}  // namespace fpnn

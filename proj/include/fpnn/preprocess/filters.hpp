#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "fpnn/core/error.hpp"

namespace fpnn {

struct HampelResult {
  std::vector<double> series;
  std::size_t replaced = 0;
};

namespace detail {

inline double median_of(std::vector<double>& v) {
  const std::size_t n = v.size();
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(n / 2);
  std::nth_element(v.begin(), mid, v.end());
  if (n % 2 == 1) return *mid;
  const double upper = *mid;
  const double lower = *std::max_element(v.begin(), mid);
  return 0.5 * (lower + upper);
}

}  // namespace detail

/// Hampel outlier filter: a point further than n_sigmas * 1.4826 * MAD from
/// its rolling median is replaced by that median. Windows are truncated at the
/// series edges.
inline HampelResult hampel_filter_counted(std::span<const double> series, std::size_t window = 11,
                                          double n_sigmas = 3.0) {
  if (series.size() < 3) throw InvalidArgument("hampel_filter needs at least 3 points");
  if (window < 3 || window % 2 == 0) throw InvalidArgument("hampel_filter window must be odd and >= 3");
  const std::size_t half = window / 2;
  const std::size_t n = series.size();
  HampelResult out{std::vector<double>(series.begin(), series.end()), 0};
  std::vector<double> buf;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t lo = i >= half ? i - half : 0;
    const std::size_t hi = std::min(n, i + half + 1);
    buf.assign(series.begin() + static_cast<std::ptrdiff_t>(lo), series.begin() + static_cast<std::ptrdiff_t>(hi));
    const double med = detail::median_of(buf);
    for (double& v : buf) v = std::abs(v - med);
    const double mad = detail::median_of(buf);
    if (std::abs(series[i] - med) > n_sigmas * 1.4826 * mad) {
      out.series[i] = med;
      ++out.replaced;
    }
  }
  return out;
}

inline std::vector<double> hampel_filter(std::span<const double> series, std::size_t window = 11,
                                         double n_sigmas = 3.0) {
  return hampel_filter_counted(series, window, n_sigmas).series;
}

namespace detail {

// Row p of the least-squares "hat" matrix for a window of the given length:
// weights that evaluate the fitted polynomial at window position p.
inline std::vector<std::vector<double>> savgol_hat_rows(std::size_t window, std::size_t order) {
  const std::size_t m = order + 1;
  const double half = static_cast<double>(window / 2);
  // Offsets scaled to [-1, 1] keep the normal equations well conditioned.
  std::vector<std::vector<double>> V(window, std::vector<double>(m));
  for (std::size_t j = 0; j < window; ++j) {
    const double t = (static_cast<double>(j) - half) / half;
    double p = 1.0;
    for (std::size_t k = 0; k < m; ++k, p *= t) V[j][k] = p;
  }
  // Solve (V^T V) A = V^T by Gauss-Jordan with partial pivoting.
  std::vector<std::vector<double>> G(m, std::vector<double>(m + window, 0.0));
  for (std::size_t a = 0; a < m; ++a) {
    for (std::size_t b = 0; b < m; ++b)
      for (std::size_t j = 0; j < window; ++j) G[a][b] += V[j][a] * V[j][b];
    for (std::size_t j = 0; j < window; ++j) G[a][m + j] = V[j][a];
  }
  for (std::size_t col = 0; col < m; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < m; ++r)
      if (std::abs(G[r][col]) > std::abs(G[piv][col])) piv = r;
    std::swap(G[col], G[piv]);
    const double d = G[col][col];
    for (double& v : G[col]) v /= d;
    for (std::size_t r = 0; r < m; ++r) {
      if (r == col) continue;
      const double f = G[r][col];
      if (f == 0.0) continue;
      for (std::size_t c = 0; c < m + window; ++c) G[r][c] -= f * G[col][c];
    }
  }
  std::vector<std::vector<double>> H(window, std::vector<double>(window, 0.0));
  for (std::size_t p = 0; p < window; ++p)
    for (std::size_t j = 0; j < window; ++j)
      for (std::size_t k = 0; k < m; ++k) H[p][j] += V[p][k] * G[k][m + j];
  return H;
}

}  // namespace detail

/// Savitzky-Golay smoothing. Interior points take the centre value of the
/// window's least-squares polynomial; the first and last window/2 points are
/// evaluated from the polynomial fitted to the nearest full window.
inline std::vector<double> savitzky_golay(std::span<const double> series, std::size_t window = 9,
                                          std::size_t polyorder = 3) {
  if (window < 5 || window % 2 == 0) throw InvalidArgument("savitzky_golay window must be odd and >= 5");
  if (polyorder >= window) throw InvalidArgument("savitzky_golay polyorder must be < window");
  if (series.size() < window) {
    throw InvalidArgument("savitzky_golay series length " + std::to_string(series.size()) +
                          " shorter than window " + std::to_string(window));
  }
  const auto H = detail::savgol_hat_rows(window, polyorder);
  const std::size_t n = series.size(), half = window / 2;
  std::vector<double> out(n);
  auto apply = [&](std::size_t row, std::size_t start) {
    double s = 0.0;
    for (std::size_t j = 0; j < window; ++j) s += H[row][j] * series[start + j];
    return s;
  };
  for (std::size_t i = 0; i < n; ++i) {
    if (i < half) {
      out[i] = apply(i, 0);
    } else if (i + half >= n) {
      out[i] = apply(i - (n - window), n - window);
    } else {
      out[i] = apply(half, i - half);
    }
  }
  return out;
}

}  // namespace fpnn

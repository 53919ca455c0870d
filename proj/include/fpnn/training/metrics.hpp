#pragma once

#include <cmath>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "fpnn/core/error.hpp"
#include "fpnn/core/tensor.hpp"

namespace fpnn {

struct Metrics {
  double mape = 0.0;  // percent
  double mae = 0.0;   // cycles
  double rmse = 0.0;  // cycles
};

/// MAPE = 100/n sum |y - yhat| / y, MAE = 1/n sum |y - yhat|,
/// RMSE = sqrt(1/n sum (y - yhat)^2).
inline Metrics compute_metrics(std::span<const double> y, std::span<const double> yhat) {
  if (y.size() != yhat.size()) throw ShapeError("metrics: label and prediction lengths differ");
  if (y.empty()) throw InvalidArgument("metrics need at least one sample");
  double ape = 0.0, ae = 0.0, se = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] == 0.0) throw InvalidArgument("MAPE undefined: label " + std::to_string(i) + " is zero");
    const double e = y[i] - yhat[i];
    ape += std::abs(e) / std::abs(y[i]);
    ae += std::abs(e);
    se += e * e;
  }
  const double n = static_cast<double>(y.size());
  return {100.0 * ape / n, ae / n, std::sqrt(se / n)};
}

struct LossResult {
  double loss = 0.0;
  Tensor grad;
};

/// Mean squared error and its gradient 2 (pred - target) / N.
inline LossResult mse_loss(const Tensor& pred, const Tensor& target) {
  if (pred.size() != target.size()) throw ShapeError("mse_loss: length mismatch");
  if (pred.empty()) throw InvalidArgument("mse_loss needs at least one element");
  const double n = static_cast<double>(pred.size());
  LossResult r{0.0, Tensor(pred.shape())};
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - target[i];
    r.loss += d * d;
    r.grad[i] = 2.0 * d / n;
  }
  r.loss /= n;
  return r;
}

struct SampleResidual {
  std::string battery_id;
  int anchor_cycle = 0;
  double label = 0.0;
  double prediction = 0.0;
  double residual() const { return prediction - label; }
};

struct BatteryAggregate {
  std::string battery_id;
  std::size_t samples = 0;
  double label = 0.0;
  double mean_prediction = 0.0;
  double mae = 0.0;
};

struct EvalReport {
  Metrics metrics;
  std::vector<SampleResidual> residuals;
  std::vector<BatteryAggregate> per_battery;  // sorted by battery id
};

inline EvalReport make_report(std::vector<SampleResidual> residuals) {
  std::vector<double> y, yhat;
  for (const auto& r : residuals) {
    y.push_back(r.label);
    yhat.push_back(r.prediction);
  }
  EvalReport rep;
  rep.metrics = compute_metrics(y, yhat);
  std::map<std::string, BatteryAggregate> by;
  for (const auto& r : residuals) {
    auto& a = by[r.battery_id];
    a.battery_id = r.battery_id;
    a.label = r.label;
    ++a.samples;
    a.mean_prediction += r.prediction;
    a.mae += std::abs(r.residual());
  }
  for (auto& [id, a] : by) {
    a.mean_prediction /= static_cast<double>(a.samples);
    a.mae /= static_cast<double>(a.samples);
    rep.per_battery.push_back(a);
  }
  rep.residuals = std::move(residuals);
  return rep;
}

}  // namespace fpnn

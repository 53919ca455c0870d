#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fpnn/core/log.hpp"
#include "fpnn/core/random.hpp"
#include "fpnn/model/forward.hpp"
#include "fpnn/training/adam.hpp"
#include "fpnn/training/metrics.hpp"

namespace fpnn {

struct TrainConfig {
  std::size_t epochs = 300;
  std::size_t batch_size = 16;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-5;
  std::size_t patience = 30;
  std::uint64_t seed = 0;

  AdamConfig adam() const { return {learning_rate, beta1, beta2, eps, weight_decay}; }
};

inline void validate_train_config(const TrainConfig& c) {
  if (c.epochs == 0) throw InvalidArgument("epochs must be positive");
  if (c.batch_size < 2) throw InvalidArgument("batch_size must be at least 2 for batch normalization");
  validate_adam(c.adam());
}

inline nlohmann::ordered_json train_config_to_json(const TrainConfig& c) {
  nlohmann::ordered_json j;
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["learning_rate"] = c.learning_rate;
  j["beta1"] = c.beta1;
  j["beta2"] = c.beta2;
  j["eps"] = c.eps;
  j["weight_decay"] = c.weight_decay;
  j["patience"] = c.patience;
  j["seed"] = c.seed;
  return j;
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  try {
    TrainConfig c;
    c.epochs = j.at("epochs").get<std::size_t>();
    c.batch_size = j.at("batch_size").get<std::size_t>();
    c.learning_rate = j.at("learning_rate").get<double>();
    c.beta1 = j.at("beta1").get<double>();
    c.beta2 = j.at("beta2").get<double>();
    c.eps = j.at("eps").get<double>();
    c.weight_decay = j.at("weight_decay").get<double>();
    c.patience = j.at("patience").get<std::size_t>();
    c.seed = j.at("seed").get<std::uint64_t>();
    validate_train_config(c);
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("invalid training config: ") + e.what());
  }
}

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_mape = 0.0;
};

struct TrainResult {
  FpnnParams params;  // parameters of the best validation epoch
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  double best_val_mape = std::numeric_limits<double>::infinity();
  bool stopped_early = false;
};

/// Predictions in eval mode, in chunks to bound trace memory.
inline std::vector<double> predict_samples(const FpnnParams& p, std::span<const SamplePair> samples,
                                           std::size_t chunk = 64) {
  std::vector<double> out;
  out.reserve(samples.size());
  for (std::size_t start = 0; start < samples.size(); start += chunk) {
    const std::size_t end = std::min(samples.size(), start + chunk);
    std::vector<std::size_t> idx(end - start);
    std::iota(idx.begin(), idx.end(), start);
    const Tensor y = fpnn_predict(p, make_batch(samples, idx));
    out.insert(out.end(), y.values().begin(), y.values().end());
  }
  return out;
}

inline EvalReport evaluate(const FpnnParams& p, std::span<const SamplePair> samples) {
  if (samples.empty()) throw InvalidArgument("evaluate needs at least one sample");
  const auto pred = predict_samples(p, samples);
  std::vector<SampleResidual> res;
  res.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i)
    res.push_back({samples[i].battery_id, samples[i].anchor_cycle, samples[i].label, pred[i]});
  return make_report(std::move(res));
}

/// Sets the fixed output transform to the mean and standard deviation of the
/// training labels; a constant label set keeps unit scale.
inline void fit_label_transform(FpnnParams& p, std::span<const SamplePair> train) {
  double mean = 0.0;
  for (const auto& s : train) mean += s.label;
  mean /= static_cast<double>(train.size());
  double var = 0.0;
  for (const auto& s : train) var += (s.label - mean) * (s.label - mean);
  var /= static_cast<double>(train.size());
  p.label_offset = mean;
  p.label_scale = var > 0.0 ? std::sqrt(var) : 1.0;
}

/// Splits a shuffled index order into ceil(n / batch_size) mini-batches whose
/// sizes differ by at most one.
inline std::vector<std::vector<std::size_t>> make_minibatches(const std::vector<std::size_t>& order,
                                                              std::size_t batch_size) {
  if (batch_size == 0) throw InvalidArgument("batch_size must be positive");
  const std::size_t n = order.size();
  const std::size_t count = (n + batch_size - 1) / batch_size;
  std::vector<std::vector<std::size_t>> out;
  std::size_t start = 0;
  for (std::size_t b = 0; b < count; ++b) {
    const std::size_t size = n / count + (b < n % count ? 1 : 0);
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                     order.begin() + static_cast<std::ptrdiff_t>(start + size));
    start += size;
  }
  return out;
}

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Adam on MSE in cycles with per-epoch seeded shuffling. Keeps the
/// parameters of the best validation MAPE and stops after `patience`
/// consecutive epochs without strict improvement.
inline TrainResult train(FpnnParams params, std::span<const SamplePair> train_set, std::span<const SamplePair> val_set,
                         const TrainConfig& cfg, const EpochCallback& on_epoch = nullptr) {
  validate_train_config(cfg);
  if (train_set.empty()) throw InvalidArgument("training split is empty");
  if (val_set.empty()) throw InvalidArgument("validation split is empty");
  fit_label_transform(params, train_set);

  TrainResult result;
  result.params = params;
  AdamState adam;
  const AdamConfig acfg = cfg.adam();
  std::size_t stale = 0;
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::vector<std::size_t> shuffled = order;
    Rng rng(derive_seed(cfg.seed, "epoch", epoch));
    rng.shuffle(shuffled);
    double loss_sum = 0.0;
    const auto batches = make_minibatches(shuffled, cfg.batch_size);
    for (std::size_t bi = 0; bi < batches.size(); ++bi) {
      const Batch batch = make_batch(train_set, batches[bi]);
      const std::string where = "epoch " + std::to_string(epoch) + " batch " + std::to_string(bi + 1);
      try {
        ForwardOutput fwd = fpnn_forward(params, batch, Mode::train);
        const LossResult loss = mse_loss(fwd.predictions, batch.labels);
        if (!std::isfinite(loss.loss)) throw NumericError("non-finite loss");
        FpnnParams grads = fpnn_backward(params, fwd.trace, loss.grad);
        const auto ps = param_list(params);
        const auto gs = param_list(grads);
        adam_step(ps, std::vector<const Tensor*>(gs.begin(), gs.end()), adam, acfg);
        commit_bn_states(params, fwd.trace);
        for (const Tensor* p : ps)
          if (!p->all_finite()) throw NumericError("non-finite parameter after update");
        loss_sum += loss.loss * static_cast<double>(batch.size());
      } catch (const NumericError& e) {
        throw NumericError(std::string(e.what()) + " at " + where);
      }
    }
    EpochRecord rec{epoch, loss_sum / static_cast<double>(train_set.size()), 0.0};
    try {
      rec.val_mape = evaluate(params, val_set).metrics.mape;
    } catch (const NumericError& e) {
      throw NumericError(std::string(e.what()) + " during validation at epoch " + std::to_string(epoch));
    }
    result.history.push_back(rec);
    log::debug("epoch ", epoch, " train_loss ", rec.train_loss, " val_mape ", rec.val_mape);
    if (on_epoch) on_epoch(rec);
    if (rec.val_mape < result.best_val_mape) {
      result.best_val_mape = rec.val_mape;
      result.best_epoch = epoch;
      result.params = params;
      stale = 0;
    } else if (++stale > cfg.patience) {
      result.stopped_early = true;
      break;
    }
  }
  return result;
}

}  // namespace fpnn

#pragma once

#include "cpcl/evaluation.hpp"
#include "cpcl/model.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <span>
#include <vector>

namespace cpcl {

struct TrainConfig {
  int epochs = 150;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double weight_decay = 1e-3;
  double eta_max = 1e-4;
  double eta_min = 1e-6;
  int t_max = 75;
  int batch_size = 8;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  double lambda_mmd = 0.3;
  double adam_eps = 1e-8;
  double focal_gamma = 2.0;
  /// Worker threads for per-sample forward/backward. Results do not depend on it.
  int threads = 1;

  void validate() const;
};

/// eta_min + (eta_max - eta_min) * (1 + cos(pi * min(t, t_max) / t_max)) / 2
double cosine_lr(int epoch, const TrainConfig& cfg);

/// One decoupled-weight-decay Adam update on a flat tensor. `step` counts from 1.
void adamw_update(std::span<double> theta, std::span<const double> grad, std::span<double> m,
                  std::span<double> v, long step, double lr, const TrainConfig& cfg);

struct AdamState {
  ModelParams m;
  ModelParams v;
  long step = 0;

  static AdamState for_model(const ModelConfig& cfg) {
    return {ModelParams::zeros(cfg), ModelParams::zeros(cfg), 0};
  }
};

/// Advances `state.step` and applies adamw_update to every tensor. A non-finite gradient
/// aborts with the offending parameter's name. alpha_kg is clamped back into [0, 1].
void adamw_step(ModelParams& params, const ModelParams& grads, AdamState& state, double lr,
                const TrainConfig& cfg);

struct EpochRecord {
  int epoch = 0;
  double lr = 0.0;
  double loss = 0.0;
  double acc = 0.0;
  double f1m = 0.0;
  double recall = 0.0;
  double precision = 0.0;

  nlohmann::json to_json() const;
};

struct SeedRun {
  std::uint64_t seed = 0;
  std::vector<EpochRecord> log;
  MetricsReport metrics;  // on the evaluation set after the last epoch
  ModelParams params;
};

struct TrainResult {
  std::vector<SeedRun> runs;
  MeanMetrics mean;
};

std::vector<int> predict_labels(const std::vector<PreparedSample>& samples, const ModelParams& p,
                                const ModelConfig& cfg);
MetricsReport evaluate(const std::vector<PreparedSample>& samples, const ModelParams& p,
                       const ModelConfig& cfg);

/// Trains one seed. Metrics in the log are measured on `eval_set` (or on `train_set` when
/// `eval_set` is empty). Focal alpha is inverse class frequency of `train_set`.
SeedRun train_seed(const std::vector<PreparedSample>& train_set,
                   const std::vector<PreparedSample>& eval_set, const ModelConfig& model_cfg,
                   const TrainConfig& cfg, std::uint64_t seed);

/// Runs every seed in `cfg.seeds` and averages the final metrics.
TrainResult train(const std::vector<PreparedSample>& train_set,
                  const std::vector<PreparedSample>& eval_set, const ModelConfig& model_cfg,
                  const TrainConfig& cfg);

std::string epoch_log_jsonl(const std::vector<EpochRecord>& log);

/// Deterministic stratified holdout split. Returns (train indices, held-out indices).
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> stratified_split(
    const std::vector<int>& labels, double holdout_fraction, std::uint64_t seed);

}  // namespace cpcl

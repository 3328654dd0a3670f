#pragma once

#include "cpcl/training.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace cpcl {

struct ExperimentConfig {
  double holdout_fraction = 0.2;
  std::size_t vocab_min_freq = 1;
  std::size_t vocab_max_size = 5000;
  /// Seeds (or ablation variants) trained concurrently. Results do not depend on it.
  int jobs = 1;

  void validate() const;
};

/// Vocabulary over the cleaned, segmented comments of `samples[indices]`.
Vocabulary vocab_from_samples(const std::vector<VideoSample>& samples,
                              const std::vector<std::size_t>& indices, std::size_t min_freq,
                              std::size_t max_size);

struct PreparedSplit {
  Vocabulary vocab;
  std::vector<PreparedSample> train;
  std::vector<PreparedSample> eval;
};

/// Stratified split by `seed`, vocabulary from the training part only, then prepare_sample
/// on both parts. Sets `model_cfg.vocab_size` to the vocabulary size.
PreparedSplit prepare_split(const std::vector<VideoSample>& samples, const SkgStore& skg,
                            const Embedder& embedder, ModelConfig& model_cfg,
                            const ExperimentConfig& exp, std::uint64_t seed);

struct HoldoutResult {
  std::vector<SeedRun> runs;
  MeanMetrics mean;
};

/// For every seed: split, train, evaluate on the held-out part.
HoldoutResult run_holdout(const std::vector<VideoSample>& samples, const SkgStore& skg,
                          const Embedder& embedder, const ModelConfig& model_cfg,
                          const TrainConfig& train_cfg, const ExperimentConfig& exp);

struct AblationVariant {
  const char* name;
  int mask_comment;
  int mask_sentiment;
};

/// Full model, comment branch removed, sentiment branch removed, both removed.
inline constexpr std::array<AblationVariant, 4> kAblationVariants{{
    {"Full Model", 1, 1},
    {"-- Comment Information Processing Module", 0, 1},
    {"-- Knowledge-Enhanced Sentiment Analysis Module", 1, 0},
    {"Without Both Modules", 0, 0},
}};

struct AblationRow {
  std::string name;
  std::vector<MetricsReport> per_seed;
  MeanMetrics mean;
  /// Full-model mean accuracy minus this row's; 0 for the full model.
  double accuracy_drop = 0.0;
};

struct AblationResult {
  std::vector<std::uint64_t> seeds;
  std::vector<AblationRow> rows;  // kAblationVariants order

  /// Seeds where full >= each single-branch variant >= both-removed, in held-out accuracy.
  int direction_holds() const;
  std::string format_table() const;
  nlohmann::json to_json() const;
};

/// Trains the four variants on the same per-seed split and initialization seed.
AblationResult run_ablation(const std::vector<VideoSample>& samples, const SkgStore& skg,
                            const Embedder& embedder, const ModelConfig& model_cfg,
                            const TrainConfig& train_cfg, const ExperimentConfig& exp);

}  // namespace cpcl

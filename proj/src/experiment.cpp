#include "cpcl/experiment.hpp"

#include "cpcl/parallel.hpp"

#include <cstdio>
#include <sstream>

namespace cpcl {

void ExperimentConfig::validate() const {
  require(holdout_fraction > 0.0 && holdout_fraction < 1.0,
          "holdout_fraction must be in (0, 1)");
  require(vocab_max_size >= 2, "vocab_max_size must leave room for PAD and UNK");
  require(jobs >= 1, "jobs must be positive");
}

Vocabulary vocab_from_samples(const std::vector<VideoSample>& samples,
                              const std::vector<std::size_t>& indices, std::size_t min_freq,
                              std::size_t max_size) {
  std::vector<std::vector<std::string>> corpus;
  CharSegmenter seg;
  for (const auto i : indices) {
    for (const auto& c : clean_comments(samples.at(i).comments)) {
      corpus.push_back(seg.segment(c.text));
    }
  }
  return build_vocab(corpus, min_freq, max_size);
}

PreparedSplit prepare_split(const std::vector<VideoSample>& samples, const SkgStore& skg,
                            const Embedder& embedder, ModelConfig& model_cfg,
                            const ExperimentConfig& exp, std::uint64_t seed) {
  exp.validate();
  std::vector<int> labels;
  for (const auto& s : samples) labels.push_back(s.label);
  const auto [train_idx, eval_idx] = stratified_split(labels, exp.holdout_fraction, seed);

  PreparedSplit split;
  split.vocab = vocab_from_samples(samples, train_idx, exp.vocab_min_freq, exp.vocab_max_size);
  model_cfg.vocab_size = static_cast<int>(split.vocab.size());
  const BranchResources res{&split.vocab, &skg, &embedder};
  for (const auto i : train_idx) split.train.push_back(prepare_sample(samples[i], res, model_cfg));
  for (const auto i : eval_idx) split.eval.push_back(prepare_sample(samples[i], res, model_cfg));
  return split;
}

HoldoutResult run_holdout(const std::vector<VideoSample>& samples, const SkgStore& skg,
                          const Embedder& embedder, const ModelConfig& model_cfg,
                          const TrainConfig& train_cfg, const ExperimentConfig& exp) {
  train_cfg.validate();
  HoldoutResult result;
  result.runs.resize(train_cfg.seeds.size());
  parallel_for(train_cfg.seeds.size(), exp.jobs, [&](std::size_t k) {
    const auto seed = train_cfg.seeds[k];
    ModelConfig cfg = model_cfg;
    const PreparedSplit split = prepare_split(samples, skg, embedder, cfg, exp, seed);
    result.runs[k] = train_seed(split.train, split.eval, cfg, train_cfg, seed);
  });
  std::vector<MetricsReport> reports;
  for (const auto& r : result.runs) reports.push_back(r.metrics);
  result.mean = mean_metrics(reports);
  return result;
}

int AblationResult::direction_holds() const {
  int count = 0;
  for (std::size_t k = 0; k < seeds.size(); ++k) {
    const double full = rows[0].per_seed[k].accuracy;
    const double no_comment = rows[1].per_seed[k].accuracy;
    const double no_sentiment = rows[2].per_seed[k].accuracy;
    const double none = rows[3].per_seed[k].accuracy;
    if (full >= no_comment && full >= no_sentiment && no_comment >= none && no_sentiment >= none) {
      ++count;
    }
  }
  return count;
}

std::string AblationResult::format_table() const {
  std::vector<std::pair<std::string, MeanMetrics>> table;
  for (const auto& r : rows) table.emplace_back(r.name, r.mean);
  std::ostringstream os;
  os << format_metrics_table(table) << '\n';
  os << "Accuracy Drop (vs. Full Model)\n";
  for (const auto& r : rows) {
    char buf[128];
    if (r.name == kAblationVariants[0].name) {
      std::snprintf(buf, sizeof buf, "  %-48s %s\n", r.name.c_str(), "-");
    } else {
      std::snprintf(buf, sizeof buf, "  %-48s %.2f%%\n", r.name.c_str(), 100.0 * r.accuracy_drop);
    }
    os << buf;
  }
  return os.str();
}

nlohmann::json AblationResult::to_json() const {
  nlohmann::json j;
  j["seeds"] = seeds;
  j["direction_holds"] = direction_holds();
  for (const auto& r : rows) {
    nlohmann::json row{{"name", r.name}, {"mean", cpcl::to_json(r.mean)},
                       {"accuracy_drop", r.accuracy_drop}};
    for (const auto& m : r.per_seed) row["per_seed"].push_back(cpcl::to_json(m));
    j["rows"].push_back(row);
  }
  return j;
}

AblationResult run_ablation(const std::vector<VideoSample>& samples, const SkgStore& skg,
                            const Embedder& embedder, const ModelConfig& model_cfg,
                            const TrainConfig& train_cfg, const ExperimentConfig& exp) {
  train_cfg.validate();
  const std::size_t n_seeds = train_cfg.seeds.size();
  const std::size_t n_var = kAblationVariants.size();

  std::vector<PreparedSplit> splits(n_seeds);
  std::vector<ModelConfig> cfgs(n_seeds, model_cfg);
  for (std::size_t k = 0; k < n_seeds; ++k) {
    splits[k] = prepare_split(samples, skg, embedder, cfgs[k], exp, train_cfg.seeds[k]);
  }

  std::vector<MetricsReport> reports(n_seeds * n_var);
  parallel_for(n_seeds * n_var, exp.jobs, [&](std::size_t job) {
    const std::size_t k = job / n_var;
    const std::size_t v = job % n_var;
    ModelConfig cfg = cfgs[k];
    cfg.mask_comment = kAblationVariants[v].mask_comment;
    cfg.mask_sentiment = kAblationVariants[v].mask_sentiment;
    reports[job] =
        train_seed(splits[k].train, splits[k].eval, cfg, train_cfg, train_cfg.seeds[k]).metrics;
  });

  AblationResult result;
  result.seeds = train_cfg.seeds;
  for (std::size_t v = 0; v < n_var; ++v) {
    AblationRow row;
    row.name = kAblationVariants[v].name;
    for (std::size_t k = 0; k < n_seeds; ++k) row.per_seed.push_back(reports[k * n_var + v]);
    row.mean = mean_metrics(row.per_seed);
    result.rows.push_back(std::move(row));
  }
  for (auto& row : result.rows) {
    row.accuracy_drop = result.rows[0].mean.accuracy - row.mean.accuracy;
  }
  return result;
}

}  // namespace cpcl

#include "cpcl/training.hpp"

#include "cpcl/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <numbers>
#include <random>
#include <sstream>
#include <thread>

namespace cpcl {

namespace {

void shuffle(std::vector<std::size_t>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(v[i - 1], v[j]);
  }
}


}  // namespace

void TrainConfig::validate() const {
  require(epochs >= 1, "epochs must be >= 1");
  require(beta1 > 0.0 && beta1 < 1.0 && beta2 > 0.0 && beta2 < 1.0, "betas must lie in (0, 1)");
  require(weight_decay >= 0.0, "weight_decay must be >= 0");
  require(eta_min > 0.0 && eta_min <= eta_max, "need 0 < eta_min <= eta_max");
  require(t_max >= 1, "t_max must be >= 1");
  require(batch_size >= 1, "batch_size must be >= 1");
  require(!seeds.empty(), "at least one seed is required");
  require(lambda_mmd >= 0.0, "lambda_mmd must be >= 0");
  require(adam_eps > 0.0, "adam_eps must be positive");
  require(focal_gamma >= 0.0 && std::isfinite(focal_gamma), "focal_gamma must be finite and >= 0");
}

double cosine_lr(int epoch, const TrainConfig& cfg) {
  require(epoch >= 0, "cosine_lr: epoch must be >= 0");
  if (epoch == 0) return cfg.eta_max;
  if (epoch >= cfg.t_max) return cfg.eta_min;
  const double frac = static_cast<double>(epoch) / cfg.t_max;
  return cfg.eta_min + 0.5 * (cfg.eta_max - cfg.eta_min) * (1.0 + std::cos(std::numbers::pi * frac));
}

void adamw_update(std::span<double> theta, std::span<const double> grad, std::span<double> m,
                  std::span<double> v, long step, double lr, const TrainConfig& cfg) {
  require(theta.size() == grad.size() && m.size() == theta.size() && v.size() == theta.size(),
          "adamw: shape mismatch");
  require(step >= 1, "adamw: step counter must be >= 1");
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < theta.size(); ++i) {
    m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * grad[i];
    v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * grad[i] * grad[i];
    const double m_hat = m[i] / bc1;
    const double v_hat = v[i] / bc2;
    theta[i] = theta[i] - lr * m_hat / (std::sqrt(v_hat) + cfg.adam_eps) -
               lr * cfg.weight_decay * theta[i];
  }
}

void adamw_step(ModelParams& params, const ModelParams& grads, AdamState& state, double lr,
                const TrainConfig& cfg) {
  auto p = param_views(params);
  auto g = param_views(const_cast<ModelParams&>(grads));
  auto m = param_views(state.m);
  auto v = param_views(state.v);
  require(p.size() == g.size() && p.size() == m.size() && p.size() == v.size(),
          "adamw_step: layout mismatch");
  for (const auto& view : g) {
    for (std::size_t k = 0; k < view.size; ++k) {
      if (!std::isfinite(view.data[k])) {
        throw NumericError("non-finite gradient in parameter " + view.name);
      }
    }
  }
  ++state.step;
  for (std::size_t i = 0; i < p.size(); ++i) {
    adamw_update({p[i].data, p[i].size}, {g[i].data, g[i].size}, {m[i].data, m[i].size},
                 {v[i].data, v[i].size}, state.step, lr, cfg);
  }
  params.sentiment.alpha_kg = std::clamp(params.sentiment.alpha_kg, 0.0, 1.0);
}

nlohmann::json EpochRecord::to_json() const {
  return {{"epoch", epoch}, {"lr", lr},         {"loss", loss},  {"acc", acc},
          {"f1m", f1m},     {"recall", recall}, {"precision", precision}};
}

std::vector<int> predict_labels(const std::vector<PreparedSample>& samples, const ModelParams& p,
                                const ModelConfig& cfg) {
  std::vector<int> out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    const Vec probs = predict(s, p, cfg);
    out.push_back(probs[1] > probs[0] ? 1 : 0);
  }
  return out;
}

MetricsReport evaluate(const std::vector<PreparedSample>& samples, const ModelParams& p,
                       const ModelConfig& cfg) {
  std::vector<int> labels;
  for (const auto& s : samples) labels.push_back(s.label);
  return compute_metrics(predict_labels(samples, p, cfg), labels);
}

SeedRun train_seed(const std::vector<PreparedSample>& train_set,
                   const std::vector<PreparedSample>& eval_set, const ModelConfig& model_cfg,
                   const TrainConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  model_cfg.validate();
  require(!train_set.empty(), "train: empty training set");
  std::vector<int> labels;
  for (const auto& s : train_set) labels.push_back(s.label);
  const FocalConfig focal = FocalConfig::inverse_frequency(labels, cfg.focal_gamma);
  const auto& monitor = eval_set.empty() ? train_set : eval_set;

  SeedRun run;
  run.seed = seed;
  run.params = ModelParams::init(model_cfg, seed);
  AdamState state = AdamState::for_model(model_cfg);
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ull);

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto batch = static_cast<std::size_t>(cfg.batch_size);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = cosine_lr(epoch, cfg);
    shuffle(order, rng);
    double loss_sum = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += batch, ++batch_index) {
      const std::size_t n = std::min(batch, order.size() - start);
      std::vector<ModelParams> sample_grads(n, ModelParams::zeros(model_cfg));
      std::vector<double> losses(n, 0.0);
      parallel_for(n, cfg.threads, [&](std::size_t k) {
        losses[k] = forward_backward(train_set[order[start + k]], run.params, model_cfg, focal,
                                     cfg.lambda_mmd, &sample_grads[k])
                        .loss;
      });
      // Reduction follows sample order so results are independent of the thread count.
      ModelParams grads = ModelParams::zeros(model_cfg);
      double batch_loss = 0.0;
      for (std::size_t k = 0; k < n; ++k) {
        add_into(grads, sample_grads[k], 1.0 / static_cast<double>(n));
        batch_loss += losses[k];
      }
      if (!std::isfinite(batch_loss)) {
        throw NumericError("training diverged at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(batch_index));
      }
      loss_sum += batch_loss;
      try {
        adamw_step(run.params, grads, state, lr, cfg);
      } catch (const NumericError& e) {
        throw NumericError(std::string(e.what()) + " at epoch " + std::to_string(epoch) +
                           ", batch " + std::to_string(batch_index));
      }
    }
    const MetricsReport m = evaluate(monitor, run.params, model_cfg);
    run.log.push_back({epoch, lr, loss_sum / static_cast<double>(train_set.size()), m.accuracy,
                       m.macro_f1, m.recall, m.precision});
    run.metrics = m;
  }
  return run;
}

TrainResult train(const std::vector<PreparedSample>& train_set,
                  const std::vector<PreparedSample>& eval_set, const ModelConfig& model_cfg,
                  const TrainConfig& cfg) {
  TrainResult result;
  std::vector<MetricsReport> reports;
  for (const auto seed : cfg.seeds) {
    result.runs.push_back(train_seed(train_set, eval_set, model_cfg, cfg, seed));
    reports.push_back(result.runs.back().metrics);
  }
  result.mean = mean_metrics(reports);
  return result;
}

std::string epoch_log_jsonl(const std::vector<EpochRecord>& log) {
  std::ostringstream os;
  for (const auto& r : log) os << r.to_json().dump() << '\n';
  return os.str();
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> stratified_split(
    const std::vector<int>& labels, double holdout_fraction, std::uint64_t seed) {
  require(holdout_fraction >= 0.0 && holdout_fraction < 1.0, "holdout_fraction must be in [0, 1)");
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> train_idx, test_idx;
  for (int cls = 0; cls <= 1; ++cls) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] == cls) members.push_back(i);
    }
    shuffle(members, rng);
    const auto n_test = static_cast<std::size_t>(std::lround(holdout_fraction * static_cast<double>(members.size())));
    test_idx.insert(test_idx.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(n_test));
    train_idx.insert(train_idx.end(), members.begin() + static_cast<std::ptrdiff_t>(n_test), members.end());
  }
  std::sort(train_idx.begin(), train_idx.end());
  std::sort(test_idx.begin(), test_idx.end());
  return {train_idx, test_idx};
}

}  // namespace cpcl

#include "cpcl/classifier.hpp"

#include <algorithm>
#include <cmath>

namespace cpcl {

HeadParams HeadParams::zeros(Eigen::Index d_model) {
  HeadParams p;
  p.w = Mat::Zero(d_model + 5, 2);
  p.b = Vec::Zero(2);
  return p;
}

Vec fuse_and_classify(const Vec& video_vec, const Vec& comment_probs, const Vec& sentiment_probs,
                      const HeadParams& p, HeadCache* cache) {
  require(comment_probs.size() == 2 && sentiment_probs.size() == 3,
          "fuse_and_classify: expected 2 comment and 3 sentiment probabilities");
  require(video_vec.size() + 5 == p.w.rows() && p.w.cols() == 2 && p.b.size() == 2,
          "fuse_and_classify: head shape mismatch");
  require((p.mask_comment == 0 || p.mask_comment == 1) &&
              (p.mask_sentiment == 0 || p.mask_sentiment == 1),
          "fuse_and_classify: masks must be 0 or 1");
  Vec input(p.w.rows());
  input << video_vec, p.mask_comment * comment_probs, p.mask_sentiment * sentiment_probs;
  const Vec probs = softmax(p.w.transpose() * input + p.b);
  if (cache) {
    cache->input = std::move(input);
    cache->probs = probs;
  }
  return probs;
}

HeadGrad fuse_and_classify_backward(const HeadCache& cache, const HeadParams& p,
                                    const Vec& grad_probs) {
  const Vec dlogits = softmax_backward(cache.probs, grad_probs);
  HeadGrad g;
  g.w = cache.input * dlogits.transpose();
  g.b = dlogits;
  const Vec dinput = p.w * dlogits;
  const Eigen::Index dm = p.w.rows() - 5;
  g.video_vec = dinput.head(dm);
  g.comment_probs = p.mask_comment * dinput.segment(dm, 2);
  g.sentiment_probs = p.mask_sentiment * dinput.tail(3);
  return g;
}

void FocalConfig::validate() const {
  require(std::isfinite(gamma) && gamma >= 0.0, "focal: gamma must be finite and >= 0");
  require(alpha[0] > 0.0 && alpha[1] > 0.0, "focal: alpha entries must be positive");
}

FocalConfig FocalConfig::inverse_frequency(const std::vector<int>& labels, double gamma) {
  double counts[2] = {0.0, 0.0};
  for (int y : labels) {
    require(y == 0 || y == 1, "focal: labels must be 0 or 1");
    counts[y] += 1.0;
  }
  require(counts[0] > 0.0 && counts[1] > 0.0, "focal: both classes must be present");
  const double inv0 = 1.0 / counts[0], inv1 = 1.0 / counts[1];
  FocalConfig cfg;
  cfg.gamma = gamma;
  cfg.alpha = {inv0 / (inv0 + inv1), inv1 / (inv0 + inv1)};
  return cfg;
}

double focal_loss(const Vec& probs, int label, const FocalConfig& cfg) {
  require(label == 0 || label == 1, "focal: invalid label " + std::to_string(label));
  require(probs.size() == 2, "focal: expected a probability pair");
  require(std::abs(probs.sum() - 1.0) <= 1e-6, "focal: probabilities must sum to 1");
  const double p = std::clamp(probs[label], kProbClamp, 1.0);
  const double mod = cfg.gamma == 0.0 ? 1.0 : std::pow(1.0 - p, cfg.gamma);
  return -cfg.alpha[static_cast<std::size_t>(label)] * mod * std::log(p);
}

double focal_loss_grad(double p_label, int label, const FocalConfig& cfg) {
  require(label == 0 || label == 1, "focal: invalid label " + std::to_string(label));
  if (p_label < kProbClamp) return 0.0;
  const double p = std::min(p_label, 1.0);
  const double a = cfg.alpha[static_cast<std::size_t>(label)];
  if (cfg.gamma == 0.0) return -a / p;
  const double one_minus = 1.0 - p;
  // d/dp [-(1-p)^g ln p] = g (1-p)^(g-1) ln p - (1-p)^g / p
  const double first = one_minus > 0.0 ? cfg.gamma * std::pow(one_minus, cfg.gamma - 1.0) * std::log(p) : 0.0;
  return a * (first - std::pow(one_minus, cfg.gamma) / p);
}

double total_loss(double focal, double mmd, double lambda) {
  require(lambda >= 0.0, "total_loss: lambda must be >= 0");
  return focal + lambda * mmd;
}

}  // namespace cpcl

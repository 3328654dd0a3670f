#pragma once

#include "cpcl/core.hpp"

#include <array>
#include <vector>

namespace cpcl {

/// Late-fusion head over [video_vec, m_comment * comment_probs, m_sentiment * sentiment_probs].
struct HeadParams {
  Mat w;  // (d_model + 2 + 3) x 2
  Vec b;  // 2
  // Ablation switches; configuration, never trained.
  int mask_comment = 1;
  int mask_sentiment = 1;

  static HeadParams zeros(Eigen::Index d_model);
};

struct HeadCache {
  Vec input;
  Vec probs;
};

Vec fuse_and_classify(const Vec& video_vec, const Vec& comment_probs, const Vec& sentiment_probs,
                      const HeadParams& p, HeadCache* cache = nullptr);

struct HeadGrad {
  Mat w;
  Vec b;
  Vec video_vec;
  Vec comment_probs;    // zero when the comment branch is masked
  Vec sentiment_probs;  // zero when the sentiment branch is masked
};

HeadGrad fuse_and_classify_backward(const HeadCache& cache, const HeadParams& p,
                                    const Vec& grad_probs);

struct FocalConfig {
  double gamma = 2.0;
  std::array<double, 2> alpha{0.5, 0.5};

  void validate() const;
  /// alpha_c proportional to 1 / count_c, normalized to sum 1.
  static FocalConfig inverse_frequency(const std::vector<int>& labels, double gamma = 2.0);
};

inline constexpr double kProbClamp = 1e-12;

/// -alpha[label] * (1 - p)^gamma * ln(p), with p = probs[label] clamped to [1e-12, 1].
double focal_loss(const Vec& probs, int label, const FocalConfig& cfg);

/// d focal_loss / d p_label (0 where the clamp is active).
double focal_loss_grad(double p_label, int label, const FocalConfig& cfg);

/// L_focal + lambda * L_MMD.
double total_loss(double focal, double mmd, double lambda);

}  // namespace cpcl

#pragma once

#include "cpcl/core.hpp"

#include <limits>
#include <vector>

namespace cpcl {

/// C[i][j] = 1 - cos(src_i, tgt_j); cos is 0 when either row has zero norm.
Mat cost_matrix(const Mat& src, const Mat& tgt);

struct OtConfig {
  double epsilon = 0.05;
  /// Marginal relaxation weight. +inf gives balanced Sinkhorn.
  double tau = 1.0;
  int max_iters = 200;
  double tol = 1e-6;

  static constexpr double balanced = std::numeric_limits<double>::infinity();
  bool is_balanced() const { return std::isinf(tau); }
};

struct TransportPlan {
  Mat coupling;  // n_src x n_tgt
  double epsilon = 0.0;
  double tau = 0.0;
  int iterations_run = 0;
  bool converged = false;
  /// Marginal violation after each iteration.
  std::vector<double> violations;
};

/// Log-domain entropic Sinkhorn with uniform marginals. With finite tau the marginal
/// constraints are KL-penalized and each scaling update is raised to tau / (tau + epsilon).
///
/// The reported violation is measured against the fixed point of the row update: in balanced
/// mode this is max_i |T 1 - a|_i (columns are exact after the column update); in relaxed mode
/// the row target is a_i^phi (K v)_i^(1 - phi).
TransportPlan rot_solve(const Mat& cost, const OtConfig& cfg);

/// Row j of the result is the plan-weighted mean of source tokens mapped to target j.
Mat barycentric_project(const TransportPlan& plan, const Mat& src);
/// dL/dsrc for barycentric_project with the plan held constant.
Mat barycentric_project_backward(const TransportPlan& plan, const Mat& grad_out);

struct MmdConfig {
  /// Fixed RBF widths sigma. Ignored when `median_heuristic` is set.
  std::vector<double> bandwidths;
  bool median_heuristic = true;
  /// sigma_k = multiplier_k * sqrt(median squared pairwise distance of the pooled samples).
  /// With an even pair count the median is the mean of the two middle squared distances.
  std::vector<double> multipliers{0.5, 1.0, 2.0};

  void validate() const;
  static MmdConfig fixed(std::vector<double> sigmas) {
    MmdConfig c;
    c.bandwidths = std::move(sigmas);
    c.median_heuristic = false;
    return c;
  }
};

/// Biased (V-statistic) squared MMD summed over the configured bandwidths.
double mmd(const Mat& x, const Mat& y, const MmdConfig& cfg);

/// mmd() plus its gradient with respect to every token of x and y. With the median
/// heuristic the gradient includes the dependence of the bandwidth on the samples.
double mmd_with_grad(const Mat& x, const Mat& y, const MmdConfig& cfg, Mat* grad_x, Mat* grad_y);

struct MmdLossGrad {
  Mat audio, video, face, text;
};

/// MMD(audio, text) + MMD(video, text) + MMD(face, text).
double total_mmd_loss(const Mat& aligned_audio, const Mat& aligned_video, const Mat& aligned_face,
                      const Mat& text, const MmdConfig& cfg, MmdLossGrad* grad = nullptr);

}  // namespace cpcl

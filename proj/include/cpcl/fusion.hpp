#pragma once

#include "cpcl/core.hpp"

#include <random>

namespace cpcl {

/// Selective state-space block parameters. A = -exp(log_a) keeps every state decay negative.
struct SsmParams {
  Mat log_a;    // d_model x d_state
  Mat delta_w;  // d_model x d_model, input -> pre-softplus step size
  Vec delta_b;  // d_model
  Mat b_w;      // d_model x d_state, input -> B_j
  Mat c_w;      // d_model x d_state, input -> C_j
  Vec d_skip;   // d_model

  Eigen::Index d_model() const { return log_a.rows(); }
  Eigen::Index d_state() const { return log_a.cols(); }

  static SsmParams zeros(Eigen::Index d_model, Eigen::Index d_state);
};

struct FusionParams {
  Mat proj_w;  // 4d x d_model
  Vec proj_b;
  Vec ln_gamma;
  Vec ln_beta;
  Mat gate_w1;  // d_model x d_gate
  Vec gate_b1;
  Vec gate_w2;  // d_gate
  double gate_b2 = 0.0;
  SsmParams ssm;

  Eigen::Index d_model() const { return proj_w.cols(); }

  static FusionParams zeros(Eigen::Index d, Eigen::Index d_model, Eigen::Index d_gate,
                            Eigen::Index d_state);
};

inline constexpr double kLayerNormEps = 1e-5;
inline constexpr double kDegenerateVariance = 1e-12;

// ---- concat + linear + layer norm ----

struct ConcatProjectCache {
  Mat concat;   // q x 4d
  Mat xhat;     // normalized rows before the affine
  Vec inv_std;  // 0 for degenerate rows
};

/// Per token: layer_norm(concat(text, audio, video, face) * proj_w + proj_b).
Mat concat_project(const Mat& text, const Mat& audio, const Mat& video, const Mat& face,
                   const FusionParams& p, ConcatProjectCache* cache = nullptr);

struct ConcatProjectGrad {
  Mat proj_w;
  Vec proj_b, ln_gamma, ln_beta;
  Mat text, audio, video, face;
};

ConcatProjectGrad concat_project_backward(const ConcatProjectCache& cache, const FusionParams& p,
                                          const Mat& grad_out);

// ---- feature selection gate ----

struct FsfCache {
  Mat input;
  Mat hidden;  // post-ReLU
  Vec gates;
};

struct FsfResult {
  Mat output;
  Vec gates;  // one per token, in (0, 1)
};

FsfResult fsf_gate(const Mat& seq, const FusionParams& p, FsfCache* cache = nullptr);

struct FsfGrad {
  Mat gate_w1;
  Vec gate_b1, gate_w2;
  double gate_b2 = 0.0;
  Mat input;
};

FsfGrad fsf_gate_backward(const FsfCache& cache, const FusionParams& p, const Mat& grad_out);

// ---- selective SSM ----

struct SsmCache {
  Mat input;
  Mat delta_pre;  // q x d_model
  Mat delta;      // q x d_model
  Mat b;          // q x d_state
  Mat c;          // q x d_state
  Mat a;          // d_model x d_state, the negative decay rates
  // Hidden states h_j flattened as (channel, state), q x (d_model * d_state).
  Mat h;
};

/// Sequential scan: h_j = exp(delta_j A) * h_{j-1} + delta_j B_j x_j, y_j = <C_j, h_j> + D x_j,
/// output = y + input.
Mat ssm_encode(const Mat& seq, const SsmParams& p, SsmCache* cache = nullptr);

struct SsmGrad {
  Mat log_a, delta_w;
  Vec delta_b;
  Mat b_w, c_w;
  Vec d_skip;
  Mat input;
};

SsmGrad ssm_encode_backward(const SsmCache& cache, const SsmParams& p, const Mat& grad_out);

// ---- pooling ----

Vec pool_video(const Mat& seq);
Mat pool_video_backward(Eigen::Index rows, const Vec& grad_out);

}  // namespace cpcl

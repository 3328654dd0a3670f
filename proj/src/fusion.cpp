#include "cpcl/fusion.hpp"

#include <cmath>
#include <string>

namespace cpcl {

SsmParams SsmParams::zeros(Eigen::Index d_model, Eigen::Index d_state) {
  SsmParams p;
  p.log_a = Mat::Zero(d_model, d_state);
  p.delta_w = Mat::Zero(d_model, d_model);
  p.delta_b = Vec::Zero(d_model);
  p.b_w = Mat::Zero(d_model, d_state);
  p.c_w = Mat::Zero(d_model, d_state);
  p.d_skip = Vec::Zero(d_model);
  return p;
}

FusionParams FusionParams::zeros(Eigen::Index d, Eigen::Index d_model, Eigen::Index d_gate,
                                 Eigen::Index d_state) {
  FusionParams p;
  p.proj_w = Mat::Zero(4 * d, d_model);
  p.proj_b = Vec::Zero(d_model);
  p.ln_gamma = Vec::Ones(d_model);
  p.ln_beta = Vec::Zero(d_model);
  p.gate_w1 = Mat::Zero(d_model, d_gate);
  p.gate_b1 = Vec::Zero(d_gate);
  p.gate_w2 = Vec::Zero(d_gate);
  p.gate_b2 = 0.0;
  p.ssm = SsmParams::zeros(d_model, d_state);
  return p;
}

Mat concat_project(const Mat& text, const Mat& audio, const Mat& video, const Mat& face,
                   const FusionParams& p, ConcatProjectCache* cache) {
  const Eigen::Index q = text.rows(), d = text.cols();
  require(audio.rows() == q && video.rows() == q && face.rows() == q,
          "concat_project: all modalities must have the text length " + std::to_string(q));
  require(audio.cols() == d && video.cols() == d && face.cols() == d,
          "concat_project: all modalities must share dim");
  require(p.proj_w.rows() == 4 * d, "concat_project: proj_w expects 4*d input rows");
  const Eigen::Index dm = p.d_model();

  Mat concat(q, 4 * d);
  concat << text, audio, video, face;
  Mat pre = concat * p.proj_w;
  pre.rowwise() += p.proj_b.transpose();

  Mat xhat(q, dm);
  Vec inv_std(q);
  for (Eigen::Index j = 0; j < q; ++j) {
    const double mean = pre.row(j).mean();
    const double var = (pre.row(j).array() - mean).square().mean();
    if (var < kDegenerateVariance) {
      xhat.row(j).setZero();
      inv_std[j] = 0.0;
    } else {
      inv_std[j] = 1.0 / std::sqrt(var + kLayerNormEps);
      xhat.row(j) = (pre.row(j).array() - mean) * inv_std[j];
    }
  }
  Mat out = (xhat.array().rowwise() * p.ln_gamma.transpose().array()).matrix();
  out.rowwise() += p.ln_beta.transpose();
  if (cache) {
    cache->concat = std::move(concat);
    cache->xhat = xhat;
    cache->inv_std = inv_std;
  }
  return out;
}

ConcatProjectGrad concat_project_backward(const ConcatProjectCache& cache, const FusionParams& p,
                                          const Mat& grad_out) {
  const Eigen::Index q = cache.xhat.rows(), dm = cache.xhat.cols();
  const Eigen::Index d = cache.concat.cols() / 4;
  ConcatProjectGrad g;
  g.ln_beta = grad_out.colwise().sum().transpose();
  g.ln_gamma = (grad_out.array() * cache.xhat.array()).colwise().sum().transpose();

  const Mat dxhat = (grad_out.array().rowwise() * p.ln_gamma.transpose().array()).matrix();
  Mat dpre(q, dm);
  for (Eigen::Index j = 0; j < q; ++j) {
    if (cache.inv_std[j] == 0.0) {
      dpre.row(j).setZero();
      continue;
    }
    const double mean_dx = dxhat.row(j).mean();
    const double mean_dx_xhat = dxhat.row(j).dot(cache.xhat.row(j)) / static_cast<double>(dm);
    dpre.row(j) = cache.inv_std[j] *
                  (dxhat.row(j).array() - mean_dx - cache.xhat.row(j).array() * mean_dx_xhat);
  }
  g.proj_w = cache.concat.transpose() * dpre;
  g.proj_b = dpre.colwise().sum().transpose();
  const Mat dconcat = dpre * p.proj_w.transpose();
  g.text = dconcat.leftCols(d);
  g.audio = dconcat.middleCols(d, d);
  g.video = dconcat.middleCols(2 * d, d);
  g.face = dconcat.rightCols(d);
  return g;
}

FsfResult fsf_gate(const Mat& seq, const FusionParams& p, FsfCache* cache) {
  require(seq.rows() >= 1, "fsf_gate: empty sequence");
  require(seq.cols() == p.gate_w1.rows(), "fsf_gate: width mismatch");
  Mat hidden = seq * p.gate_w1;
  hidden.rowwise() += p.gate_b1.transpose();
  hidden = hidden.cwiseMax(0.0);
  const Vec score = (hidden * p.gate_w2).array() + p.gate_b2;
  Vec gates(seq.rows());
  for (Eigen::Index j = 0; j < seq.rows(); ++j) gates[j] = sigmoid(score[j]);
  FsfResult r{(seq.array().colwise() * gates.array()).matrix(), gates};
  if (cache) {
    cache->input = seq;
    cache->hidden = std::move(hidden);
    cache->gates = gates;
  }
  return r;
}

FsfGrad fsf_gate_backward(const FsfCache& cache, const FusionParams& p, const Mat& grad_out) {
  FsfGrad g;
  const Vec dgate = (grad_out.array() * cache.input.array()).rowwise().sum();
  g.input = (grad_out.array().colwise() * cache.gates.array()).matrix();
  const Vec dscore = (dgate.array() * cache.gates.array() * (1.0 - cache.gates.array())).matrix();
  g.gate_w2 = cache.hidden.transpose() * dscore;
  g.gate_b2 = dscore.sum();
  Mat dhidden = dscore * p.gate_w2.transpose();
  dhidden = (cache.hidden.array() > 0.0).select(dhidden, 0.0);
  g.gate_w1 = cache.input.transpose() * dhidden;
  g.gate_b1 = dhidden.colwise().sum().transpose();
  g.input += dhidden * p.gate_w1.transpose();
  return g;
}

Mat ssm_encode(const Mat& seq, const SsmParams& p, SsmCache* cache) {
  const Eigen::Index q = seq.rows(), dm = p.d_model(), ds = p.d_state();
  require(q >= 1, "ssm_encode: empty sequence");
  require(seq.cols() == dm, "ssm_encode: width mismatch");

  const Mat a = -p.log_a.array().exp().matrix();
  Mat delta_pre = seq * p.delta_w;
  delta_pre.rowwise() += p.delta_b.transpose();
  Mat delta = delta_pre.unaryExpr([](double z) { return softplus(z); });
  const Mat b = seq * p.b_w;
  const Mat c = seq * p.c_w;

  Mat hs(q, dm * ds);
  Vec h = Vec::Zero(dm * ds);
  Mat out(q, dm);
  for (Eigen::Index j = 0; j < q; ++j) {
    for (Eigen::Index ch = 0; ch < dm; ++ch) {
      const double dt = delta(j, ch);
      const double x = seq(j, ch);
      double y = 0.0;
      for (Eigen::Index s = 0; s < ds; ++s) {
        double& hv = h[ch * ds + s];
        hv = std::exp(dt * a(ch, s)) * hv + dt * b(j, s) * x;
        y += c(j, s) * hv;
      }
      out(j, ch) = y + p.d_skip[ch] * x + x;
    }
    if (!out.row(j).allFinite() || !h.allFinite()) {
      throw NumericError("ssm_encode: non-finite state at token " + std::to_string(j));
    }
    hs.row(j) = h.transpose();
  }
  if (cache) {
    cache->input = seq;
    cache->delta_pre = std::move(delta_pre);
    cache->delta = std::move(delta);
    cache->b = b;
    cache->c = c;
    cache->a = a;
    cache->h = std::move(hs);
  }
  return out;
}

SsmGrad ssm_encode_backward(const SsmCache& cache, const SsmParams& p, const Mat& grad_out) {
  const Eigen::Index q = cache.input.rows(), dm = p.d_model(), ds = p.d_state();
  const Mat& x = cache.input;
  SsmGrad g;
  g.input = grad_out;  // residual path
  g.d_skip = (grad_out.array() * x.array()).colwise().sum().transpose();
  g.input += (grad_out.array().rowwise() * p.d_skip.transpose().array()).matrix();

  Mat dc = Mat::Zero(q, ds);
  Mat db = Mat::Zero(q, ds);
  Mat ddelta = Mat::Zero(q, dm);
  Mat da = Mat::Zero(dm, ds);
  Vec carry = Vec::Zero(dm * ds);  // dL/dh_{j} contributed from step j+1

  for (Eigen::Index j = q - 1; j >= 0; --j) {
    for (Eigen::Index ch = 0; ch < dm; ++ch) {
      const double gy = grad_out(j, ch);
      const double dt = cache.delta(j, ch);
      const double xv = x(j, ch);
      for (Eigen::Index s = 0; s < ds; ++s) {
        const Eigen::Index k = ch * ds + s;
        const double hj = cache.h(j, k);
        const double hprev = j > 0 ? cache.h(j - 1, k) : 0.0;
        const double abar = std::exp(dt * cache.a(ch, s));
        dc(j, s) += gy * hj;
        const double dh = gy * cache.c(j, s) + carry[k];
        const double dabar = dh * hprev;
        ddelta(j, ch) += dabar * abar * cache.a(ch, s) + dh * cache.b(j, s) * xv;
        da(ch, s) += dabar * abar * dt;
        db(j, s) += dh * dt * xv;
        g.input(j, ch) += dh * dt * cache.b(j, s);
        carry[k] = dh * abar;
      }
    }
  }
  g.log_a = (da.array() * cache.a.array()).matrix();
  const Mat dpre = (ddelta.array() *
                    cache.delta_pre.unaryExpr([](double z) { return sigmoid(z); }).array())
                       .matrix();
  g.delta_w = x.transpose() * dpre;
  g.delta_b = dpre.colwise().sum().transpose();
  g.input += dpre * p.delta_w.transpose();
  g.b_w = x.transpose() * db;
  g.input += db * p.b_w.transpose();
  g.c_w = x.transpose() * dc;
  g.input += dc * p.c_w.transpose();
  return g;
}

Vec pool_video(const Mat& seq) {
  require(seq.rows() >= 1, "pool_video: empty sequence");
  return seq.colwise().mean().transpose();
}

Mat pool_video_backward(Eigen::Index rows, const Vec& grad_out) {
  Mat g(rows, grad_out.size());
  g.rowwise() = (grad_out / static_cast<double>(rows)).transpose();
  return g;
}

}  // namespace cpcl

#include "cpcl/alignment.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace cpcl {

namespace {

double log_sum_exp(const double* v, Eigen::Index n, Eigen::Index stride) {
  double mx = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < n; ++i) mx = std::max(mx, v[i * stride]);
  if (std::isinf(mx)) return mx;
  double s = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) s += std::exp(v[i * stride] - mx);
  return mx + std::log(s);
}

struct Bandwidths {
  std::vector<double> sigma2;
  // Median-heuristic bookkeeping: which pooled pairs define the median squared distance.
  std::vector<std::pair<Eigen::Index, Eigen::Index>> median_pairs;
  std::vector<double> mult2;
  bool from_median = false;
};

Bandwidths choose_bandwidths(const Mat& pooled, const MmdConfig& cfg) {
  Bandwidths bw;
  if (!cfg.median_heuristic) {
    for (double s : cfg.bandwidths) bw.sigma2.push_back(s * s);
    return bw;
  }
  struct Pair {
    double d2;
    Eigen::Index i, j;
  };
  std::vector<Pair> pairs;
  const Eigen::Index n = pooled.rows();
  pairs.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      pairs.push_back({(pooled.row(i) - pooled.row(j)).squaredNorm(), i, j});
    }
  }
  const auto before = [](const Pair& a, const Pair& b) {
    if (a.d2 != b.d2) return a.d2 < b.d2;
    return a.i != b.i ? a.i < b.i : a.j < b.j;
  };
  const std::size_t m = pairs.size();
  const auto upper = pairs.begin() + static_cast<std::ptrdiff_t>(m / 2);
  std::nth_element(pairs.begin(), upper, pairs.end(), before);
  double med2 = 0.0;
  std::vector<std::pair<Eigen::Index, Eigen::Index>> used;
  if (m % 2 == 1) {
    med2 = upper->d2;
    used.emplace_back(upper->i, upper->j);
  } else {
    // The lower middle is the largest element left of the upper middle.
    const auto lower = std::max_element(pairs.begin(), upper, before);
    med2 = 0.5 * (lower->d2 + upper->d2);
    used.emplace_back(lower->i, lower->j);
    used.emplace_back(upper->i, upper->j);
  }
  if (med2 < 1e-12) {
    // Degenerate pool: fall back to unit base width, independent of the samples.
    med2 = 1.0;
    used.clear();
  }
  for (double mult : cfg.multipliers) {
    bw.sigma2.push_back(mult * mult * med2);
    bw.mult2.push_back(mult * mult);
  }
  bw.median_pairs = std::move(used);
  bw.from_median = !bw.median_pairs.empty();
  return bw;
}

}  // namespace

Mat cost_matrix(const Mat& src, const Mat& tgt) {
  require(src.cols() == tgt.cols(), "cost_matrix: dim mismatch (" + std::to_string(src.cols()) +
                                        " vs " + std::to_string(tgt.cols()) + ")");
  require(src.rows() >= 1 && tgt.rows() >= 1, "cost_matrix: empty sequence");
  const Vec sn = src.rowwise().norm();
  const Vec tn = tgt.rowwise().norm();
  const Mat dots = src * tgt.transpose();
  Mat c(src.rows(), tgt.rows());
  for (Eigen::Index i = 0; i < src.rows(); ++i) {
    for (Eigen::Index j = 0; j < tgt.rows(); ++j) {
      double cosv = 0.0;
      if (sn[i] > 0.0 && tn[j] > 0.0) cosv = std::clamp(dots(i, j) / (sn[i] * tn[j]), -1.0, 1.0);
      c(i, j) = 1.0 - cosv;
    }
  }
  return c;
}

namespace {

// Largest |C|/epsilon for which the kernel and scalings stay far inside double range.
constexpr double kScalingDomainLimit = 200.0;

double pow_phi(double x, double phi) { return phi == 1.0 ? x : std::pow(x, phi); }

// Multiplicative updates on K = exp(-C/epsilon). Same iterates as the log-domain loop.
void solve_scaling(const Mat& cost, const OtConfig& cfg, double phi, TransportPlan& plan) {
  const Eigen::Index n = cost.rows(), m = cost.cols();
  const double a = 1.0 / static_cast<double>(n);
  const double b = 1.0 / static_cast<double>(m);
  const double a_phi = pow_phi(a, phi);
  const Mat k = (-cost / cfg.epsilon).array().exp().matrix();
  Vec u = Vec::Ones(n), v = Vec::Ones(m);
  Vec kv = k * v;
  for (int it = 0; it < cfg.max_iters; ++it) {
    for (Eigen::Index i = 0; i < n; ++i) u[i] = pow_phi(a / kv[i], phi);
    const Vec ktu = k.transpose() * u;
    for (Eigen::Index j = 0; j < m; ++j) v[j] = pow_phi(b / ktu[j], phi);

    // Row violation against the fixed point of the row update.
    kv = k * v;
    double violation = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double target = a_phi * pow_phi(kv[i], 1.0 - phi);
      violation = std::max(violation, std::abs(u[i] * kv[i] - target));
    }
    plan.violations.push_back(violation);
    plan.iterations_run = it + 1;
    if (!std::isfinite(violation)) throw NumericError("rot_solve: non-finite scaling");
    if (violation < cfg.tol) {
      plan.converged = true;
      break;
    }
  }
  plan.coupling = u.asDiagonal() * k * v.asDiagonal();
}

void solve_log(const Mat& cost, const OtConfig& cfg, double phi, TransportPlan& plan) {
  const Eigen::Index n = cost.rows(), m = cost.cols();
  const double log_a = -std::log(static_cast<double>(n));
  const double log_b = -std::log(static_cast<double>(m));
  const Mat log_k = -cost / cfg.epsilon;

  Vec log_u = Vec::Zero(n), log_v = Vec::Zero(m);
  Mat scratch(n, m);
  Vec log_kv(n);
  auto row_lse = [&] {
    scratch = log_k;
    scratch.rowwise() += log_v.transpose();
    for (Eigen::Index i = 0; i < n; ++i) log_kv[i] = log_sum_exp(scratch.row(i).data(), m, 1);
  };
  row_lse();
  for (int it = 0; it < cfg.max_iters; ++it) {
    for (Eigen::Index i = 0; i < n; ++i) log_u[i] = phi * (log_a - log_kv[i]);
    scratch = log_k;
    scratch.colwise() += log_u;
    for (Eigen::Index j = 0; j < m; ++j) {
      log_v[j] = phi * (log_b - log_sum_exp(scratch.data() + j, n, m));
    }

    // Row violation against the fixed point of the row update.
    row_lse();
    double violation = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double row_sum = std::exp(log_u[i] + log_kv[i]);
      const double target = std::exp(phi * log_a + (1.0 - phi) * log_kv[i]);
      violation = std::max(violation, std::abs(row_sum - target));
    }
    plan.violations.push_back(violation);
    plan.iterations_run = it + 1;
    if (!std::isfinite(violation)) throw NumericError("rot_solve: non-finite scaling");
    if (violation < cfg.tol) {
      plan.converged = true;
      break;
    }
  }

  plan.coupling = log_k;
  plan.coupling.colwise() += log_u;
  plan.coupling.rowwise() += log_v.transpose();
  plan.coupling = plan.coupling.array().exp().matrix();
}

}  // namespace

TransportPlan rot_solve(const Mat& cost, const OtConfig& cfg) {
  require(cfg.epsilon > 0.0, "rot_solve: epsilon must be positive");
  require(cfg.tau > 0.0, "rot_solve: tau must be positive (or infinite)");
  require(cfg.max_iters >= 1, "rot_solve: max_iters must be >= 1");
  require(cost.rows() >= 1 && cost.cols() >= 1, "rot_solve: empty cost matrix");
  if (!cost.allFinite()) throw InvalidArgument("rot_solve: non-finite cost entries");

  const double phi = cfg.is_balanced() ? 1.0 : cfg.tau / (cfg.tau + cfg.epsilon);
  TransportPlan plan;
  plan.epsilon = cfg.epsilon;
  plan.tau = cfg.tau;
  if (cost.cwiseAbs().maxCoeff() / cfg.epsilon <= kScalingDomainLimit) {
    solve_scaling(cost, cfg, phi, plan);
  } else {
    solve_log(cost, cfg, phi, plan);
  }
  return plan;
}

Mat barycentric_project(const TransportPlan& plan, const Mat& src) {
  const Mat& t = plan.coupling;
  require(t.rows() == src.rows(), "barycentric_project: plan has " + std::to_string(t.rows()) +
                                      " source rows, sequence has " + std::to_string(src.rows()));
  const Vec mass = t.colwise().sum().transpose();
  Mat out = t.transpose() * src;
  for (Eigen::Index j = 0; j < out.rows(); ++j) out.row(j) /= std::max(mass[j], 1e-12);
  return out;
}

Mat barycentric_project_backward(const TransportPlan& plan, const Mat& grad_out) {
  const Mat& t = plan.coupling;
  require(t.cols() == grad_out.rows(), "barycentric_project_backward: shape mismatch");
  const Vec mass = t.colwise().sum().transpose();
  Mat scaled = grad_out;
  for (Eigen::Index j = 0; j < scaled.rows(); ++j) scaled.row(j) /= std::max(mass[j], 1e-12);
  return t * scaled;
}

void MmdConfig::validate() const {
  if (median_heuristic) {
    require(!multipliers.empty(), "MMD: multiplier list must be non-empty");
    for (double m : multipliers) require(m > 0.0, "MMD: multipliers must be positive");
  } else {
    require(!bandwidths.empty(), "MMD: bandwidth list must be non-empty");
    for (double s : bandwidths) require(s > 0.0, "MMD: bandwidths must be positive");
  }
}

double mmd(const Mat& x, const Mat& y, const MmdConfig& cfg) {
  return mmd_with_grad(x, y, cfg, nullptr, nullptr);
}

namespace {

// Evaluation order is fixed by a canonical ordering of the two sets, so that
// mmd(x, y) and mmd(y, x) run the identical arithmetic and agree bitwise.
bool canonical_before(const Mat& a, const Mat& b) {
  if (a.rows() != b.rows()) return a.rows() < b.rows();
  return std::lexicographical_compare(a.data(), a.data() + a.size(), b.data(), b.data() + b.size());
}

double mmd_impl(const Mat& x, const Mat& y, const MmdConfig& cfg, Mat* grad_x, Mat* grad_y) {
  const Eigen::Index nx = x.rows(), ny = y.rows();
  Mat pooled(nx + ny, x.cols());
  pooled << x, y;
  const Bandwidths bw = choose_bandwidths(pooled, cfg);

  const Eigen::Index n = nx + ny;
  // Pairwise squared distances of the pooled set.
  Mat d2(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    d2(i, i) = 0.0;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      d2(i, j) = d2(j, i) = (pooled.row(i) - pooled.row(j)).squaredNorm();
    }
  }
  // Pair weights: +1/nx^2 within x, +1/ny^2 within y, -1/(nx ny) across (each ordered pair).
  auto weight = [&](Eigen::Index i, Eigen::Index j) {
    const bool xi = i < nx, xj = j < nx;
    if (xi && xj) return 1.0 / static_cast<double>(nx * nx);
    if (!xi && !xj) return 1.0 / static_cast<double>(ny * ny);
    return -1.0 / static_cast<double>(nx * ny);
  };

  const bool want_grad = grad_x != nullptr || grad_y != nullptr;
  Mat grad = want_grad ? Mat::Zero(n, x.cols()) : Mat();
  double total = 0.0;
  double dtotal_dmed2 = 0.0;
  for (std::size_t b = 0; b < bw.sigma2.size(); ++b) {
    const double s2 = bw.sigma2[b];
    double val = 0.0;
    double dval_ds2 = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) {
        const double w = weight(i, j);
        const double k = std::exp(-d2(i, j) / (2.0 * s2));
        val += w * k;
        if (want_grad && i != j) {
          // d k(z_i, z_j) / d z_i = -k (z_i - z_j) / s2; ordered pairs cover both ends.
          grad.row(i) += (-2.0 * w * k / s2) * (pooled.row(i) - pooled.row(j));
          dval_ds2 += w * k * d2(i, j) / (2.0 * s2 * s2);
        }
      }
    }
    total += val;
    if (bw.from_median) dtotal_dmed2 += dval_ds2 * bw.mult2[b];
  }
  if (want_grad && bw.from_median) {
    const double share = dtotal_dmed2 / static_cast<double>(bw.median_pairs.size());
    for (const auto& [i, j] : bw.median_pairs) {
      const RowVec diff = pooled.row(i) - pooled.row(j);
      grad.row(i) += 2.0 * share * diff;
      grad.row(j) -= 2.0 * share * diff;
    }
  }
  if (grad_x) *grad_x = grad.topRows(nx);
  if (grad_y) *grad_y = grad.bottomRows(ny);
  return total < 0.0 ? 0.0 : total;
}

}  // namespace

double mmd_with_grad(const Mat& x, const Mat& y, const MmdConfig& cfg, Mat* grad_x,
                     Mat* grad_y) {
  require(x.rows() >= 1 && y.rows() >= 1, "MMD: empty sample set");
  require(x.cols() == y.cols(), "MMD: dim mismatch (" + std::to_string(x.cols()) + " vs " +
                                    std::to_string(y.cols()) + ")");
  cfg.validate();
  if (canonical_before(y, x)) return mmd_impl(y, x, cfg, grad_y, grad_x);
  return mmd_impl(x, y, cfg, grad_x, grad_y);
}

double total_mmd_loss(const Mat& aligned_audio, const Mat& aligned_video, const Mat& aligned_face,
                      const Mat& text, const MmdConfig& cfg, MmdLossGrad* grad) {
  require(aligned_audio.cols() == text.cols() && aligned_video.cols() == text.cols() &&
              aligned_face.cols() == text.cols(),
          "total_mmd_loss: all sequences must share dim");
  if (grad == nullptr) {
    return mmd(aligned_audio, text, cfg) + mmd(aligned_video, text, cfg) +
           mmd(aligned_face, text, cfg);
  }
  Mat gt_a, gt_v, gt_f;
  const double la = mmd_with_grad(aligned_audio, text, cfg, &grad->audio, &gt_a);
  const double lv = mmd_with_grad(aligned_video, text, cfg, &grad->video, &gt_v);
  const double lf = mmd_with_grad(aligned_face, text, cfg, &grad->face, &gt_f);
  grad->text = gt_a + gt_v + gt_f;
  return la + lv + lf;
}

}  // namespace cpcl

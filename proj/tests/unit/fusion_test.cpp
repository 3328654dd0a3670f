#include "cpcl/fusion.hpp"

#include "support.hpp"

#include <gtest/gtest.h>

namespace cpcl {
namespace {

using test::random_mat;
using test::random_vec;

FusionParams random_fusion(std::mt19937_64& rng, Eigen::Index d, Eigen::Index dm,
                           Eigen::Index dg = 3, Eigen::Index ds = 2) {
  FusionParams p = FusionParams::zeros(d, dm, dg, ds);
  p.proj_w = random_mat(rng, 4 * d, dm);
  p.proj_b = random_vec(rng, dm);
  p.ln_gamma = random_vec(rng, dm);
  p.ln_beta = random_vec(rng, dm);
  p.gate_w1 = random_mat(rng, dm, dg);
  p.gate_b1 = random_vec(rng, dg);
  p.gate_w2 = random_vec(rng, dg);
  p.gate_b2 = 0.3;
  p.ssm.log_a = random_mat(rng, dm, ds, 0.5);
  p.ssm.delta_w = random_mat(rng, dm, dm, 0.5);
  p.ssm.delta_b = random_vec(rng, dm, 0.5);
  p.ssm.b_w = random_mat(rng, dm, ds);
  p.ssm.c_w = random_mat(rng, dm, ds);
  p.ssm.d_skip = random_vec(rng, dm);
  return p;
}

TEST(ConcatProject, ConstantRowsNormalizeToZero) {
  std::mt19937_64 rng(1);
  FusionParams p = FusionParams::zeros(2, 5, 3, 2);
  p.proj_b = Vec::Constant(5, 3.7);
  p.ln_gamma = Vec::Ones(5);
  const Mat x = random_mat(rng, 3, 2);
  const Mat out = concat_project(x, x, x, x, p);
  EXPECT_EQ(out, Mat::Zero(3, 5));
}

TEST(ConcatProject, ZeroGammaGivesBeta) {
  std::mt19937_64 rng(2);
  FusionParams p = random_fusion(rng, 2, 5);
  p.ln_gamma.setZero();
  const Mat out = concat_project(random_mat(rng, 4, 2), random_mat(rng, 4, 2),
                                 random_mat(rng, 4, 2), random_mat(rng, 4, 2), p);
  for (Eigen::Index j = 0; j < 4; ++j) EXPECT_EQ(out.row(j), p.ln_beta.transpose());
}

TEST(ConcatProject, MatchesNaiveOracle) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::Index d = 3, dm = 6, q = 4;
    const FusionParams p = random_fusion(rng, d, dm);
    const Mat t = random_mat(rng, q, d), a = random_mat(rng, q, d), v = random_mat(rng, q, d),
              f = random_mat(rng, q, d);
    const Mat out = concat_project(t, a, v, f, p);
    for (Eigen::Index j = 0; j < q; ++j) {
      std::vector<double> cat;
      for (const Mat* m : {&t, &a, &v, &f}) {
        for (Eigen::Index k = 0; k < d; ++k) cat.push_back((*m)(j, k));
      }
      std::vector<double> pre(static_cast<std::size_t>(dm));
      for (Eigen::Index c = 0; c < dm; ++c) {
        double acc = p.proj_b[c];
        for (Eigen::Index k = 0; k < 4 * d; ++k) acc += cat[static_cast<std::size_t>(k)] * p.proj_w(k, c);
        pre[static_cast<std::size_t>(c)] = acc;
      }
      double mean = 0.0, var = 0.0;
      for (double x : pre) mean += x / dm;
      for (double x : pre) var += (x - mean) * (x - mean) / dm;
      for (Eigen::Index c = 0; c < dm; ++c) {
        const double norm = (pre[static_cast<std::size_t>(c)] - mean) / std::sqrt(var + 1e-5);
        EXPECT_NEAR(out(j, c), norm * p.ln_gamma[c] + p.ln_beta[c], 1e-10);
      }
    }
  }
}

TEST(ConcatProject, NormalizedRowStatistics) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const double scale = std::pow(10.0, static_cast<double>(trial % 8) - 3.0);
    FusionParams p = random_fusion(rng, 2, 7);
    p.proj_w *= scale;
    p.proj_b *= scale;
    p.ln_gamma = Vec::Ones(7);
    p.ln_beta = Vec::Zero(7);
    const Mat x = random_mat(rng, 3, 2);
    ConcatProjectCache cache;
    const Mat out = concat_project(x, x, x, x, p, &cache);
    for (Eigen::Index j = 0; j < 3; ++j) {
      Mat pre = cache.concat.row(j) * p.proj_w;
      pre += p.proj_b.transpose();
      const double pv = (pre.array() - pre.mean()).square().mean();
      if (pv < 1e-8) continue;
      const double m = out.row(j).mean();
      const double v = (out.row(j).array() - m).square().mean();
      EXPECT_NEAR(m, 0.0, 1e-6);
      // The epsilon inside the square root shrinks the variance to pv / (pv + eps).
      EXPECT_NEAR(v, pv / (pv + kLayerNormEps), 1e-12);
      if (pv >= 10.0) EXPECT_NEAR(v, 1.0, 1e-6);
    }
  }
}

TEST(ConcatProject, ShapeErrors) {
  const FusionParams p = FusionParams::zeros(2, 4, 2, 2);
  const Mat x = Mat::Ones(3, 2);
  EXPECT_THROW(concat_project(x, Mat::Ones(2, 2), x, x, p), InvalidArgument);
  EXPECT_THROW(concat_project(x, x, Mat::Ones(3, 3), x, p), InvalidArgument);
}

TEST(FsfGate, ZeroOutputWeightsGiveHalf) {
  std::mt19937_64 rng(5);
  FusionParams p = random_fusion(rng, 2, 4);
  p.gate_w2.setZero();
  p.gate_b2 = 0.0;
  const Mat x = random_mat(rng, 5, 4);
  const FsfResult r = fsf_gate(x, p);
  for (Eigen::Index j = 0; j < 5; ++j) EXPECT_EQ(r.gates[j], 0.5);
  EXPECT_EQ(r.output, 0.5 * x);
}

TEST(FsfGate, SaturatedBiasPassesInput) {
  std::mt19937_64 rng(6);
  FusionParams p = random_fusion(rng, 2, 4);
  p.gate_w2.setZero();
  p.gate_b2 = 30.0;
  const Mat x = random_mat(rng, 5, 4);
  const FsfResult r = fsf_gate(x, p);
  EXPECT_LT((r.output - x).cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_LT((r.gates.array() - 1.0).abs().maxCoeff(), 1e-9);
}

TEST(FsfGate, HandComputedGates) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const FusionParams p = random_fusion(rng, 2, 4);
    const Mat x = random_mat(rng, 6, 4);
    const FsfResult r = fsf_gate(x, p);
    ASSERT_EQ(r.output.rows(), 6);
    for (Eigen::Index j = 0; j < 6; ++j) {
      double z = p.gate_b2;
      for (Eigen::Index h = 0; h < p.gate_w1.cols(); ++h) {
        double a = p.gate_b1[h];
        for (Eigen::Index c = 0; c < 4; ++c) a += x(j, c) * p.gate_w1(c, h);
        z += std::max(a, 0.0) * p.gate_w2[h];
      }
      const double g = 1.0 / (1.0 + std::exp(-z));
      EXPECT_NEAR(r.gates[j], g, 1e-12);
      EXPECT_GT(r.gates[j], 0.0);
      EXPECT_LT(r.gates[j], 1.0);
      for (Eigen::Index c = 0; c < 4; ++c) EXPECT_NEAR(r.output(j, c) / x(j, c), g, 1e-12);
    }
  }
}

SsmParams scalar_ssm(double delta_b) {
  SsmParams p = SsmParams::zeros(1, 1);
  p.log_a(0, 0) = 0.0;  // A = -1
  p.delta_b[0] = delta_b;
  p.b_w(0, 0) = 1.0;
  p.c_w(0, 0) = 1.0;
  p.d_skip[0] = 0.0;
  return p;
}

TEST(Ssm, ScalarTwoStepRecurrence) {
  // delta = softplus(0) = ln 2, so exp(delta A) = 0.5 and delta B = ln 2.
  Mat x(2, 1);
  x << 1, 1;
  const Mat out = ssm_encode(x, scalar_ssm(0.0));
  const double ln2 = std::log(2.0);
  EXPECT_NEAR(out(0, 0) - 1.0, ln2, 1e-12);
  EXPECT_NEAR(out(1, 0) - 1.0, 0.5 * ln2 + ln2, 1e-12);
  EXPECT_NEAR(out(0, 0) - 1.0, 0.6931, 1e-4);
  EXPECT_NEAR(out(1, 0) - 1.0, 1.0397, 1e-4);
}

TEST(Ssm, SingleTokenHasNoHistory) {
  std::mt19937_64 rng(8);
  const FusionParams fp = random_fusion(rng, 2, 4, 3, 3);
  const SsmParams& p = fp.ssm;
  const Mat x = random_mat(rng, 1, 4);
  const Mat out = ssm_encode(x, p);
  const RowVec b = x * p.b_w, c = x * p.c_w;
  for (Eigen::Index ch = 0; ch < 4; ++ch) {
    double pre = p.delta_b[ch];
    for (Eigen::Index k = 0; k < 4; ++k) pre += x(0, k) * p.delta_w(k, ch);
    const double delta = std::log1p(std::exp(pre));
    double y = p.d_skip[ch] * x(0, ch);
    for (Eigen::Index s = 0; s < 3; ++s) y += c[s] * delta * b[s] * x(0, ch);
    EXPECT_NEAR(out(0, ch), y + x(0, ch), 1e-12);
  }
}

TEST(Ssm, VanishingStepLeavesSkipOnly) {
  std::mt19937_64 rng(9);
  FusionParams fp = random_fusion(rng, 2, 4, 3, 3);
  SsmParams& p = fp.ssm;
  p.delta_w.setZero();
  p.delta_b.setConstant(std::log(std::expm1(1e-9)));
  const Mat x = random_mat(rng, 6, 4);
  const Mat out = ssm_encode(x, p);
  for (Eigen::Index j = 0; j < 6; ++j) {
    for (Eigen::Index c = 0; c < 4; ++c) {
      EXPECT_NEAR(out(j, c), (1.0 + p.d_skip[c]) * x(j, c), 1e-6);
    }
  }
}

TEST(Ssm, Causal) {
  std::mt19937_64 rng(10);
  const FusionParams fp = random_fusion(rng, 2, 4, 3, 3);
  for (int trial = 0; trial < 20; ++trial) {
    const Mat x = random_mat(rng, 7, 4);
    const Mat base = ssm_encode(x, fp.ssm);
    const Eigen::Index j = 1 + static_cast<Eigen::Index>(rng() % 6);
    Mat y = x;
    y.row(j) = random_mat(rng, 1, 4);
    const Mat changed = ssm_encode(y, fp.ssm);
    for (Eigen::Index i = 0; i < j; ++i) EXPECT_EQ(changed.row(i), base.row(i));
    EXPECT_NE(changed.row(j), base.row(j));
  }
}

TEST(Ssm, DecayAlwaysNegative) {
  std::mt19937_64 rng(11);
  const FusionParams fp = random_fusion(rng, 2, 4, 3, 3);
  SsmCache cache;
  ssm_encode(random_mat(rng, 5, 4, 10.0), fp.ssm, &cache);
  EXPECT_LT(cache.a.maxCoeff(), 0.0);
  EXPECT_GT(cache.delta.minCoeff(), 0.0);
}

TEST(Pool, Examples) {
  Mat one(1, 3);
  one << 1, -2, 5;
  EXPECT_EQ(pool_video(one), one.row(0).transpose());
  Mat pair(2, 3);
  pair << 1, -2, 5, -1, 2, -5;
  EXPECT_EQ(pool_video(pair), Vec::Zero(3));
  EXPECT_THROW(pool_video(Mat(0, 3)), InvalidArgument);
}

TEST(Pool, MatchesNaiveMean) {
  std::mt19937_64 rng(12);
  const Mat x = random_mat(rng, 9, 5);
  const Vec m = pool_video(x);
  for (Eigen::Index c = 0; c < 5; ++c) {
    double s = 0.0;
    for (Eigen::Index j = 0; j < 9; ++j) s += x(j, c);
    EXPECT_NEAR(m[c], s / 9.0, 1e-12);
  }
}

TEST(Fusion, GateKeepsLength) {
  std::mt19937_64 rng(13);
  const FusionParams p = random_fusion(rng, 2, 4);
  for (Eigen::Index q = 1; q < 10; ++q) {
    EXPECT_EQ(fsf_gate(random_mat(rng, q, 4), p).output.rows(), q);
  }
}

}  // namespace
}  // namespace cpcl

#include "cpcl/alignment.hpp"

#include "support.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

namespace cpcl {
namespace {

using test::random_mat;

OtConfig balanced(double eps, int iters = 500, double tol = 1e-6) {
  OtConfig cfg;
  cfg.epsilon = eps;
  cfg.tau = OtConfig::balanced;
  cfg.max_iters = iters;
  cfg.tol = tol;
  return cfg;
}

TEST(Cost, Examples) {
  Mat a(3, 2);
  a << 1, 2, 1, 0, 0, 0;
  Mat b(3, 2);
  b << 1, 2, 0, 3, -1, -2;
  const Mat c = cost_matrix(a, b);
  EXPECT_NEAR(c(0, 0), 0.0, 1e-15);
  EXPECT_NEAR(c(1, 1), 1.0, 1e-15);
  EXPECT_NEAR(c(0, 2), 2.0, 1e-15);
  for (Eigen::Index j = 0; j < 3; ++j) EXPECT_EQ(c(2, j), 1.0);
  EXPECT_THROW(cost_matrix(a, Mat::Ones(2, 3)), InvalidArgument);
}

TEST(Cost, EntriesBounded) {
  std::mt19937_64 rng(1);
  const Mat c = cost_matrix(random_mat(rng, 20, 5), random_mat(rng, 30, 5));
  EXPECT_GE(c.minCoeff(), 0.0);
  EXPECT_LE(c.maxCoeff(), 2.0);
}

TEST(RotSolve, SingleCell) {
  Mat c(1, 1);
  c << 0.7;
  const TransportPlan p = rot_solve(c, balanced(0.05));
  EXPECT_NEAR(p.coupling(0, 0), 1.0, 1e-12);
  EXPECT_TRUE(p.converged);
}

// Exact LP on a 2x2 problem with uniform marginals: the feasible set is
// [[t, .5 - t], [.5 - t, t]] for t in [0, .5], so the optimum is an endpoint.
Mat lp_oracle_2x2(const Mat& c) {
  const double slope = c(0, 0) + c(1, 1) - c(0, 1) - c(1, 0);
  const double t = slope < 0.0 ? 0.5 : 0.0;
  Mat t_opt(2, 2);
  t_opt << t, 0.5 - t, 0.5 - t, t;
  return t_opt;
}

TEST(RotSolve, SmallEpsilonMatchesLpSupport) {
  Mat c(2, 2);
  c << 0, 1, 1, 0;
  for (double eps : {0.01, 0.001}) {
    const TransportPlan p = rot_solve(c, balanced(eps));
    const Mat oracle = lp_oracle_2x2(c);
    EXPECT_LT(p.coupling(0, 1), 1e-3);
    EXPECT_LT(p.coupling(1, 0), 1e-3);
    EXPECT_NEAR(p.coupling(0, 0), 0.5, 1e-3);
    EXPECT_NEAR(p.coupling(1, 1), 0.5, 1e-3);
    EXPECT_LT((p.coupling - oracle).cwiseAbs().maxCoeff(), 1e-3);
  }
}

TEST(RotSolve, RandomTwoByTwoLpSupport) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 2.0);
  for (int trial = 0; trial < 50; ++trial) {
    Mat c(2, 2);
    c << u(rng), u(rng), u(rng), u(rng);
    const double slope = c(0, 0) + c(1, 1) - c(0, 1) - c(1, 0);
    if (std::abs(slope) < 0.2) continue;  // near-degenerate optimum
    const Mat oracle = lp_oracle_2x2(c);
    const TransportPlan p = rot_solve(c, balanced(0.01, 2000));
    for (Eigen::Index i = 0; i < 4; ++i) {
      if (oracle.data()[i] == 0.0) EXPECT_LT(p.coupling.data()[i], 1e-3);
    }
  }
}

Mat uniform_cost(std::mt19937_64& rng, Eigen::Index n, Eigen::Index m) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Mat c(n, m);
  for (Eigen::Index i = 0; i < c.size(); ++i) c.data()[i] = u(rng);
  return c;
}

TEST(RotSolve, BalancedMarginals) {
  std::mt19937_64 rng(3);
  for (auto [n, m] : {std::pair{5, 7}, std::pair{10, 10}, std::pair{3, 12}}) {
    const TransportPlan p = rot_solve(uniform_cost(rng, n, m), balanced(0.1));
    ASSERT_TRUE(p.converged);
    EXPECT_LE(p.iterations_run, 500);
    EXPECT_GE(p.coupling.minCoeff(), 0.0);
    EXPECT_TRUE(p.coupling.allFinite());
    const Vec rows = p.coupling.rowwise().sum();
    const RowVec cols = p.coupling.colwise().sum();
    for (Eigen::Index i = 0; i < n; ++i) EXPECT_NEAR(rows[i], 1.0 / n, 1e-6);
    for (Eigen::Index j = 0; j < m; ++j) EXPECT_NEAR(cols[j], 1.0 / m, 1e-6);
  }
}

TEST(RotSolve, ViolationMonotoneOverFinalIterations) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const TransportPlan p = rot_solve(uniform_cost(rng, 10, 10), balanced(0.1));
    ASSERT_TRUE(p.converged);
    ASSERT_LE(p.iterations_run, 500);
    const auto& v = p.violations;
    ASSERT_EQ(v.size(), static_cast<std::size_t>(p.iterations_run));
    EXPECT_LT(v.back(), 1e-6);
    const std::size_t from = v.size() > 10 ? v.size() - 10 : 0;
    for (std::size_t k = from + 1; k < v.size(); ++k) EXPECT_LE(v[k], v[k - 1]);
  }
}

// Plain balanced Sinkhorn on the Gibbs kernel, iterated to a fixed point.
Mat sinkhorn_oracle(const Mat& c, double eps, int iters) {
  const Eigen::Index n = c.rows(), m = c.cols();
  const Mat k = (-c / eps).array().exp().matrix();
  Vec u = Vec::Ones(n), v = Vec::Ones(m);
  for (int it = 0; it < iters; ++it) {
    u = (Vec::Constant(n, 1.0 / n).array() / (k * v).array()).matrix();
    v = (Vec::Constant(m, 1.0 / m).array() / (k.transpose() * u).array()).matrix();
  }
  return u.asDiagonal() * k * v.asDiagonal();
}

TEST(RotSolve, AgreesWithPlainSinkhornOracle) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(0.0, 0.3);
  Mat c(4, 6);
  for (Eigen::Index i = 0; i < c.size(); ++i) c.data()[i] = 1.0 + u(rng);
  // The constant offset leaves the plan unchanged; eps = 0.005 puts max|C| / eps past the
  // log-domain switch while 0.05 stays on the scaling path.
  for (double eps : {0.05, 0.005}) {
    const TransportPlan p = rot_solve(c, balanced(eps, 20000, 1e-13));
    ASSERT_TRUE(p.converged) << eps;
    const Mat oracle = sinkhorn_oracle(c, eps, 20000);
    EXPECT_LT((p.coupling - oracle).cwiseAbs().maxCoeff(), 1e-10) << eps;
  }
}

TEST(RotSolve, RelaxedModeFiniteAndNonnegative) {
  std::mt19937_64 rng(6);
  OtConfig cfg;
  const Mat c = cost_matrix(random_mat(rng, 8, 4), random_mat(rng, 5, 4));
  const TransportPlan p = rot_solve(c, cfg);
  EXPECT_TRUE(p.coupling.allFinite());
  EXPECT_GE(p.coupling.minCoeff(), 0.0);
  EXPECT_EQ(p.tau, 1.0);
  EXPECT_EQ(p.epsilon, 0.05);
}

TEST(RotSolve, Errors) {
  Mat c = Mat::Ones(2, 2);
  EXPECT_THROW(rot_solve(c, balanced(0.0)), InvalidArgument);
  OtConfig cfg;
  cfg.tau = -1.0;
  EXPECT_THROW(rot_solve(c, cfg), InvalidArgument);
  c(0, 1) = std::numeric_limits<double>::infinity();
  EXPECT_THROW(rot_solve(c, balanced(0.1)), InvalidArgument);
}

TransportPlan plan_of(const Mat& t) {
  TransportPlan p;
  p.coupling = t;
  return p;
}

TEST(Barycentric, Examples) {
  Mat src(1, 3);
  src << 1, 2, 3;
  EXPECT_EQ(barycentric_project(plan_of(Mat::Ones(1, 1)), src), src);
  Mat ab(2, 2);
  ab << 1, -2, 4, 0.5;
  const Mat out = barycentric_project(plan_of(0.5 * Mat::Identity(2, 2)), ab);
  EXPECT_LT((out - ab).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_THROW(barycentric_project(plan_of(Mat::Ones(3, 2)), ab), InvalidArgument);
}

TEST(Barycentric, MatchesDoubleLoop) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    Mat t(5, 4);
    for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = u(rng);
    t.col(2).setZero();  // column without mass
    const Mat src = random_mat(rng, 5, 3);
    const Mat out = barycentric_project(plan_of(t), src);
    ASSERT_EQ(out.rows(), 4);
    for (int j = 0; j < 4; ++j) {
      double mass = 0.0;
      for (int i = 0; i < 5; ++i) mass += t(i, j);
      for (int k = 0; k < 3; ++k) {
        double acc = 0.0;
        for (int i = 0; i < 5; ++i) acc += t(i, j) * src(i, k);
        EXPECT_NEAR(out(j, k), acc / std::max(mass, 1e-12), 1e-12);
      }
    }
  }
}

TEST(Barycentric, InvariantToPlanScale) {
  std::mt19937_64 rng(8);
  const Mat c = cost_matrix(random_mat(rng, 6, 3), random_mat(rng, 4, 3));
  const TransportPlan p = rot_solve(c, OtConfig{});
  const Mat src = random_mat(rng, 6, 5);
  const Mat base = barycentric_project(p, src);
  for (double s : {0.001, 3.0, 250.0}) {
    const Mat scaled = barycentric_project(plan_of(p.coupling * s), src);
    EXPECT_LT((scaled - base).cwiseAbs().maxCoeff(), 1e-12);
  }
}

// Hand-rolled biased MMD^2 for a single bandwidth.
double mmd_oracle(const Mat& x, const Mat& y, double sigma) {
  auto k = [&](const RowVec& a, const RowVec& b) {
    return std::exp(-(a - b).squaredNorm() / (2.0 * sigma * sigma));
  };
  auto mean_k = [&](const Mat& a, const Mat& b) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      for (Eigen::Index j = 0; j < b.rows(); ++j) s += k(a.row(i), b.row(j));
    }
    return s / static_cast<double>(a.rows() * b.rows());
  };
  return mean_k(x, x) + mean_k(y, y) - 2.0 * mean_k(x, y);
}

TEST(Mmd, ScalarHandValue) {
  Mat x(1, 1), y(1, 1);
  x << 0;
  y << 1;
  const double expected = 2.0 - 2.0 * std::exp(-0.5);
  EXPECT_NEAR(expected, 0.786939, 1e-6);
  EXPECT_NEAR(mmd(x, y, MmdConfig::fixed({1.0})), expected, 1e-9);
}

TEST(Mmd, IdenticalSetsGiveZero) {
  std::mt19937_64 rng(9);
  const Mat x = random_mat(rng, 7, 4);
  EXPECT_NEAR(mmd(x, x, MmdConfig{}), 0.0, 1e-12);
  EXPECT_NEAR(mmd(x, x, MmdConfig::fixed({0.3, 2.0})), 0.0, 1e-12);
}

TEST(Mmd, MatchesOracleSummedOverBandwidths) {
  std::mt19937_64 rng(10);
  for (int trial = 0; trial < 20; ++trial) {
    const Mat x = random_mat(rng, 5, 3), y = random_mat(rng, 8, 3);
    const std::vector<double> sig{0.5, 1.0, 2.0};
    const double expect = mmd_oracle(x, y, 0.5) + mmd_oracle(x, y, 1.0) + mmd_oracle(x, y, 2.0);
    EXPECT_NEAR(mmd(x, y, MmdConfig::fixed(sig)), expect, 1e-12);
  }
}

TEST(Mmd, MedianHeuristicOracle) {
  std::mt19937_64 rng(11);
  const Mat x = random_mat(rng, 4, 3), y = random_mat(rng, 5, 3);
  Mat pooled(9, 3);
  pooled << x, y;
  std::vector<double> dists;
  for (int i = 0; i < 9; ++i) {
    for (int j = i + 1; j < 9; ++j) dists.push_back((pooled.row(i) - pooled.row(j)).squaredNorm());
  }
  std::sort(dists.begin(), dists.end());
  const std::size_t n = dists.size();
  const double med = std::sqrt(n % 2 ? dists[n / 2] : 0.5 * (dists[n / 2 - 1] + dists[n / 2]));
  double expect = 0.0;
  for (double m : {0.5, 1.0, 2.0}) expect += mmd_oracle(x, y, m * med);
  EXPECT_NEAR(mmd(x, y, MmdConfig{}), expect, 1e-12);
}

TEST(Mmd, SymmetricAndPermutationInvariant) {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    const Mat x = random_mat(rng, 6, 3), y = random_mat(rng, 4, 3);
    for (const MmdConfig& cfg : {MmdConfig{}, MmdConfig::fixed({0.7})}) {
      const double v = mmd(x, y, cfg);
      EXPECT_EQ(v, mmd(y, x, cfg));
      EXPECT_GE(v, 0.0);
      std::vector<int> perm(6);
      std::iota(perm.begin(), perm.end(), 0);
      std::shuffle(perm.begin(), perm.end(), rng);
      Mat xp(6, 3);
      for (int i = 0; i < 6; ++i) xp.row(i) = x.row(perm[static_cast<std::size_t>(i)]);
      EXPECT_NEAR(mmd(xp, y, cfg), v, 1e-12);
    }
  }
}

TEST(Mmd, Errors) {
  EXPECT_THROW(mmd(Mat(0, 2), Mat::Ones(1, 2), MmdConfig{}), InvalidArgument);
  EXPECT_THROW(mmd(Mat::Ones(1, 3), Mat::Ones(1, 2), MmdConfig{}), InvalidArgument);
  EXPECT_THROW(MmdConfig::fixed({}).validate(), InvalidArgument);
  EXPECT_THROW(MmdConfig::fixed({-1.0}).validate(), InvalidArgument);
}

TEST(TotalMmd, ZeroWhenAllEqualText) {
  std::mt19937_64 rng(13);
  const Mat t = random_mat(rng, 5, 4);
  EXPECT_NEAR(total_mmd_loss(t, t, t, t, MmdConfig{}), 0.0, 1e-12);
}

TEST(TotalMmd, Additivity) {
  std::mt19937_64 rng(14);
  const Mat t = random_mat(rng, 5, 4), v = random_mat(rng, 5, 4);
  const MmdConfig cfg = MmdConfig::fixed({1.0, 2.0});
  EXPECT_NEAR(total_mmd_loss(t, v, t, t, cfg), mmd(v, t, cfg), 1e-12);
  for (int trial = 0; trial < 20; ++trial) {
    const Mat a = random_mat(rng, 5, 4), b = random_mat(rng, 5, 4), f = random_mat(rng, 5, 4);
    const Mat x = random_mat(rng, 5, 4);
    for (const MmdConfig& c : {cfg, MmdConfig{}}) {
      EXPECT_NEAR(total_mmd_loss(a, b, f, x, c), mmd(a, x, c) + mmd(b, x, c) + mmd(f, x, c),
                  1e-12);
    }
  }
}

}  // namespace
}  // namespace cpcl

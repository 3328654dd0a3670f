#include "cpcl/core.hpp"
#include "cpcl/gradcheck.hpp"

#include <gtest/gtest.h>

#include <algorithm>

namespace cpcl {
namespace {

TEST(GradCheck, RelativeErrorDefinition) {
  EXPECT_EQ(relative_error(1.0, 1.0), 0.0);
  EXPECT_DOUBLE_EQ(relative_error(2.0, 1.0), 0.5);
  EXPECT_DOUBLE_EQ(relative_error(0.0, 1e-9), 1e-9 / 1e-8);
}

TEST(GradCheck, CatchesAWrongGradient) {
  double x[2] = {0.3, -1.2};
  std::vector<GradTarget> targets{{"x", x, 2, {2.0 * 0.3, 2.0 * -1.2 + 0.01}}};
  GradCheckReport r;
  r.op = "square";
  check_targets([&] { return x[0] * x[0] + x[1] * x[1]; }, targets, 1e-5, r);
  EXPECT_GT(r.max_rel_error, 1e-3);
  EXPECT_EQ(r.worst, "x[1]");
  EXPECT_EQ(x[0], 0.3);  // restored after perturbation
  EXPECT_EQ(x[1], -1.2);
}

TEST(GradCheck, RegistryCoversEveryDifferentiableOp) {
  const auto ops = grad_check_ops();
  for (const char* op : {"lift_audio", "concat_project", "fsf_gate", "ssm_encode", "textcnn_score",
                         "sentiment_head", "fuse_and_classify", "focal_loss", "total_mmd_loss"}) {
    EXPECT_NE(std::find(ops.begin(), ops.end(), op), ops.end()) << op;
  }
}

class EveryOp : public ::testing::TestWithParam<std::string> {};

TEST_P(EveryOp, PassesAtTolerance) {
  const GradCheckReport r = grad_check(GetParam());
  EXPECT_EQ(r.instances, 5);
  EXPECT_GT(r.entries, 0u);
  EXPECT_LE(r.max_rel_error, kGradCheckTolerance) << r.worst;
  EXPECT_TRUE(r.passed);
}

INSTANTIATE_TEST_SUITE_P(Registered, EveryOp, ::testing::ValuesIn(grad_check_ops()),
                         [](const auto& info) { return info.param; });

TEST(GradCheck, UnknownOpThrows) {
  EXPECT_THROW(grad_check("not_an_op"), InvalidArgument);
}

}  // namespace
}  // namespace cpcl

#include <gtest/gtest.h>

#include "sbd/error.hpp"
#include "sbd/ops.hpp"
#include "sbd/tensor.hpp"

namespace sbd {
namespace {

TEST(Tensor, ShapeAndDataAgree) {
  Tensor t({2, 3, 4}, 1.5f);
  EXPECT_EQ(t.numel(), 24);
  EXPECT_EQ(t.data().size(), 24u);
  EXPECT_EQ(t.rank(), 3);
  EXPECT_FLOAT_EQ(t.at(23), 1.5f);
}

TEST(Tensor, RejectsInconsistentData) {
  EXPECT_THROW(Tensor::from_data({2, 2}, {1, 2, 3}), DimensionError);
  EXPECT_THROW(Tensor(Shape{0, 3}), DimensionError);
}

TEST(Tensor, CopiesAliasAndCloneDoesNot) {
  Tensor a({3}, 1.0f);
  Tensor b = a;
  Tensor c = a.clone();
  b.data()[0] = 7.0f;
  EXPECT_EQ(a.at(0), 7.0f);
  EXPECT_EQ(c.at(0), 1.0f);
}

TEST(Backward, SumGivesOnes) {
  Tensor x = Tensor::from_data({4}, {3, -1, 0.5, 2}, true);
  backward(ops::sum(x));
  for (float g : x.grad()) EXPECT_EQ(g, 1.0f);
}

TEST(Backward, SquareAtThreeGivesSix) {
  Tensor x = Tensor::from_data({1}, {3}, true);
  backward(ops::sum(ops::mul(x, x)));
  EXPECT_FLOAT_EQ(x.grad()[0], 6.0f);
}

TEST(Backward, AccumulatesAcrossCallsUntilZeroed) {
  Tensor x = Tensor::from_data({2}, {1, 2}, true);
  backward(ops::sum(x));
  backward(ops::sum(ops::scale(x, 2.0f)));
  EXPECT_FLOAT_EQ(x.grad()[0], 3.0f);
  x.zero_grad();
  backward(ops::sum(x));
  EXPECT_FLOAT_EQ(x.grad()[1], 1.0f);
}

TEST(Backward, SharedSubexpressionVisitedOnce) {
  // y = x * x feeds two consumers; dy/dx must be counted once per path.
  Tensor x = Tensor::from_data({1}, {2}, true);
  Tensor y = ops::mul(x, x);
  backward(ops::sum(ops::add(y, y)));
  EXPECT_FLOAT_EQ(x.grad()[0], 8.0f);
}

TEST(Backward, NonScalarLossIsUsageError) {
  Tensor x = Tensor::from_data({2}, {1, 2}, true);
  EXPECT_THROW(backward(ops::scale(x, 2.0f)), UsageError);
}

TEST(Backward, NoGradGuardStopsRecording) {
  Tensor x = Tensor::from_data({2}, {1, 2}, true);
  Tensor y;
  {
    NoGradGuard guard;
    EXPECT_FALSE(grad_enabled());
    y = ops::sum(x);
  }
  EXPECT_TRUE(grad_enabled());
  EXPECT_THROW(backward(y), UsageError);
}

TEST(Tensor, CheckFiniteFlagsNan) {
  std::vector<float> v{1.0f, std::numeric_limits<float>::quiet_NaN()};
  EXPECT_THROW(check_finite(v, "test"), NumericalError);
  std::vector<float> ok{1.0f, 2.0f};
  EXPECT_NO_THROW(check_finite(ok, "test"));
}

}  // namespace
}  // namespace sbd

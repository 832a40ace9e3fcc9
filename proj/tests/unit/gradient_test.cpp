#include <gtest/gtest.h>

#include "gradient_suite.hpp"

namespace sbd {
namespace {

class FiniteDifference : public ::testing::TestWithParam<std::size_t> {};

TEST_P(FiniteDifference, AgreesWithBackward) {
  const auto c = testing::gradient_cases()[GetParam()];
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    EXPECT_LT(c.run(seed), 1e-3) << c.name << " seed " << seed;
  }
}

INSTANTIATE_TEST_SUITE_P(Ops, FiniteDifference, ::testing::Range<std::size_t>(0, testing::gradient_cases().size()),
                         [](const auto& info) { return testing::gradient_cases()[info.param].name; });

}  // namespace
}  // namespace sbd

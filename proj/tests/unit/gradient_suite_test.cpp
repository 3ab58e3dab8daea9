#include <gtest/gtest.h>

#include "siatrans/gradcheck.hpp"

namespace siatrans {
namespace {

TEST(GradientSuite, EveryOperationWithinTolerance) {
  const auto cases = op_gradient_suite();
  EXPECT_GE(cases.size(), 30u);
  for (const auto& c : cases) {
    EXPECT_TRUE(c.passed()) << c.name << " rel err " << c.report.max_rel_err;
  }
}

TEST(GradientSuite, EndToEndObjective) {
  const auto c = end_to_end_gradcheck(ModelConfig::desk());
  EXPECT_EQ(c.report.probes, 5u);
  EXPECT_LT(c.report.max_rel_err, kEndToEndGradTolerance);
}

}  // namespace
}  // namespace siatrans

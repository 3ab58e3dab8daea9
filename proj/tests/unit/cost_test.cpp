#include <gtest/gtest.h>

#include <sstream>

#include "siatrans/cost.hpp"

namespace siatrans {
namespace {

TEST(CostPrimitives, SingleConvClosedForm) {
  EXPECT_EQ(conv_params(64, 64, 3), 36928u);
  EXPECT_EQ(conv_macs(64, 64, 3, 112, 112), 462422016u);
  EXPECT_EQ(linear_params(10, 4), 44u);
  EXPECT_EQ(linear_params(10, 4, false), 40u);
}

TEST(CostReport, AnalyticCountMatchesInstantiatedModel) {
  for (const auto& config : {ModelConfig::desk(), ModelConfig::full_scale()}) {
    const SiaTrans model(config);
    const auto report = count_cost(config, config.encoder.image_size);
    EXPECT_EQ(report.params, model.parameters().parameter_count());
  }
}

TEST(CostReport, TwoStreamAblationDoublesTheBackbone) {
  auto config = ModelConfig::desk();
  const auto shared = count_cost(config, config.encoder.image_size);
  config.encoder.siamese = false;
  config.sync();
  const auto separate = count_cost(config, config.encoder.image_size);
  EXPECT_EQ(separate.item("encoder").params, 2 * shared.item("encoder").params);
  EXPECT_EQ(separate.macs, shared.macs);
  EXPECT_EQ(separate.params, SiaTrans(config).parameters().parameter_count());
}

TEST(CostReport, BreakdownSumsToTotals) {
  const auto config = ModelConfig::full_scale();
  const auto r = count_cost(config, 224);
  std::uint64_t params = 0, macs = 0, attention = 0;
  for (const auto& item : r.breakdown) {
    params += item.params;
    macs += item.macs;
    attention += item.attention_macs;
  }
  EXPECT_EQ(params, r.params);
  EXPECT_EQ(macs, r.macs);
  EXPECT_EQ(attention, r.attention_macs);
  EXPECT_THROW(r.item("nope"), UsageError);
}

TEST(CostReport, FullScaleWithinPublishedBand) {
  const auto r = count_cost(ModelConfig::full_scale(), 224);
  EXPECT_NEAR(r.params_m(), 22.24, 0.1 * 22.24);
  EXPECT_NEAR(r.macs_g(), 10.91, 0.1 * 10.91);
  EXPECT_EQ(r.params, 21761520u);
}

TEST(CostReport, DeterministicAndPrintable) {
  const auto config = ModelConfig::desk();
  const auto a = count_cost(config, 64), b = count_cost(config, 64);
  EXPECT_EQ(a.params, b.params);
  EXPECT_EQ(a.macs, b.macs);
  std::ostringstream os;
  print_cost(os, a);
  EXPECT_NE(os.str().find("encoder"), std::string::npos);
  const auto inter = cmf_interactive_portion(a);
  EXPECT_EQ(inter.params, a.item("cmf_projection").params + a.item("cmf_interactive").params);
}

}  // namespace
}  // namespace siatrans

#include "mfrnet/losses.hpp"

#include <algorithm>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "test_util.hpp"

namespace mfrnet {
namespace {

using testing::gms_oracle;
using testing::random_tensor;
using testing::ssim_oracle;

TEST(Losses, IdenticalInputsGiveZero) {
  const FeatureMap x = random_tensor({3, 12, 12}, 1);
  const LossConfig cfg;
  const HybridLoss l = hybrid_loss(x, x, cfg);
  EXPECT_LT(l.contextual, 1e-7);
  EXPECT_LT(std::abs(l.ssim), 1e-7);
  EXPECT_LT(std::abs(l.gms), 1e-7);
}

TEST(Losses, ContextualDividesByPixelCountOnly) {
  FeatureMap x({2, 2, 2});
  FeatureMap y({2, 2, 2});
  y.at(0, 0, 0) = 1.0;
  y.at(1, 1, 1) = 2.0;
  EXPECT_DOUBLE_EQ(contextual_loss(x, y), (1.0 + 4.0) / 4.0);
}

TEST(Losses, TotalIsSumOfComponents) {
  const FeatureMap x = random_tensor({2, 12, 12}, 2);
  const FeatureMap y = random_tensor({2, 12, 12}, 3);
  const HybridLoss l = hybrid_loss(x, y, LossConfig{});
  EXPECT_DOUBLE_EQ(l.total, l.contextual + l.ssim + l.gms);
}

TEST(Losses, SsimOfStatsAtKnownValues) {
  // Equal means and variances, zero covariance: SSIM = a2 / (2 var + a2).
  EXPECT_NEAR(ssim_from_stats(0.5, 0.5, 0.1, 0.1, 0.0, 1e-4, 1e-4), 1e-4 / (0.2 + 1e-4), 1e-15);
  EXPECT_NEAR(ssim_from_stats(0.3, 0.3, 0.2, 0.2, 0.2, 1e-4, 1e-4), 1.0, 1e-15);
}

TEST(Losses, SsimMapMatchesScalarOracle) {
  const FeatureMap x = random_tensor({2, 16, 16}, 4);
  const FeatureMap y = random_tensor({2, 16, 16}, 5);
  for (int window : {3, 5, 11}) {
    LossConfig cfg;
    cfg.ssim_window = window;
    const Tensor map = ssim_map(x, y, cfg).values;
    for (int py = 0; py < 16; ++py) {
      for (int px = 0; px < 16; ++px) {
        const double want = 0.5 * (ssim_oracle(x, y, 0, py, px, window, 1e-4, 1e-4) +
                                   ssim_oracle(x, y, 1, py, px, window, 1e-4, 1e-4));
        EXPECT_NEAR(map[static_cast<std::size_t>(py * 16 + px)], want, 1e-6);
      }
    }
  }
}

TEST(Losses, GmsMapMatchesScalarOracle) {
  const FeatureMap x = random_tensor({2, 16, 16}, 6);
  const FeatureMap y = random_tensor({2, 16, 16}, 7);
  const Tensor map = gms_map(x, y, LossConfig{}).values;
  for (int py = 0; py < 16; ++py) {
    for (int px = 0; px < 16; ++px) {
      const double want = 0.5 * (gms_oracle(x, y, 0, py, px, 1e-4) + gms_oracle(x, y, 1, py, px, 1e-4));
      EXPECT_NEAR(map[static_cast<std::size_t>(py * 16 + px)], want, 1e-6);
    }
  }
}

TEST(Losses, GmsOfConstantMapsIsOne) {
  const Tensor map = gms_map(FeatureMap({1, 6, 6}), FeatureMap({1, 6, 6}), LossConfig{}).values;
  for (double v : map.values()) EXPECT_NEAR(v, 1.0, 1e-12);
}

TEST(Losses, SimilarityBoundedByOne) {
  const FeatureMap x = random_tensor({3, 16, 16}, 8);
  const FeatureMap y = random_tensor({3, 16, 16}, 9);
  LossConfig cfg;
  cfg.ssim_window = 5;
  EXPECT_LE(ssim_map(x, y, cfg).values.max(), 1.0 + 1e-12);
  EXPECT_LE(gms_map(x, y, cfg).values.max(), 1.0 + 1e-12);
  EXPECT_GE(gms_map(x, y, cfg).values.min(), 0.0);
}

TEST(Losses, ShapeMismatchIsAnArgumentError) {
  EXPECT_THROW(hybrid_loss(FeatureMap({2, 8, 8}), FeatureMap({2, 8, 9}), LossConfig{}), ArgumentError);
  EXPECT_THROW(ssim_map(FeatureMap({1, 4, 4}), FeatureMap({1, 4, 4}), LossConfig{}), ArgumentError);
}

TEST(Losses, ConfigValidation) {
  LossConfig cfg;
  cfg.ssim_window = 4;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = LossConfig{};
  cfg.gms_b = 0.0;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

class HybridGradient : public ::testing::TestWithParam<int> {};

TEST_P(HybridGradient, MatchesCentralDifferences) {
  LossConfig cfg;
  cfg.ssim_window = GetParam();
  const FeatureMap target = random_tensor({2, 6, 6}, 10);
  Tensor recon = random_tensor({2, 6, 6}, 11);
  const ag::Var r = ag::parameter(recon);
  const HybridLossVar l = hybrid_loss(target, r, cfg);
  ag::backward(l.total);
  auto f = [&] { return hybrid_loss(target, recon, cfg).total; };
  EXPECT_LE(testing::relative_error(r->grad, testing::numeric_gradient(recon, f, 1e-6)), 1e-3);
  EXPECT_NEAR(l.total->value[0], f(), 1e-12);
}

INSTANTIATE_TEST_SUITE_P(Windows, HybridGradient, ::testing::Values(3, 5));

TEST(Losses, EachComponentGradientMatches) {
  LossConfig cfg;
  cfg.ssim_window = 3;
  const FeatureMap target = random_tensor({2, 6, 6}, 12);
  Tensor recon = random_tensor({2, 6, 6}, 13);
  using VarFn = std::function<ag::Var(const ag::Var&)>;
  using ScalarFn = std::function<double()>;
  const std::vector<std::pair<VarFn, ScalarFn>> parts{
      {[&](const ag::Var& v) { return contextual_loss(target, v); }, [&] { return contextual_loss(target, recon); }},
      {[&](const ag::Var& v) { return ssim_loss(target, v, cfg); }, [&] { return ssim_loss(target, recon, cfg); }},
      {[&](const ag::Var& v) { return gms_loss(target, v, cfg); }, [&] { return gms_loss(target, recon, cfg); }},
  };
  for (const auto& [var_fn, scalar_fn] : parts) {
    const ag::Var r = ag::parameter(recon);
    ag::backward(var_fn(r));
    EXPECT_LE(testing::relative_error(r->grad, testing::numeric_gradient(recon, scalar_fn, 1e-6)), 1e-3);
  }
}

}  // namespace
}  // namespace mfrnet

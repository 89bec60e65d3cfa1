#include "mfrnet/inference.hpp"

#include <gtest/gtest.h>

#include "mfrnet/crossed_mask.hpp"
#include "test_util.hpp"

namespace mfrnet {
namespace {

RestorationNetConfig small_net() {
  RestorationNetConfig c;
  c.in_channels = 6;
  c.base_channels = 8;
  c.pooling_ratios = {1, 2};
  return c;
}

InferenceConfig no_smoothing(std::vector<int> ks) {
  InferenceConfig c;
  c.k_set = std::move(ks);
  c.smoothing = false;
  c.seed = 3;
  return c;
}

LossConfig small_loss() {
  LossConfig c;
  c.ssim_window = 3;
  return c;
}

TEST(ScoreForK, ZeroWhenRestorationIsExact) {
  const FeatureMap f = testing::random_tensor({4, 16, 16}, 1);
  const Tensor s = score_for_k(f, f, small_loss());
  EXPECT_NEAR(s.max(), 0.0, 1e-12);
  EXPECT_GE(s.min(), 0.0);
  EXPECT_THROW(score_for_k(f, FeatureMap({4, 16, 8}), small_loss()), ArgumentError);
}

TEST(ScoreForK, MaximumLiesInsideTheCorruptedCell) {
  const FeatureMap f = testing::random_tensor({4, 16, 16}, 2);
  FeatureMap r = f;
  for (int c = 0; c < 4; ++c) {
    for (int y = 8; y < 12; ++y) {
      for (int x = 4; x < 8; ++x) r.at(c, y, x) += 3.0;
    }
  }
  const Tensor s = score_for_k(f, r, small_loss());
  std::size_t arg = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] > s[arg]) arg = i;
  }
  const int y = static_cast<int>(arg) / 16, x = static_cast<int>(arg) % 16;
  EXPECT_GE(y, 8 - 1);
  EXPECT_LE(y, 11 + 1);
  EXPECT_GE(x, 4 - 1);
  EXPECT_LE(x, 7 + 1);
}

TEST(ScoreForK, LargerDegradationRaisesAffectedScores) {
  const FeatureMap f = testing::random_tensor({2, 12, 12}, 3);
  FeatureMap mild = f, strong = f;
  for (int c = 0; c < 2; ++c) {
    mild.at(c, 5, 5) += 0.5;
    strong.at(c, 5, 5) += 1.5;
  }
  const Tensor a = score_for_k(f, mild, small_loss());
  const Tensor b = score_for_k(f, strong, small_loss());
  EXPECT_GT(b[5 * 12 + 5], a[5 * 12 + 5]);
}

TEST(Detect, SingleMaskingSizeEqualsOneScorePass) {
  const RestorationNet net(small_net(), 1);
  const FeatureMap f = testing::random_tensor({6, 16, 16}, 4);
  const InferenceConfig cfg = no_smoothing({4});
  const AnomalyMap m = detect_features(f, net, cfg, small_loss(), {16, 16});
  const MaskSet masks = generate_masks(16, 16, 4, 3, inference_mask_seed(cfg.seed, 4));
  std::vector<FeatureMap> partials;
  for (const auto& mk : masks.masks) partials.push_back(net.restore(apply_mask(f, mk)));
  EXPECT_EQ(m.raw_scores, score_for_k(f, compose_restoration(partials, masks), small_loss()));
  EXPECT_EQ(m.restoration_passes, 3);
  EXPECT_TRUE(m.fully_covered);
}

TEST(Detect, FusedMapIsMeanOfPerKMapsAndPassCountIsKTimesN) {
  const RestorationNet net(small_net(), 2);
  const FeatureMap f = testing::random_tensor({6, 32, 32}, 5);
  const AnomalyMap m = detect_features(f, net, no_smoothing({2, 4, 8, 16}), small_loss(), {64, 64});
  EXPECT_EQ(m.restoration_passes, 12);
  EXPECT_EQ(m.k_values_used, (std::vector<int>{2, 4, 8, 16}));
  ASSERT_EQ(m.per_k_scores.size(), 4u);
  for (std::size_t p = 0; p < m.raw_scores.size(); ++p) {
    double s = 0.0;
    for (const auto& k : m.per_k_scores) s += k[p];
    EXPECT_NEAR(m.raw_scores[p], s / 4.0, 1e-12);
  }
  EXPECT_EQ(m.scores.shape(), (Shape{64, 64}));
  EXPECT_DOUBLE_EQ(m.image_score, m.scores.max());
  EXPECT_GE(m.scores.min(), 0.0);
  EXPECT_TRUE(m.scores.all_finite());
  EXPECT_TRUE(m.fully_covered);
}

TEST(Detect, DeterministicForFixedSeed) {
  const RestorationNet net(small_net(), 3);
  const FeatureMap f = testing::random_tensor({6, 16, 16}, 6);
  InferenceConfig cfg = no_smoothing({2, 4});
  cfg.smoothing = true;
  const AnomalyMap a = detect_features(f, net, cfg, small_loss(), {32, 32});
  const AnomalyMap b = detect_features(f, net, cfg, small_loss(), {32, 32});
  EXPECT_EQ(a.scores, b.scores);
  EXPECT_EQ(a.image_score, b.image_score);
}

TEST(Detect, SmoothingKeepsScoresNonNegative) {
  const RestorationNet net(small_net(), 4);
  const FeatureMap f = testing::random_tensor({6, 16, 16}, 7);
  InferenceConfig cfg = no_smoothing({2});
  cfg.smoothing = true;
  const AnomalyMap m = detect_features(f, net, cfg, small_loss(), {64, 64});
  EXPECT_GE(m.scores.min(), 0.0);
  EXPECT_LE(m.scores.max(), m.raw_scores.max() + 1e-12);
}

TEST(Detect, InvalidMaskingSizeIsAConfigError) {
  const RestorationNet net(small_net(), 1);
  const FeatureMap f({6, 16, 16});
  EXPECT_THROW(detect_features(f, net, no_smoothing({3}), small_loss(), {16, 16}), ConfigError);
  EXPECT_THROW(detect_features(f, net, no_smoothing({}), small_loss(), {16, 16}), ConfigError);
  InferenceConfig too_many = no_smoothing({16});
  EXPECT_THROW(detect_features(f, net, too_many, small_loss(), {16, 16}), ConfigError);
}

}  // namespace
}  // namespace mfrnet

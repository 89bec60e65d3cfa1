#include "mfrnet/feature_aggregator.hpp"

#include <filesystem>

#include <gtest/gtest.h>

#include "test_util.hpp"

namespace mfrnet {
namespace {

ImageTensor random_image(int size, std::uint64_t seed) {
  return {testing::random_tensor({3, size, size}, seed, 0.0, 1.0), "mem"};
}

TEST(Backbone, Vgg16TapsPrecedePooling) {
  BackboneConfig cfg;
  cfg.layer_indices = {1, 2, 3};
  const Backbone bb(cfg);
  const auto taps = extract_features(random_image(32, 1), bb);
  ASSERT_EQ(taps.size(), 3u);
  EXPECT_EQ(taps[0].shape(), (Shape{64, 32, 32}));
  EXPECT_EQ(taps[1].shape(), (Shape{128, 16, 16}));
  EXPECT_EQ(taps[2].shape(), (Shape{256, 8, 8}));
  EXPECT_EQ(bb.tap_channels(), (std::vector<int>{64, 128, 256}));
  EXPECT_GE(taps[0].min(), 0.0);
}

TEST(Backbone, ToyLayout) {
  BackboneConfig cfg;
  cfg.architecture = "toy";
  const Backbone bb(cfg);
  const auto taps = bb.extract(random_image(64, 2));
  EXPECT_EQ(taps[0].shape(), (Shape{8, 64, 64}));
  EXPECT_EQ(taps[1].shape(), (Shape{16, 32, 32}));
  EXPECT_EQ(taps[2].shape(), (Shape{32, 16, 16}));
}

TEST(Backbone, ExtractionLeavesWeightsUntouchedAndIsDeterministic) {
  BackboneConfig cfg;
  cfg.architecture = "toy";
  cfg.seed = 4;
  const Backbone bb(cfg);
  const auto before = bb.checksum();
  const auto a = bb.extract(random_image(32, 3));
  const auto b = bb.extract(random_image(32, 3));
  EXPECT_EQ(bb.checksum(), before);
  EXPECT_EQ(a[2], b[2]);
  EXPECT_EQ(Backbone(cfg).checksum(), before);
}

TEST(Backbone, ConfigErrors) {
  BackboneConfig cfg;
  cfg.layer_indices = {1, 6};
  EXPECT_THROW(Backbone{cfg}, ConfigError);
  cfg = BackboneConfig{};
  cfg.architecture = "resnet";
  EXPECT_THROW(Backbone{cfg}, ConfigError);
  cfg = BackboneConfig{};
  cfg.layer_indices = {2, 1};
  EXPECT_THROW(Backbone{cfg}, ConfigError);
  cfg = BackboneConfig{};
  cfg.frozen = false;
  EXPECT_THROW(Backbone{cfg}, ConfigError);
}

TEST(Backbone, RejectsNonRgbInput) {
  const Backbone bb(BackboneConfig{});
  EXPECT_THROW(bb.extract({Tensor({1, 8, 8}), ""}), ArgumentError);
}

TEST(Aggregate, ResizesAndConcatenatesInOrder) {
  const FeatureMap a = testing::random_tensor({2, 8, 8}, 1);
  const FeatureMap b = testing::random_tensor({3, 4, 4}, 2);
  const FeatureMap out = aggregate({a, b}, {8, 8});
  ASSERT_EQ(out.shape(), (Shape{5, 8, 8}));
  for (int c = 0; c < 2; ++c) {
    for (int y = 0; y < 8; ++y) {
      for (int x = 0; x < 8; ++x) EXPECT_EQ(out.at(c, y, x), a.at(c, y, x));
    }
  }
  EXPECT_THROW(aggregate({}, {8, 8}), ArgumentError);
}

TEST(Aggregate, DefaultVggTapsGive448ChannelsAt64) {
  BackboneConfig cfg;
  const Backbone bb(cfg);
  const auto taps = bb.extract(random_image(64, 5));
  EXPECT_EQ(aggregate(taps, {16, 16}).shape(), (Shape{448, 16, 16}));
}

TEST(ChannelStats, StandardisesTrainingFeatures) {
  std::vector<FeatureMap> maps{testing::random_tensor({3, 4, 4}, 1, 2.0, 5.0),
                               testing::random_tensor({3, 4, 4}, 2, 2.0, 5.0)};
  const ChannelStats s = ChannelStats::compute(maps);
  double m = 0.0;
  for (const auto& f : maps) m += s.normalize(f).sum();
  EXPECT_NEAR(m, 0.0, 1e-9);
  EXPECT_THROW(s.normalize(FeatureMap({2, 4, 4})), ArgumentError);
  EXPECT_EQ(ChannelStats::identity(3).normalize(maps[0]), maps[0]);
}

TEST(ChannelStats, DeadChannelsDoNotExplode) {
  FeatureMap live = testing::random_tensor({2, 4, 4}, 3);
  for (double& v : live.plane(1)) v = 0.0;
  const ChannelStats s = ChannelStats::compute({live});
  FeatureMap probe({2, 4, 4});
  probe.at(1, 0, 0) = 1.0;
  EXPECT_LT(s.normalize(probe).max(), 100.0);
}

TEST(WeightsFile, RoundTripAndLoadIntoBackbone) {
  const auto dir = std::filesystem::temp_directory_path() / "mfrnet_weights_test";
  std::filesystem::create_directories(dir);
  const std::string path = (dir / "toy.wts").string();
  std::vector<NamedTensor> tensors;
  const auto names = backbone_weight_names("toy");
  ASSERT_EQ(names, (std::vector<std::string>{"features.0.weight", "features.0.bias", "features.3.weight",
                                             "features.3.bias", "features.6.weight", "features.6.bias"}));
  const std::vector<Shape> shapes{{8, 3, 3, 3}, {8}, {16, 8, 3, 3}, {16}, {32, 16, 3, 3}, {32}};
  for (std::size_t i = 0; i < names.size(); ++i) {
    Tensor t = testing::random_tensor(shapes[i], i);
    for (double& v : t.values()) v = static_cast<float>(v);
    tensors.push_back({names[i], t});
  }
  write_weights_file(path, tensors);
  const auto back = read_weights_file(path);
  ASSERT_EQ(back.size(), tensors.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    EXPECT_EQ(back[i].name, tensors[i].name);
    EXPECT_EQ(back[i].value, tensors[i].value);
  }
  BackboneConfig cfg;
  cfg.architecture = "toy";
  cfg.weights_source = path;
  EXPECT_NO_THROW(Backbone{cfg});

  tensors.pop_back();
  write_weights_file(path, tensors);
  EXPECT_THROW(Backbone{cfg}, LoadError);
  cfg.weights_source = (dir / "missing.wts").string();
  EXPECT_THROW(Backbone{cfg}, LoadError);
  std::filesystem::remove_all(dir);
}

}  // namespace
}  // namespace mfrnet

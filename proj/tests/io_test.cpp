#include <cstdlib>
#include <filesystem>

#include <gtest/gtest.h>
#include <opencv2/imgcodecs.hpp>

#include "json.hpp"
#include "mfrnet/checkpoint.hpp"
#include "mfrnet/config.hpp"
#include "mfrnet/dataset.hpp"
#include "mfrnet/file_util.hpp"
#include "mfrnet/image_io.hpp"
#include "test_util.hpp"

namespace mfrnet {
namespace {

namespace fs = std::filesystem;

class TempDir : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("mfrnet_io_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  std::string path(const std::string& name) const { return (dir_ / name).string(); }
  fs::path dir_;
};

// ---- config ----

TEST(RunConfig, RoundTripsThroughJson) {
  for (RunConfig c : {default_run_config(), toy_run_config()}) {
    c.data.root = "some/where";
    c.inference.smoothing = false;
    c.train.grad_clip_norm = 0.0;
    EXPECT_EQ(run_config_from_json(run_config_to_json(c)), c);
  }
}

TEST(RunConfig, DefaultsMatchTheReferenceSetup) {
  const RunConfig c = default_run_config();
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(c.image_size, 256);
  EXPECT_EQ(c.feature_size, 64);
  EXPECT_EQ(c.net.in_channels, 448);
  EXPECT_EQ(c.net.base_channels, 64);
  EXPECT_EQ(c.net.pooling_ratios, (std::vector<int>{2, 3, 4, 5}));
  EXPECT_EQ(c.train.k_set, (std::vector<int>{2, 4, 8, 16}));
  EXPECT_EQ(c.train.subset_count, 3);
  EXPECT_DOUBLE_EQ(c.train.learning_rate, 1e-4);
  EXPECT_DOUBLE_EQ(c.train.weight_decay, 1e-3);
  EXPECT_EQ(c.train.batch_size, 6);
  EXPECT_EQ(c.train.epochs, 400);
  EXPECT_EQ(c.inference.k_set, c.train.k_set);
  EXPECT_DOUBLE_EQ(c.inference.smoothing_sigma, 4.0);
}

TEST(RunConfig, ShippedConfigsParseAndMatchBuiltins) {
  RunConfig toy = load_run_config(std::string(MFRNET_SOURCE_DIR) + "/configs/toy.json");
  toy.data = toy_run_config().data;
  EXPECT_EQ(toy, toy_run_config());
  RunConfig def = load_run_config(std::string(MFRNET_SOURCE_DIR) + "/configs/default.json");
  def.data = default_run_config().data;
  def.output_dir = default_run_config().output_dir;
  EXPECT_EQ(def, default_run_config());
}

TEST(RunConfig, RejectsUnknownKeysAndBadJson) {
  EXPECT_THROW(run_config_from_json(R"({"image_sise": 64})"), ConfigError);
  EXPECT_THROW(run_config_from_json(R"({"train": {"lr": 1}})"), ConfigError);
  EXPECT_THROW(run_config_from_json(R"({"train": {"epochs": "many"}})"), ConfigError);
  EXPECT_THROW(run_config_from_json("{"), ConfigError);
  EXPECT_THROW(load_run_config("/nonexistent/config.json"), ConfigError);
  EXPECT_NO_THROW(run_config_from_json(R"({"$schema": "run_config.schema.json"})"));
}

TEST(RunConfig, InChannelsFollowTheTaps) {
  const RunConfig c = run_config_from_json(R"({"backbone": {"layer_indices": [2, 3]}})");
  EXPECT_EQ(c.net.in_channels, 128 + 256);
  EXPECT_NO_THROW(c.validate());
}

TEST(RunConfig, ValidationCatchesInconsistencies) {
  auto broken = [](auto edit) {
    RunConfig c = toy_run_config();
    edit(c);
    return c;
  };
  EXPECT_THROW(broken([](RunConfig& c) { c.net.in_channels = 10; }).validate(), ConfigError);
  EXPECT_THROW(broken([](RunConfig& c) { c.feature_size = 18; }).validate(), ConfigError);
  EXPECT_THROW(broken([](RunConfig& c) { c.train.k_set = {2, 3}; }).validate(), ConfigError);
  EXPECT_THROW(broken([](RunConfig& c) { c.inference.k_set = {32}; }).validate(), ConfigError);
  EXPECT_THROW(broken([](RunConfig& c) { c.net.pooling_ratios = {5}; }).validate(), ConfigError);
  EXPECT_THROW(broken([](RunConfig& c) { c.loss.ssim_window = 4; }).validate(), ConfigError);
  EXPECT_THROW(broken([](RunConfig& c) { c.num_thresholds = 0; }).validate(), ConfigError);
  EXPECT_THROW(broken([](RunConfig& c) { c.backbone.layer_indices = {4}; }).validate(), ConfigError);
}

TEST(RunConfig, EnvironmentOverrides) {
  RunConfig c = toy_run_config();
  ::setenv("MFRNET_DEVICE", "cpu:1", 1);
  ::setenv("MFRNET_CACHE_DIR", "/tmp/feat", 1);
  apply_env_overrides(c);
  EXPECT_EQ(c.train.device, "cpu:1");
  EXPECT_EQ(c.cache_dir, "/tmp/feat");
  ::unsetenv("MFRNET_DEVICE");
  ::unsetenv("MFRNET_CACHE_DIR");
  RunConfig d = toy_run_config();
  apply_env_overrides(d);
  EXPECT_EQ(d, toy_run_config());
}

// ---- dataset ----

TEST_F(TempDir, SyntheticDatasetIsByteIdenticalForASeed) {
  const DatasetIndex a = make_synthetic_dataset(path("a"), 20, 30, 7);
  const DatasetIndex b = make_synthetic_dataset(path("b"), 20, 30, 7);
  ASSERT_EQ(a.items.size(), b.items.size());
  for (std::size_t i = 0; i < a.items.size(); ++i) {
    const fs::path ra = fs::path(a.items[i].image_path).lexically_relative(path("a"));
    EXPECT_EQ(ra, fs::path(b.items[i].image_path).lexically_relative(path("b")));
    EXPECT_EQ(read_file(a.items[i].image_path), read_file(b.items[i].image_path));
    if (a.items[i].ground_truth) EXPECT_EQ(read_file(*a.items[i].ground_truth), read_file(*b.items[i].ground_truth));
  }
  const DatasetIndex c = make_synthetic_dataset(path("c"), 20, 30, 8);
  EXPECT_NE(read_file(a.items[0].image_path), read_file(c.items[0].image_path));
}

TEST_F(TempDir, SyntheticDefectsHaveBoundedMaskArea) {
  const DatasetIndex idx = make_synthetic_dataset(path("d"), 20, 30, 7);
  EXPECT_EQ(idx.count(Split::kTrain), 20u);
  EXPECT_EQ(idx.count(Split::kTest), 40u);
  int defective = 0;
  for (const auto& it : idx.split(Split::kTest)) {
    if (it.defect_type == "good") {
      EXPECT_FALSE(it.ground_truth);
      continue;
    }
    ++defective;
    ASSERT_TRUE(it.ground_truth);
    const Tensor m = load_mask(*it.ground_truth, 64);
    const double frac = m.sum() / static_cast<double>(m.size());
    EXPECT_GE(m.sum(), 1.0);
    EXPECT_GE(frac, 0.005) << it.image_path;
    EXPECT_LE(frac, 0.05) << it.image_path;
  }
  EXPECT_EQ(defective, 30);
}

TEST_F(TempDir, IndexIsSortedDeterministicAndValidated) {
  make_synthetic_dataset(path("d"), 3, 4, 1);
  const DatasetIndex a = index_dataset(path("d"));
  const DatasetIndex b = index_dataset(path("d"));
  ASSERT_EQ(a.items.size(), b.items.size());
  for (std::size_t i = 0; i < a.items.size(); ++i) EXPECT_EQ(a.items[i].image_path, b.items[i].image_path);
  EXPECT_EQ(a.category, "d");
  const auto test = a.split(Split::kTest);
  for (std::size_t i = 1; i < test.size(); ++i) EXPECT_LT(test[i - 1].image_path, test[i].image_path);
  EXPECT_EQ(test.front().defect_type, "blob");
  EXPECT_EQ(test.back().defect_type, "scratch");
  EXPECT_NO_THROW(check_unsupervised(a));
}

TEST_F(TempDir, TrainOnlyTreeGivesEmptyTestSplit) {
  make_synthetic_dataset(path("d"), 2, 1, 1);
  fs::remove_all(dir_ / "d" / "test");
  fs::remove_all(dir_ / "d" / "ground_truth");
  const DatasetIndex idx = index_dataset(path("d"));
  EXPECT_EQ(idx.count(Split::kTrain), 2u);
  EXPECT_EQ(idx.count(Split::kTest), 0u);
}

TEST_F(TempDir, IndexErrorsNameTheProblem) {
  make_synthetic_dataset(path("d"), 2, 4, 1);
  fs::remove(dir_ / "d" / "ground_truth" / "scratch" / "001_mask.png");
  try {
    index_dataset(path("d"));
    FAIL() << "expected IndexError";
  } catch (const IndexError& e) {
    EXPECT_NE(std::string(e.what()).find("001.png"), std::string::npos) << e.what();
  }
  fs::remove_all(dir_ / "d" / "ground_truth" / "scratch");
  try {
    index_dataset(path("d"));
    FAIL() << "expected IndexError";
  } catch (const IndexError& e) {
    EXPECT_NE(std::string(e.what()).find("scratch"), std::string::npos) << e.what();
  }
  fs::remove_all(dir_ / "d" / "train");
  fs::create_directories(dir_ / "d" / "ground_truth" / "scratch");
  EXPECT_THROW(index_dataset(path("d")), IndexError);
  EXPECT_THROW(index_dataset(path("missing")), IndexError);
}

TEST_F(TempDir, MtStyleMovesGoodTestImagesIntoTraining) {
  make_synthetic_dataset(path("d"), 2, 6, 1);
  const DatasetIndex idx = index_dataset(path("d"), {true, 0});
  EXPECT_EQ(idx.count(Split::kTrain), 4u);
  for (const auto& it : idx.split(Split::kTest)) EXPECT_NE(it.defect_type, "good");
  EXPECT_EQ(index_dataset(path("d"), {false, 1}).count(Split::kTrain), 1u);
}

TEST_F(TempDir, UnsupervisedContractRejectsReachableMasks) {
  make_synthetic_dataset(path("d"), 2, 1, 1);
  fs::create_directories(dir_ / "d" / "ground_truth" / "good");
  fs::copy_file(dir_ / "d" / "ground_truth" / "blob" / "000_mask.png",
                dir_ / "d" / "ground_truth" / "good" / "000_mask.png");
  const DatasetIndex idx = index_dataset(path("d"));
  EXPECT_THROW(check_unsupervised(idx), IndexError);
}

// ---- images ----

TEST_F(TempDir, GrayscaleImagesAreTriplicated) {
  cv::Mat gray(8, 8, CV_8UC1, cv::Scalar(51));
  ASSERT_TRUE(cv::imwrite(path("g.png"), gray));
  const ImageTensor img = load_image(path("g.png"), 4);
  EXPECT_EQ(img.pixels.shape(), (Shape{3, 4, 4}));
  for (double v : img.pixels.values()) EXPECT_DOUBLE_EQ(v, 0.2);
  EXPECT_THROW(load_image(path("nope.png"), 4), LoadError);
}

TEST_F(TempDir, MasksStayBinaryAfterResize) {
  Tensor m({8, 8});
  for (int i = 0; i < 32; ++i) m[static_cast<std::size_t>(i)] = 1.0;
  save_mask_png(path("m.png"), m);
  const Tensor back = load_mask(path("m.png"), 5);
  for (double v : back.values()) EXPECT_TRUE(v == 0.0 || v == 1.0);
  EXPECT_EQ(load_mask(path("m.png"), 8), m);
}

TEST_F(TempDir, HeatmapSidecarRecoversScores) {
  const Tensor map = testing::random_tensor({16, 16}, 3, 0.5, 4.0);
  save_heatmap(path("h/x.png"), map);
  const cv::Mat png = cv::imread(path("h/x.png"), cv::IMREAD_UNCHANGED);
  ASSERT_EQ(png.type(), CV_16UC1);
  const auto side = nlohmann::json::parse(read_file(path("h/x.png.json")));
  const double offset = side["offset"], scale = side["scale"];
  for (int y = 0; y < 16; ++y) {
    for (int x = 0; x < 16; ++x) {
      EXPECT_NEAR(offset + scale * png.at<std::uint16_t>(y, x), map[static_cast<std::size_t>(y * 16 + x)],
                  scale);
    }
  }
}

// ---- checkpoint ----

TEST_F(TempDir, CheckpointRoundTripAndCorruption) {
  RunConfig c = toy_run_config();
  const RestorationNet net(c.net, 5);
  ChannelStats stats = ChannelStats::identity(c.net.in_channels);
  stats.mean[3] = 0.25;
  save_checkpoint(path("m.ckpt"), c, stats, net, 17);
  const Checkpoint ck = load_checkpoint(path("m.ckpt"));
  EXPECT_EQ(ck.config, c);
  EXPECT_EQ(ck.stats, stats);
  EXPECT_EQ(ck.step, 17);
  const RestorationNet back = restore_network(ck);
  EXPECT_EQ(back.checksum(), net.checksum());
  const FeatureMap x = testing::random_tensor({56, 16, 16}, 9);
  EXPECT_EQ(back.restore(x), net.restore(x));

  const std::string bytes = read_file(path("m.ckpt"));
  atomic_write_file(path("trunc.ckpt"), bytes.substr(0, bytes.size() - 8));
  EXPECT_THROW(load_checkpoint(path("trunc.ckpt")), LoadError);
  atomic_write_file(path("magic.ckpt"), "XX" + bytes.substr(2));
  EXPECT_THROW(load_checkpoint(path("magic.ckpt")), LoadError);
  atomic_write_file(path("tail.ckpt"), bytes + "x");
  EXPECT_THROW(load_checkpoint(path("tail.ckpt")), LoadError);
  EXPECT_THROW(load_checkpoint(path("missing.ckpt")), LoadError);

  Checkpoint wrong = ck;
  wrong.parameters.pop_back();
  EXPECT_THROW(restore_network(wrong), LoadError);
}

}  // namespace
}  // namespace mfrnet

#include <sys/wait.h>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "json.hpp"
#include "mfrnet/checkpoint.hpp"
#include "mfrnet/config.hpp"
#include "mfrnet/file_util.hpp"

namespace mfrnet {
namespace {

namespace fs = std::filesystem;

const fs::path kFixture(MFRNET_TOY_FIXTURE);

int run(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string(MFRNET_CLI) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::vector<std::vector<std::string>> rows;
  std::ifstream in(p);
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(cell);
    rows.push_back(row);
  }
  return rows;
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("mfrnet_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path log() const { return dir_ / "log.txt"; }
  std::string checkpoint() const { return (kFixture / "run" / "model.ckpt").string(); }
  std::string synth() const { return (kFixture / "synth").string(); }

  fs::path dir_;
};

TEST_F(Cli, UsageErrorsExitOne) {
  EXPECT_EQ(run("", log()), 1);
  EXPECT_EQ(run("train --config " + (fs::path(MFRNET_SOURCE_DIR) / "configs/toy.json").string() + " --bogus", log()), 1);
  EXPECT_EQ(run("frobnicate", log()), 1);
  EXPECT_EQ(run("train --config " + (dir_ / "missing.json").string(), log()), 1);
  EXPECT_EQ(run("sweep --param depth --values 1 --out " + dir_.string(), log()), 1);
  EXPECT_EQ(run("synth --out " + dir_.string() + " --normals 0", log()), 1);
  EXPECT_EQ(run("--help", log()), 0);
}

TEST_F(Cli, ValidationErrorsExitOne) {
  RunConfig c = load_run_config((fs::path(MFRNET_SOURCE_DIR) / "configs/toy.json").string());
  c.train.k_set = {3};
  save_run_config((dir_ / "bad.json").string(), c);
  EXPECT_EQ(run("train --config " + (dir_ / "bad.json").string() + " --data " + synth(), log()), 1);
  EXPECT_NE(read_file(log().string()).find("k"), std::string::npos);

  atomic_write_file((dir_ / "unknown.json").string(), "{\"trian\": {}}");
  EXPECT_EQ(run("train --config " + (dir_ / "unknown.json").string(), log()), 1);
  EXPECT_NE(read_file(log().string()).find("trian"), std::string::npos);

  EXPECT_EQ(run("train --config " + (fs::path(MFRNET_SOURCE_DIR) / "configs/toy.json").string() + " --data " +
                    (dir_ / "nowhere").string(),
                log()),
            1);
  EXPECT_EQ(run("sweep --param n --values 1,x --out " + dir_.string(), log()), 1);
}

TEST_F(Cli, RuntimeFailuresExitTwo) {
  atomic_write_file((dir_ / "junk.ckpt").string(), "not a checkpoint");
  EXPECT_EQ(run("infer --checkpoint " + (dir_ / "junk.ckpt").string() + " --images " + synth() + " --out " +
                    (dir_ / "out").string(),
                log()),
            2);
  EXPECT_EQ(run("evaluate --checkpoint " + (dir_ / "junk.ckpt").string() + " --dataset " + synth() +
                    " --out " + (dir_ / "out").string(),
                log()),
            2);
}

TEST_F(Cli, TrainWroteItsArtifacts) {
  const fs::path run_dir = kFixture / "run";
  EXPECT_TRUE(fs::is_regular_file(run_dir / "model.ckpt"));
  EXPECT_TRUE(fs::is_regular_file(run_dir / "checkpoints" / "final.ckpt"));
  const RunConfig c = load_run_config((run_dir / "run_config.json").string());
  EXPECT_EQ(c.train.epochs, 50);
  std::ifstream in(run_dir / "train_log.jsonl");
  std::string line;
  int lines = 0;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    for (const char* key : {"step", "k", "L_Con", "L_SSIM", "L_GMS", "total"}) ASSERT_TRUE(j.contains(key)) << key;
    ++lines;
  }
  EXPECT_EQ(lines, 50 * 10);
}

TEST_F(Cli, EvaluateWritesReportsAndHeatmaps) {
  ASSERT_EQ(run("evaluate --checkpoint " + checkpoint() + " --dataset " + synth() + " --out " + dir_.string(), log()),
            0);
  const auto rows = read_csv(dir_ / "report.csv");
  ASSERT_GE(rows.size(), 4u);
  EXPECT_EQ(rows[0], (std::vector<std::string>{"category", "AUROC", "MAE", "ACC", "F1", "threshold"}));
  std::vector<std::string> names;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    ASSERT_EQ(rows[i].size(), 6u);
    names.push_back(rows[i][0]);
    for (int c = 1; c <= 4; ++c) {
      const double v = std::stod(rows[i][static_cast<std::size_t>(c)]);
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
  }
  EXPECT_EQ(names, (std::vector<std::string>{"blob", "scratch", "all", "mean"}));
  const auto report = nlohmann::json::parse(read_file((dir_ / "report.json").string()));
  EXPECT_EQ(report["schema_version"], 1);
  EXPECT_TRUE(fs::is_regular_file(dir_ / "heatmaps" / "test" / "blob" / "000.png"));
  EXPECT_TRUE(fs::is_regular_file(dir_ / "heatmaps" / "test" / "blob" / "000.png.json"));
}

TEST_F(Cli, InferMirrorsPathsAndWritesRecords) {
  ASSERT_EQ(run("infer --checkpoint " + checkpoint() + " --images " + synth() + "/test --out " + dir_.string(), log()),
            0);
  EXPECT_TRUE(fs::is_regular_file(dir_ / "good" / "000.png"));
  EXPECT_TRUE(fs::is_regular_file(dir_ / "scratch" / "014.png"));
  std::ifstream in(dir_ / "detections.jsonl");
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    EXPECT_GE(j["image_score"].get<double>(), 0.0);
    EXPECT_EQ(j["k_values"], nlohmann::json::array({2, 4}));
    EXPECT_EQ(j["seed"], 7);
    ++n;
  }
  EXPECT_EQ(n, 40);
}

TEST_F(Cli, SweepWritesOneRowPerValue) {
  RunConfig c = load_run_config((fs::path(MFRNET_SOURCE_DIR) / "configs/toy.json").string());
  c.train.epochs = 1;
  c.data.train_limit = 2;
  c.data.root = synth();
  save_run_config((dir_ / "quick.json").string(), c);
  ASSERT_EQ(run("sweep --config " + (dir_ / "quick.json").string() + " --param n --values 1,2 --out " +
                    dir_.string(),
                log()),
            0);
  const auto rows = read_csv(dir_ / "sweep_n.csv");
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0][0], "n");
  EXPECT_EQ(rows[1][0], "\"1\"");
  EXPECT_EQ(rows[2][0], "\"2\"");
}

TEST_F(Cli, TrainThenInferWithinBudget) {
  const auto start = std::chrono::steady_clock::now();
  ASSERT_EQ(run("train --config " + (fs::path(MFRNET_SOURCE_DIR) / "configs/toy.json").string() + " --data " +
                    synth() + " --out " + (dir_ / "run").string(),
                log()),
            0);
  ASSERT_EQ(run("infer --checkpoint " + (dir_ / "run" / "model.ckpt").string() + " --images " + synth() +
                    "/test/blob/000.png --out " + (dir_ / "maps").string(),
                log()),
            0);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  EXPECT_LT(seconds, 300.0);
  EXPECT_TRUE(fs::is_regular_file(dir_ / "maps" / "000.png"));
  const Checkpoint a = load_checkpoint((dir_ / "run" / "model.ckpt").string());
  const Checkpoint b = load_checkpoint(checkpoint());
  EXPECT_EQ(a.stats, b.stats);
  EXPECT_EQ(restore_network(a).checksum(), restore_network(b).checksum());
}

}  // namespace
}  // namespace mfrnet

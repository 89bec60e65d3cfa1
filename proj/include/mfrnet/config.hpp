#pragma once

#include <string>
#include <string_view>

#include "mfrnet/feature_aggregator.hpp"
#include "mfrnet/inference.hpp"
#include "mfrnet/losses.hpp"
#include "mfrnet/restoration_net.hpp"
#include "mfrnet/trainer.hpp"

namespace mfrnet {

struct DataConfig {
  std::string root;
  // Treat every normal image as training data (MT-style split).
  bool mt_style = false;
  // Use at most this many training images; 0 keeps all.
  int train_limit = 0;
  friend bool operator==(const DataConfig&, const DataConfig&) = default;
};

struct RunConfig {
  BackboneConfig backbone;
  int image_size = 256;
  int feature_size = 64;
  RestorationNetConfig net;
  LossConfig loss;
  TrainConfig train;
  InferenceConfig inference;
  DataConfig data;
  // Evaluation: number of quantile thresholds in the best-F1 sweep.
  int num_thresholds = 256;
  std::string output_dir = "runs/default";
  std::string cache_dir;

  // Throws ConfigError naming the first inconsistency.
  void validate() const;
  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

// Full-size defaults: VGG16 taps 1-3, 256x256 input, 64x64 features.
RunConfig default_run_config();
// Desk-scale configuration: toy random-frozen backbone, 64x64 input, 16x16
// features, C0 = 16, K = {2, 4}.
RunConfig toy_run_config();

// Sum of channels over the backbone's tapped blocks.
int aggregated_channels(const BackboneConfig& backbone);

std::string run_config_to_json(const RunConfig& config);
// Missing keys keep their defaults; unknown keys and wrong types are errors.
RunConfig run_config_from_json(std::string_view text);
RunConfig load_run_config(const std::string& path);
void save_run_config(const std::string& path, const RunConfig& config);

// Applies MFRNET_DEVICE and MFRNET_CACHE_DIR when set.
void apply_env_overrides(RunConfig& config);

}  // namespace mfrnet

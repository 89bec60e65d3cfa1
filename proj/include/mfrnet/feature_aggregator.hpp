#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mfrnet/tensor.hpp"

namespace mfrnet {

// RGB image as a [3, H, W] tensor with values in [0, 1].
struct ImageTensor {
  Tensor pixels;
  std::string source_path;
};

inline constexpr const char* kRandomFrozen = "random-frozen";

struct BackboneConfig {
  // "vgg16" or "toy" (three single-conv blocks with 8/16/32 channels).
  std::string architecture = "vgg16";
  // 1-based block numbers; the tap is the activation after the block's last
  // conv, before its pooling.
  std::vector<int> layer_indices{1, 2, 3};
  // Path to an MFRNET-WTS-1 weights file, or "random-frozen".
  std::string weights_source = kRandomFrozen;
  // Seed for "random-frozen" initialisation.
  std::uint64_t seed = 0;
  bool frozen = true;

  void validate() const;
  friend bool operator==(const BackboneConfig&, const BackboneConfig&) = default;
};

// Conv stack description for a sequential backbone.
struct BackboneBlockSpec {
  int conv_count;
  int channels;
};
std::vector<BackboneBlockSpec> backbone_layout(const std::string& architecture);

// Frozen sequential conv backbone. Read-only after construction.
class Backbone {
 public:
  explicit Backbone(BackboneConfig config);

  const BackboneConfig& config() const { return config_; }

  // One map per configured tap, in tap order.
  std::vector<FeatureMap> extract(const ImageTensor& image) const;

  // Channels of each tapped map.
  std::vector<int> tap_channels() const;
  std::uint64_t checksum() const;

 private:
  struct Conv {
    Tensor weight;
    Tensor bias;
  };
  BackboneConfig config_;
  std::vector<BackboneBlockSpec> layout_;
  std::vector<std::vector<Conv>> blocks_;
  std::array<double, 3> mean_{0.0, 0.0, 0.0};
  std::array<double, 3> stddev_{1.0, 1.0, 1.0};
};

std::vector<FeatureMap> extract_features(const ImageTensor& image, const Backbone& backbone);

// Bilinearly resizes every map to `target` and concatenates along channels in
// input order.
FeatureMap aggregate(const std::vector<FeatureMap>& maps, std::pair<int, int> target);

// Per-channel mean and standard deviation of aggregated feature maps,
// estimated on the training split. stddev_c = sqrt(var_c + kVarianceFloor *
// mean_c'(var_c')).
inline constexpr double kVarianceFloor = 0.01;
struct ChannelStats {
  std::vector<double> mean;
  std::vector<double> stddev;

  static ChannelStats compute(const std::vector<FeatureMap>& maps);
  // Identity statistics for `channels` channels.
  static ChannelStats identity(int channels);
  // (x - mean) / stddev per channel.
  FeatureMap normalize(const FeatureMap& x) const;
  friend bool operator==(const ChannelStats&, const ChannelStats&) = default;
};

// Named tensors in the MFRNET-WTS-1 format: magic, u32 count, then per tensor
// u32 name length, name, u32 rank, i32 dims, float32 little-endian data.
struct NamedTensor {
  std::string name;
  Tensor value;
};
std::vector<NamedTensor> read_weights_file(const std::string& path);
void write_weights_file(const std::string& path, const std::vector<NamedTensor>& tensors);

// Tensor names used by Backbone for a given architecture, in load order.
std::vector<std::string> backbone_weight_names(const std::string& architecture);

}  // namespace mfrnet

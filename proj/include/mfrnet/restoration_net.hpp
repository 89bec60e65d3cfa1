#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "mfrnet/autograd.hpp"
#include "mfrnet/tensor.hpp"

namespace mfrnet {

// Architecture of the U-shaped restoration network: head 3x3 conv, five
// stages of hybrid transformer blocks (stages 1-2 end in a stride-2 conv
// that halves the size and doubles channels, stages 4-5 start with a 2x2
// stride-2 transposed conv that does the opposite) and a tail 3x3 conv.
struct RestorationNetConfig {
  int in_channels = 448;
  int base_channels = 64;
  std::vector<int> pooling_ratios{2, 3, 4, 5};
  std::array<int, 5> stage_block_counts{1, 2, 4, 2, 1};
  std::array<int, 5> stage_channel_multipliers{1, 2, 4, 2, 1};
  int ffn_expansion = 4;
  double layer_norm_eps = 1e-5;

  void validate() const;
  int stage_channels(int stage) const { return base_channels * stage_channel_multipliers[static_cast<std::size_t>(stage)]; }
  friend bool operator==(const RestorationNetConfig&, const RestorationNetConfig&) = default;
};

struct NamedParameter {
  std::string name;
  ag::Var var;
};

// Shapes observed during a forward pass, for architecture checks.
struct ForwardTrace {
  std::vector<Shape> stage_outputs;  // one per executed stage
  std::vector<Tensor> attention;     // per block, if capture_attention
  bool capture_attention = false;
  // Skip stages 3-5: the stage-2 output goes straight through the last
  // upsampling conv, gets the stage-1 skip and then the tail.
  bool bypass_inner_stages = false;
};

// Locally position-aware module: 3x3 zero-padded conv added to its input.
ag::Var lpa(const ag::Var& x, const ag::Var& weight, const ag::Var& bias);

// Convolutional feed-forward: 1x1 expand -> GELU -> depthwise 3x3 -> GELU ->
// 1x1 project back.
struct FeedForwardWeights {
  ag::Var in_w, in_b, dw_w, dw_b, out_w, out_b;
};
ag::Var cffn(const ag::Var& x, const FeedForwardWeights& w);

class RestorationNet {
 public:
  RestorationNet(RestorationNetConfig config, std::uint64_t init_seed);

  const RestorationNetConfig& config() const { return config_; }

  // Output has the input's shape. Spatial size must be divisible by 4.
  ag::Var forward(const ag::Var& masked, ForwardTrace* trace = nullptr) const;
  // Inference without recording a graph.
  FeatureMap restore(const FeatureMap& masked) const;

  std::vector<NamedParameter>& parameters() { return params_; }
  const std::vector<NamedParameter>& parameters() const { return params_; }
  const ag::Var& parameter(const std::string& name) const;
  std::size_t parameter_count() const;
  void zero_grad();
  // FNV-1a over the raw bytes of every parameter, in registration order.
  std::uint64_t checksum() const;

 private:
  struct Block {
    ag::Var lpa_w, lpa_b;
    ag::Var ln1_g, ln1_b;
    ag::Var wq, wk, wv;
    ag::Var ln2_g, ln2_b;
    FeedForwardWeights ffn;
  };

  ag::Var add_param(const std::string& name, Tensor value);
  ag::Var run_block(const Block& b, const ag::Var& x, ForwardTrace* trace) const;
  ag::Var run_stage(int stage, ag::Var x, ForwardTrace* trace) const;

  RestorationNetConfig config_;
  std::vector<NamedParameter> params_;
  ag::Var head_w_, head_b_, tail_w_, tail_b_;
  std::array<ag::Var, 2> down_w_, down_b_, up_w_, up_b_;
  std::array<std::vector<Block>, 5> stages_;
};

}  // namespace mfrnet

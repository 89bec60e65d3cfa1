#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "mfrnet/losses.hpp"
#include "mfrnet/restoration_net.hpp"
#include "mfrnet/tensor.hpp"

namespace mfrnet {

struct InferenceConfig {
  std::vector<int> k_set{2, 4, 8, 16};
  int subset_count = 3;
  std::uint64_t seed = 0;
  bool smoothing = true;
  double smoothing_sigma = 4.0;

  void validate(int feature_size) const;
  friend bool operator==(const InferenceConfig&, const InferenceConfig&) = default;
};

struct AnomalyMap {
  Tensor scores;      // [H_img, W_img], smoothed if enabled
  Tensor raw_scores;  // [H, W] at feature resolution, mean over k
  std::vector<Tensor> per_k_scores;
  double image_score = 0.0;  // max of `scores`
  std::vector<int> k_values_used;
  int restoration_passes = 0;
  // Every feature pixel was restored by exactly one partial for every k.
  bool fully_covered = false;
};

// Per-pixel (channel-averaged squared difference) + (1 - SSIM) + (1 - GMS).
Tensor score_for_k(const FeatureMap& features, const FeatureMap& recon, const LossConfig& config);

// Seed of the test-time mask set used for masking size k.
std::uint64_t inference_mask_seed(std::uint64_t seed, int k);

// Restores `features` (already channel-normalised) under every k, fuses the
// per-k score maps by their mean, upsamples to `image_size` and smooths.
AnomalyMap detect_features(const FeatureMap& features, const RestorationNet& net,
                           const InferenceConfig& config, const LossConfig& loss_config,
                           std::pair<int, int> image_size);

}  // namespace mfrnet

#include "mfrnet/inference.hpp"

#include <algorithm>
#include <string>

#include "mfrnet/crossed_mask.hpp"
#include "mfrnet/kernels.hpp"

namespace mfrnet {

void InferenceConfig::validate(int feature_size) const {
  if (k_set.empty()) throw ConfigError("inference: k_set is empty");
  for (int k : k_set) {
    if (k < 1 || feature_size % k != 0) {
      throw ConfigError("inference: masking size " + std::to_string(k) +
                        " does not divide feature size " + std::to_string(feature_size));
    }
    const int cells = (feature_size / k) * (feature_size / k);
    if (subset_count > cells) {
      throw ConfigError("inference: subset count " + std::to_string(subset_count) +
                        " exceeds the " + std::to_string(cells) + " cells for k=" +
                        std::to_string(k));
    }
  }
  if (subset_count < 1) throw ConfigError("inference: subset_count must be >= 1");
  if (smoothing && !(smoothing_sigma > 0.0)) {
    throw ConfigError("inference: smoothing_sigma must be positive");
  }
}

Tensor score_for_k(const FeatureMap& features, const FeatureMap& recon, const LossConfig& config) {
  Tensor score = squared_difference_map(features, recon);
  const Tensor ssim = ssim_map(features, recon, config).values;
  const Tensor gms = gms_map(features, recon, config).values;
  for (std::size_t p = 0; p < score.size(); ++p) {
    // Clamp the similarity terms at 0 so the score stays non-negative even
    // when replicated-border statistics push SSIM marginally above 1.
    score[p] += std::max(0.0, 1.0 - ssim[p]) + std::max(0.0, 1.0 - gms[p]);
  }
  return score;
}

std::uint64_t inference_mask_seed(std::uint64_t seed, int k) {
  // splitmix64 finaliser over (seed, k).
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(k + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

AnomalyMap detect_features(const FeatureMap& features, const RestorationNet& net,
                           const InferenceConfig& config, const LossConfig& loss_config,
                           std::pair<int, int> image_size) {
  require_feature_map(features, "detect features");
  if (features.height() != features.width()) {
    throw ArgumentError("detect: feature map must be square, got " +
                        shape_to_string(features.shape()));
  }
  config.validate(features.height());

  AnomalyMap out;
  out.fully_covered = true;
  out.raw_scores = Tensor({features.height(), features.width()});
  for (int k : config.k_set) {
    const MaskSet masks = generate_masks(features.height(), features.width(), k,
                                         config.subset_count, inference_mask_seed(config.seed, k));
    std::vector<FeatureMap> partials;
    partials.reserve(masks.masks.size());
    for (const Tensor& m : masks.masks) {
      partials.push_back(net.restore(apply_mask(features, m)));
      ++out.restoration_passes;
    }
    const Tensor cov = coverage(masks);
    out.fully_covered = out.fully_covered && cov.min() == 1.0 && cov.max() == 1.0;
    const FeatureMap recon = compose_restoration(partials, masks);
    Tensor score = score_for_k(features, recon, loss_config);
    out.raw_scores += score;
    out.per_k_scores.push_back(std::move(score));
    out.k_values_used.push_back(k);
  }
  out.raw_scores *= 1.0 / static_cast<double>(config.k_set.size());

  Tensor up = kernels::bilinear_resize(out.raw_scores.reshaped({1, features.height(), features.width()}),
                                       image_size.first, image_size.second);
  if (config.smoothing) up = kernels::gaussian_blur(up, config.smoothing_sigma);
  out.scores = up.reshaped({image_size.first, image_size.second});
  out.image_score = out.scores.max();
  return out;
}

}  // namespace mfrnet

#pragma once

#include <array>

#include "mfrnet/autograd.hpp"
#include "mfrnet/tensor.hpp"

namespace mfrnet {

struct LossConfig {
  int ssim_window = 11;  // odd, >= 3; uniform window with edge replication
  double ssim_a1 = 1e-4;
  double ssim_a2 = 1e-4;
  double gms_b = 1e-4;
  // Stabilizer inside the gradient-magnitude square root.
  double gms_eps = 1e-12;

  void validate() const;
  friend bool operator==(const LossConfig&, const LossConfig&) = default;
};

enum class SimilarityKind { kSsim, kGms };

// Channel-averaged per-pixel similarity, [H, W].
struct SimilarityMap {
  Tensor values;
  SimilarityKind kind = SimilarityKind::kSsim;
};

struct HybridLoss {
  double contextual = 0.0;
  double ssim = 0.0;
  double gms = 0.0;
  double total = 0.0;
};

// Local-statistics form of the structural similarity index for one window.
double ssim_from_stats(double mean_x, double mean_y, double var_x, double var_y, double cov_xy,
                       double a1, double a2);

// Horizontal and vertical 3x3 Prewitt kernels, row-major, normalised by 1/3.
const std::array<double, 9>& prewitt_horizontal();
const std::array<double, 9>& prewitt_vertical();

// (1 / (H*W)) * ||target - recon||^2, summed over channels.
double contextual_loss(const FeatureMap& target, const FeatureMap& recon);

SimilarityMap ssim_map(const FeatureMap& x, const FeatureMap& y, const LossConfig& config);
double ssim_loss(const FeatureMap& x, const FeatureMap& y, const LossConfig& config);

SimilarityMap gms_map(const FeatureMap& x, const FeatureMap& y, const LossConfig& config);
double gms_loss(const FeatureMap& x, const FeatureMap& y, const LossConfig& config);

HybridLoss hybrid_loss(const FeatureMap& target, const FeatureMap& recon, const LossConfig& config);

// Per-pixel channel-averaged squared difference, [H, W].
Tensor squared_difference_map(const FeatureMap& x, const FeatureMap& y);

// Differentiable versions; gradients flow into `recon` only.
ag::Var contextual_loss(const FeatureMap& target, const ag::Var& recon);
ag::Var ssim_loss(const FeatureMap& target, const ag::Var& recon, const LossConfig& config);
ag::Var gms_loss(const FeatureMap& target, const ag::Var& recon, const LossConfig& config);

struct HybridLossVar {
  ag::Var total;
  HybridLoss breakdown;
};
HybridLossVar hybrid_loss(const FeatureMap& target, const ag::Var& recon, const LossConfig& config);

}  // namespace mfrnet

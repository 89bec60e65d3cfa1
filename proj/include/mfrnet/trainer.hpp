#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mfrnet/losses.hpp"
#include "mfrnet/restoration_net.hpp"
#include "mfrnet/tensor.hpp"

namespace mfrnet {

// A step produced a non-finite loss or gradient.
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  double learning_rate = 1e-4;
  double weight_decay = 1e-3;
  int batch_size = 6;
  int epochs = 400;
  std::vector<int> k_set{2, 4, 8, 16};
  int subset_count = 3;
  std::uint64_t seed = 0;
  // Steps between checkpoints; 0 writes only the final one.
  int checkpoint_interval = 0;
  std::string device = "cpu";
  // Global gradient-norm clip; 0 disables clipping.
  double grad_clip_norm = 5.0;

  void validate(int feature_size) const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

// Adam moments with decoupled weight decay.
struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::int64_t t = 0;
  std::vector<Tensor> m;
  std::vector<Tensor> v;
};

struct StepLog {
  std::int64_t step = 0;
  int epoch = 0;
  int k = 0;
  std::uint64_t mask_seed = 0;
  HybridLoss loss;
  double grad_norm = 0.0;
};

struct TrainState {
  std::int64_t step = 0;
  // Current epoch while fitting; completed epochs once fit returns.
  int epoch = 0;
  // Exponential moving averages of the loss components (decay 0.9).
  HybridLoss running;
  AdamState adam;
  std::mt19937_64 rng;

  explicit TrainState(std::uint64_t seed = 0) : rng(seed) {}
};

// One optimisation step on `batch`: draws k uniformly from the configured set
// and a fresh mask set shared by the batch, restores each image from its n
// masked copies, composes the restorations and minimises the mean hybrid loss
// with one AdamW update. Mutates `net` and `state`.
StepLog train_step(std::span<const FeatureMap> batch, TrainState& state, RestorationNet& net,
                   const TrainConfig& config, const LossConfig& loss_config);

struct FitCallbacks {
  std::function<void(const StepLog&)> on_step;
  // Called every checkpoint_interval steps with the state after that step.
  std::function<void(const TrainState&)> on_checkpoint;
};

// epochs x ceil(N / batch_size) steps over a per-epoch shuffle of `data`.
TrainState fit(const std::vector<FeatureMap>& data, RestorationNet& net, const TrainConfig& config,
               const LossConfig& loss_config, const FitCallbacks& callbacks = {});

// JSON line {step, k, L_Con, L_SSIM, L_GMS, total}.
std::string step_log_json(const StepLog& log);

}  // namespace mfrnet

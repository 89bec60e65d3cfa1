#include "mfrnet/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "json.hpp"
#include "mfrnet/crossed_mask.hpp"

namespace mfrnet {
namespace {

bool finite(const HybridLoss& l) {
  return std::isfinite(l.contextual) && std::isfinite(l.ssim) && std::isfinite(l.gms) &&
         std::isfinite(l.total);
}

}  // namespace

void TrainConfig::validate(int feature_size) const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("train: learning_rate must be finite and >= 0");
  }
  if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) {
    throw ConfigError("train: weight_decay must be finite and >= 0");
  }
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (epochs < 0) throw ConfigError("train: epochs must be >= 0");
  if (checkpoint_interval < 0) throw ConfigError("train: checkpoint_interval must be >= 0");
  if (subset_count < 1) throw ConfigError("train: subset_count must be >= 1");
  if (!(grad_clip_norm >= 0.0)) throw ConfigError("train: grad_clip_norm must be >= 0");
  if (device != "cpu") throw ConfigError("train: unsupported device '" + device + "' (only cpu)");
  if (k_set.empty()) throw ConfigError("train: k_set is empty");
  for (int k : k_set) {
    if (k < 1 || feature_size % k != 0) {
      throw ConfigError("train: masking size " + std::to_string(k) +
                        " does not divide feature size " + std::to_string(feature_size));
    }
    if (subset_count > (feature_size / k) * (feature_size / k)) {
      throw ConfigError("train: subset_count exceeds the cell count for k=" + std::to_string(k));
    }
  }
}

StepLog train_step(std::span<const FeatureMap> batch, TrainState& state, RestorationNet& net,
                   const TrainConfig& config, const LossConfig& loss_config) {
  if (batch.empty()) throw ArgumentError("train_step: empty batch");
  auto& params = net.parameters();
  AdamState& adam = state.adam;
  if (adam.m.empty()) {
    for (const auto& p : params) {
      adam.m.push_back(Tensor::zeros_like(p.var->value));
      adam.v.push_back(Tensor::zeros_like(p.var->value));
    }
  }

  StepLog log;
  log.step = state.step;
  log.epoch = state.epoch;
  std::uniform_int_distribution<std::size_t> pick(0, config.k_set.size() - 1);
  log.k = config.k_set[pick(state.rng)];
  log.mask_seed = state.rng();

  const FeatureMap& first = batch.front();
  const MaskSet masks =
      generate_masks(first.height(), first.width(), log.k, config.subset_count, log.mask_seed);

  net.zero_grad();
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  for (const FeatureMap& f : batch) {
    require_same_shape(f, first, "train_step batch");
    std::vector<ag::Var> partials;
    partials.reserve(masks.masks.size());
    for (const Tensor& m : masks.masks) {
      partials.push_back(net.forward(ag::constant(apply_mask(f, m))));
    }
    const ag::Var recon = compose_restoration(partials, masks);
    HybridLossVar loss = hybrid_loss(f, recon, loss_config);
    if (!finite(loss.breakdown)) {
      std::ostringstream msg;
      msg << "non-finite loss at step " << state.step << " (k=" << log.k
          << ", mask_seed=" << log.mask_seed << ", seed=" << config.seed
          << "): L_Con=" << loss.breakdown.contextual << " L_SSIM=" << loss.breakdown.ssim
          << " L_GMS=" << loss.breakdown.gms;
      throw TrainingError(msg.str());
    }
    ag::backward(ag::scale(loss.total, inv_b));
    log.loss.contextual += loss.breakdown.contextual * inv_b;
    log.loss.ssim += loss.breakdown.ssim * inv_b;
    log.loss.gms += loss.breakdown.gms * inv_b;
    log.loss.total += loss.breakdown.total * inv_b;
  }

  double sq = 0.0;
  for (const auto& p : params) {
    if (!p.var->grad.empty()) {
      for (double g : p.var->grad.values()) sq += g * g;
    }
  }
  log.grad_norm = std::sqrt(sq);
  if (!std::isfinite(log.grad_norm)) {
    throw TrainingError("non-finite gradient at step " + std::to_string(state.step) +
                        " (k=" + std::to_string(log.k) + ", seed=" + std::to_string(config.seed) +
                        ")");
  }
  const double clip = (config.grad_clip_norm > 0.0 && log.grad_norm > config.grad_clip_norm)
                          ? config.grad_clip_norm / log.grad_norm
                          : 1.0;

  ++adam.t;
  const double bc1 = 1.0 - std::pow(adam.beta1, static_cast<double>(adam.t));
  const double bc2 = 1.0 - std::pow(adam.beta2, static_cast<double>(adam.t));
  const double lr = config.learning_rate;
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& w = params[i].var->value;
    const Tensor& g = params[i].var->grad;
    Tensor& m = adam.m[i];
    Tensor& v = adam.v[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double gj = g.empty() ? 0.0 : g[j] * clip;
      m[j] = adam.beta1 * m[j] + (1.0 - adam.beta1) * gj;
      v[j] = adam.beta2 * v[j] + (1.0 - adam.beta2) * gj * gj;
      const double update = (m[j] / bc1) / (std::sqrt(v[j] / bc2) + adam.eps);
      w[j] -= lr * (update + config.weight_decay * w[j]);
    }
  }
  net.zero_grad();

  auto ema = [first_step = state.step == 0](double& acc, double x) {
    acc = first_step ? x : 0.9 * acc + 0.1 * x;
  };
  ema(state.running.contextual, log.loss.contextual);
  ema(state.running.ssim, log.loss.ssim);
  ema(state.running.gms, log.loss.gms);
  ema(state.running.total, log.loss.total);
  ++state.step;
  return log;
}

TrainState fit(const std::vector<FeatureMap>& data, RestorationNet& net, const TrainConfig& config,
               const LossConfig& loss_config, const FitCallbacks& callbacks) {
  if (data.empty()) throw ArgumentError("fit: training set is empty");
  config.validate(data.front().height());
  TrainState state(config.seed);
  std::vector<std::size_t> order(data.size());
  const std::size_t bs = static_cast<std::size_t>(config.batch_size);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    state.epoch = epoch;
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), state.rng);
    for (std::size_t start = 0; start < order.size(); start += bs) {
      std::vector<FeatureMap> batch;
      for (std::size_t i = start; i < std::min(order.size(), start + bs); ++i) {
        batch.push_back(data[order[i]]);
      }
      const StepLog log = train_step(batch, state, net, config, loss_config);
      if (callbacks.on_step) callbacks.on_step(log);
      if (callbacks.on_checkpoint && config.checkpoint_interval > 0 &&
          state.step % config.checkpoint_interval == 0) {
        callbacks.on_checkpoint(state);
      }
    }
  }
  state.epoch = config.epochs;
  return state;
}

std::string step_log_json(const StepLog& log) {
  nlohmann::ordered_json j;
  j["step"] = log.step;
  j["epoch"] = log.epoch;
  j["k"] = log.k;
  j["L_Con"] = log.loss.contextual;
  j["L_SSIM"] = log.loss.ssim;
  j["L_GMS"] = log.loss.gms;
  j["total"] = log.loss.total;
  j["grad_norm"] = log.grad_norm;
  return j.dump();
}

}  // namespace mfrnet

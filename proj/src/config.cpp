#include "mfrnet/config.hpp"

#include <cstdlib>
#include <set>

#include "json.hpp"
#include "mfrnet/file_util.hpp"

namespace mfrnet {
namespace {

using json = nlohmann::ordered_json;

void reject_unknown(const json& j, const std::string& section, std::set<std::string> known) {
  if (!j.is_object()) throw ConfigError("config: section '" + section + "' must be an object");
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) {
      throw ConfigError("config: unknown key '" + key + "' in section '" + section + "'");
    }
  }
}

template <typename T>
void get(const json& j, const char* key, T& out, const std::string& section) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError("config: bad value for '" + section + "." + key + "': " + e.what());
  }
}

json to_json(const BackboneConfig& c) {
  return {{"architecture", c.architecture},
          {"layer_indices", c.layer_indices},
          {"weights_source", c.weights_source},
          {"seed", c.seed},
          {"frozen", c.frozen}};
}

json to_json(const RestorationNetConfig& c) {
  return {{"in_channels", c.in_channels},
          {"base_channels", c.base_channels},
          {"pooling_ratios", c.pooling_ratios},
          {"stage_block_counts", c.stage_block_counts},
          {"stage_channel_multipliers", c.stage_channel_multipliers},
          {"ffn_expansion", c.ffn_expansion},
          {"layer_norm_eps", c.layer_norm_eps}};
}

json to_json(const LossConfig& c) {
  return {{"ssim_window", c.ssim_window},
          {"ssim_a1", c.ssim_a1},
          {"ssim_a2", c.ssim_a2},
          {"gms_b", c.gms_b},
          {"gms_eps", c.gms_eps}};
}

json to_json(const TrainConfig& c) {
  return {{"learning_rate", c.learning_rate},
          {"weight_decay", c.weight_decay},
          {"batch_size", c.batch_size},
          {"epochs", c.epochs},
          {"k_set", c.k_set},
          {"subset_count", c.subset_count},
          {"seed", c.seed},
          {"checkpoint_interval", c.checkpoint_interval},
          {"device", c.device},
          {"grad_clip_norm", c.grad_clip_norm}};
}

json to_json(const InferenceConfig& c) {
  return {{"k_set", c.k_set},
          {"subset_count", c.subset_count},
          {"seed", c.seed},
          {"smoothing", c.smoothing},
          {"smoothing_sigma", c.smoothing_sigma}};
}

json to_json(const DataConfig& c) {
  return {{"root", c.root}, {"mt_style", c.mt_style}, {"train_limit", c.train_limit}};
}

void from_json_section(const json& j, BackboneConfig& c) {
  reject_unknown(j, "backbone", {"architecture", "layer_indices", "weights_source", "seed", "frozen"});
  get(j, "architecture", c.architecture, "backbone");
  get(j, "layer_indices", c.layer_indices, "backbone");
  get(j, "weights_source", c.weights_source, "backbone");
  get(j, "seed", c.seed, "backbone");
  get(j, "frozen", c.frozen, "backbone");
}

void from_json_section(const json& j, RestorationNetConfig& c) {
  reject_unknown(j, "net", {"in_channels", "base_channels", "pooling_ratios", "stage_block_counts",
                            "stage_channel_multipliers", "ffn_expansion", "layer_norm_eps"});
  get(j, "in_channels", c.in_channels, "net");
  get(j, "base_channels", c.base_channels, "net");
  get(j, "pooling_ratios", c.pooling_ratios, "net");
  get(j, "stage_block_counts", c.stage_block_counts, "net");
  get(j, "stage_channel_multipliers", c.stage_channel_multipliers, "net");
  get(j, "ffn_expansion", c.ffn_expansion, "net");
  get(j, "layer_norm_eps", c.layer_norm_eps, "net");
}

void from_json_section(const json& j, LossConfig& c) {
  reject_unknown(j, "loss", {"ssim_window", "ssim_a1", "ssim_a2", "gms_b", "gms_eps"});
  get(j, "ssim_window", c.ssim_window, "loss");
  get(j, "ssim_a1", c.ssim_a1, "loss");
  get(j, "ssim_a2", c.ssim_a2, "loss");
  get(j, "gms_b", c.gms_b, "loss");
  get(j, "gms_eps", c.gms_eps, "loss");
}

void from_json_section(const json& j, TrainConfig& c) {
  reject_unknown(j, "train", {"learning_rate", "weight_decay", "batch_size", "epochs", "k_set",
                              "subset_count", "seed", "checkpoint_interval", "device",
                              "grad_clip_norm"});
  get(j, "learning_rate", c.learning_rate, "train");
  get(j, "weight_decay", c.weight_decay, "train");
  get(j, "batch_size", c.batch_size, "train");
  get(j, "epochs", c.epochs, "train");
  get(j, "k_set", c.k_set, "train");
  get(j, "subset_count", c.subset_count, "train");
  get(j, "seed", c.seed, "train");
  get(j, "checkpoint_interval", c.checkpoint_interval, "train");
  get(j, "device", c.device, "train");
  get(j, "grad_clip_norm", c.grad_clip_norm, "train");
}

void from_json_section(const json& j, InferenceConfig& c) {
  reject_unknown(j, "inference", {"k_set", "subset_count", "seed", "smoothing", "smoothing_sigma"});
  get(j, "k_set", c.k_set, "inference");
  get(j, "subset_count", c.subset_count, "inference");
  get(j, "seed", c.seed, "inference");
  get(j, "smoothing", c.smoothing, "inference");
  get(j, "smoothing_sigma", c.smoothing_sigma, "inference");
}

void from_json_section(const json& j, DataConfig& c) {
  reject_unknown(j, "data", {"root", "mt_style", "train_limit"});
  get(j, "root", c.root, "data");
  get(j, "mt_style", c.mt_style, "data");
  get(j, "train_limit", c.train_limit, "data");
}

}  // namespace

int aggregated_channels(const BackboneConfig& backbone) {
  const auto layout = backbone_layout(backbone.architecture);
  int channels = 0;
  for (int l : backbone.layer_indices) {
    if (l < 1 || l > static_cast<int>(layout.size())) {
      throw ConfigError("backbone: tap " + std::to_string(l) + " out of range");
    }
    channels += layout[static_cast<std::size_t>(l - 1)].channels;
  }
  return channels;
}

void RunConfig::validate() const {
  backbone.validate();
  net.validate();
  loss.validate();
  if (image_size < 1) throw ConfigError("config: image_size must be positive");
  if (feature_size < 4 || feature_size % 4 != 0) {
    throw ConfigError("config: feature_size " + std::to_string(feature_size) +
                      " must be a positive multiple of 4");
  }
  const int expected = aggregated_channels(backbone);
  if (net.in_channels != expected) {
    throw ConfigError("config: net.in_channels is " + std::to_string(net.in_channels) +
                      " but the backbone taps produce " + std::to_string(expected) + " channels");
  }
  const int inner = feature_size / 4;
  for (int r : net.pooling_ratios) {
    if (r > inner) {
      throw ConfigError("config: pooling ratio " + std::to_string(r) +
                        " exceeds the innermost stage size " + std::to_string(inner));
    }
  }
  if (loss.ssim_window > feature_size) {
    throw ConfigError("config: ssim_window exceeds feature_size");
  }
  train.validate(feature_size);
  inference.validate(feature_size);
  if (data.train_limit < 0) throw ConfigError("config: data.train_limit must be >= 0");
  if (num_thresholds < 1) throw ConfigError("config: num_thresholds must be >= 1");
}

RunConfig default_run_config() {
  RunConfig c;
  c.net.in_channels = aggregated_channels(c.backbone);
  return c;
}

RunConfig toy_run_config() {
  RunConfig c;
  c.backbone.architecture = "toy";
  c.backbone.layer_indices = {1, 2, 3};
  c.backbone.seed = 7;
  c.image_size = 64;
  c.feature_size = 16;
  c.net.in_channels = aggregated_channels(c.backbone);
  c.net.base_channels = 16;
  c.net.pooling_ratios = {2, 3, 4};
  c.loss.ssim_window = 5;
  c.train.learning_rate = 1e-3;
  c.train.weight_decay = 1e-3;
  c.train.batch_size = 2;
  c.train.epochs = 50;
  c.train.k_set = {2, 4};
  c.train.subset_count = 3;
  c.train.seed = 7;
  c.inference.k_set = {2, 4};
  c.inference.subset_count = 3;
  c.inference.seed = 7;
  c.inference.smoothing_sigma = 1.0;
  c.output_dir = "runs/toy";
  return c;
}

std::string run_config_to_json(const RunConfig& c) {
  json j;
  j["backbone"] = to_json(c.backbone);
  j["image_size"] = c.image_size;
  j["feature_size"] = c.feature_size;
  j["net"] = to_json(c.net);
  j["loss"] = to_json(c.loss);
  j["train"] = to_json(c.train);
  j["inference"] = to_json(c.inference);
  j["data"] = to_json(c.data);
  j["num_thresholds"] = c.num_thresholds;
  j["output_dir"] = c.output_dir;
  j["cache_dir"] = c.cache_dir;
  return j.dump(2) + "\n";
}

RunConfig run_config_from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  reject_unknown(j, "<root>",
                 {"$schema", "backbone", "image_size", "feature_size", "net", "loss", "train",
                  "inference", "data", "num_thresholds", "output_dir", "cache_dir"});
  RunConfig c;
  if (j.contains("backbone")) from_json_section(j["backbone"], c.backbone);
  // in_channels follows the taps unless given explicitly.
  c.net.in_channels = aggregated_channels(c.backbone);
  get(j, "image_size", c.image_size, "<root>");
  get(j, "feature_size", c.feature_size, "<root>");
  if (j.contains("net")) from_json_section(j["net"], c.net);
  if (j.contains("loss")) from_json_section(j["loss"], c.loss);
  if (j.contains("train")) from_json_section(j["train"], c.train);
  if (j.contains("inference")) from_json_section(j["inference"], c.inference);
  if (j.contains("data")) from_json_section(j["data"], c.data);
  get(j, "num_thresholds", c.num_thresholds, "<root>");
  get(j, "output_dir", c.output_dir, "<root>");
  get(j, "cache_dir", c.cache_dir, "<root>");
  return c;
}

RunConfig load_run_config(const std::string& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const LoadError& e) {
    throw ConfigError(e.what());
  }
  return run_config_from_json(text);
}

void save_run_config(const std::string& path, const RunConfig& config) {
  atomic_write_file(path, run_config_to_json(config));
}

void apply_env_overrides(RunConfig& config) {
  if (const char* device = std::getenv("MFRNET_DEVICE"); device && *device) {
    config.train.device = device;
  }
  if (const char* cache = std::getenv("MFRNET_CACHE_DIR"); cache && *cache) {
    config.cache_dir = cache;
  }
}

}  // namespace mfrnet

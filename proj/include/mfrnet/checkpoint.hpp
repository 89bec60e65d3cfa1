#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mfrnet/config.hpp"
#include "mfrnet/feature_aggregator.hpp"
#include "mfrnet/restoration_net.hpp"

namespace mfrnet {

// On-disk layout: "MFRNET-CKPT-1\n", u64 header length, JSON header (run
// config, step, tensor names and shapes), then each tensor's float64 values
// in header order. Feature statistics are stored as two extra tensors.
struct Checkpoint {
  RunConfig config;
  ChannelStats stats;
  std::int64_t step = 0;
  std::vector<NamedTensor> parameters;
};

void save_checkpoint(const std::string& path, const RunConfig& config, const ChannelStats& stats,
                     const RestorationNet& net, std::int64_t step);
Checkpoint load_checkpoint(const std::string& path);

// Network with the checkpoint's architecture and parameter values.
RestorationNet restore_network(const Checkpoint& checkpoint);

}  // namespace mfrnet

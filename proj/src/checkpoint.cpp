#include "mfrnet/checkpoint.hpp"

#include <cstring>
#include <map>

#include "json.hpp"
#include "mfrnet/file_util.hpp"

namespace mfrnet {
namespace {

using json = nlohmann::ordered_json;

constexpr char kMagic[] = "MFRNET-CKPT-1\n";
constexpr std::size_t kMagicLen = sizeof(kMagic) - 1;
constexpr char kStatsMean[] = "feature_stats.mean";
constexpr char kStatsStd[] = "feature_stats.stddev";

}  // namespace

void save_checkpoint(const std::string& path, const RunConfig& config, const ChannelStats& stats,
                     const RestorationNet& net, std::int64_t step) {
  std::vector<std::pair<std::string, const Tensor*>> tensors;
  for (const auto& p : net.parameters()) tensors.emplace_back(p.name, &p.var->value);
  const Tensor mean({static_cast<int>(stats.mean.size())}, stats.mean);
  const Tensor sd({static_cast<int>(stats.stddev.size())}, stats.stddev);
  tensors.emplace_back(kStatsMean, &mean);
  tensors.emplace_back(kStatsStd, &sd);

  json header;
  header["config"] = json::parse(run_config_to_json(config));
  header["step"] = step;
  json entries = json::array();
  for (const auto& [name, t] : tensors) entries.push_back({{"name", name}, {"shape", t->shape()}});
  header["tensors"] = entries;
  const std::string text = header.dump();

  std::string out(kMagic, kMagicLen);
  const std::uint64_t len = text.size();
  out.append(reinterpret_cast<const char*>(&len), sizeof(len));
  out += text;
  for (const auto& [name, t] : tensors) {
    out.append(reinterpret_cast<const char*>(t->data()), t->size() * sizeof(double));
  }
  atomic_write_file(path, out);
}

Checkpoint load_checkpoint(const std::string& path) {
  const std::string data = read_file(path);
  if (data.size() < kMagicLen + sizeof(std::uint64_t) ||
      std::memcmp(data.data(), kMagic, kMagicLen) != 0) {
    throw LoadError(path + ": not an MFRNET-CKPT-1 checkpoint");
  }
  std::uint64_t len = 0;
  std::memcpy(&len, data.data() + kMagicLen, sizeof(len));
  std::size_t pos = kMagicLen + sizeof(len);
  if (len > data.size() - pos) throw LoadError(path + ": truncated header");
  json header;
  try {
    header = json::parse(data.substr(pos, len));
  } catch (const json::exception& e) {
    throw LoadError(path + ": corrupt header: " + e.what());
  }
  pos += len;

  Checkpoint ck;
  try {
    ck.config = run_config_from_json(header.at("config").dump());
    ck.step = header.at("step").get<std::int64_t>();
    for (const auto& e : header.at("tensors")) {
      const std::string name = e.at("name").get<std::string>();
      const Shape shape = e.at("shape").get<Shape>();
      const std::size_t bytes = shape_numel(shape) * sizeof(double);
      if (bytes > data.size() - pos) throw LoadError(path + ": truncated tensor " + name);
      std::vector<double> values(shape_numel(shape));
      std::memcpy(values.data(), data.data() + pos, bytes);
      pos += bytes;
      if (name == kStatsMean) {
        ck.stats.mean = std::move(values);
      } else if (name == kStatsStd) {
        ck.stats.stddev = std::move(values);
      } else {
        ck.parameters.push_back({name, Tensor(shape, std::move(values))});
      }
    }
  } catch (const json::exception& e) {
    throw LoadError(path + ": malformed header: " + e.what());
  }
  if (pos != data.size()) throw LoadError(path + ": trailing bytes after last tensor");
  if (ck.stats.mean.size() != ck.stats.stddev.size()) {
    throw LoadError(path + ": inconsistent feature statistics");
  }
  return ck;
}

RestorationNet restore_network(const Checkpoint& checkpoint) {
  RestorationNet net(checkpoint.config.net, checkpoint.config.train.seed);
  auto& params = net.parameters();
  if (params.size() != checkpoint.parameters.size()) {
    throw LoadError("checkpoint holds " + std::to_string(checkpoint.parameters.size()) +
                    " tensors, the network expects " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& src = checkpoint.parameters[i];
    if (src.name != params[i].name || src.value.shape() != params[i].var->value.shape()) {
      throw LoadError("checkpoint tensor " + src.name + " " + shape_to_string(src.value.shape()) +
                      " does not match " + params[i].name + " " +
                      shape_to_string(params[i].var->value.shape()));
    }
    params[i].var->value = src.value;
  }
  return net;
}

}  // namespace mfrnet

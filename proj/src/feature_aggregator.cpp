#include "mfrnet/feature_aggregator.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>
#include <random>

#include "mfrnet/file_util.hpp"
#include "mfrnet/kernels.hpp"

namespace mfrnet {
namespace {

constexpr char kWeightsMagic[] = "MFRNET-WTS-1";
constexpr std::size_t kWeightsMagicLen = sizeof(kWeightsMagic) - 1;

// ImageNet statistics used by the torchvision VGG16 weights.
constexpr std::array<double, 3> kImageNetMean{0.485, 0.456, 0.406};
constexpr std::array<double, 3> kImageNetStd{0.229, 0.224, 0.225};

class ByteReader {
 public:
  ByteReader(const std::string& data, const std::string& path) : data_(data), path_(path) {}

  template <typename T>
  T read() {
    T v;
    take(&v, sizeof(T));
    return v;
  }
  void take(void* dst, std::size_t n) {
    if (pos_ + n > data_.size()) throw LoadError(path_ + ": truncated weights file");
    std::memcpy(dst, data_.data() + pos_, n);
    pos_ += n;
  }
  bool done() const { return pos_ == data_.size(); }

 private:
  const std::string& data_;
  const std::string& path_;
  std::size_t pos_ = 0;
};

template <typename T>
void append(std::string& out, T v) {
  out.append(reinterpret_cast<const char*>(&v), sizeof(T));
}

}  // namespace

void BackboneConfig::validate() const {
  const auto layout = backbone_layout(architecture);
  if (layer_indices.empty()) throw ConfigError("backbone: layer_indices is empty");
  for (std::size_t i = 0; i < layer_indices.size(); ++i) {
    if (i > 0 && layer_indices[i] <= layer_indices[i - 1]) {
      throw ConfigError("backbone: layer_indices must be strictly increasing");
    }
    if (layer_indices[i] < 1 || layer_indices[i] > static_cast<int>(layout.size())) {
      throw ConfigError("backbone: tap " + std::to_string(layer_indices[i]) + " is beyond the " +
                        std::to_string(layout.size()) + " blocks of " + architecture);
    }
  }
  if (!frozen) throw ConfigError("backbone: parameters are always frozen");
  if (weights_source.empty()) throw ConfigError("backbone: weights_source is empty");
}

std::vector<BackboneBlockSpec> backbone_layout(const std::string& architecture) {
  if (architecture == "vgg16") return {{2, 64}, {2, 128}, {3, 256}, {3, 512}, {3, 512}};
  if (architecture == "toy") return {{1, 8}, {1, 16}, {1, 32}};
  throw ConfigError("backbone: unknown architecture '" + architecture + "'");
}

std::vector<std::string> backbone_weight_names(const std::string& architecture) {
  // Sequential indices as in torchvision: conv, relu per conv; pool per block.
  std::vector<std::string> names;
  int idx = 0;
  for (const auto& block : backbone_layout(architecture)) {
    for (int c = 0; c < block.conv_count; ++c) {
      names.push_back("features." + std::to_string(idx) + ".weight");
      names.push_back("features." + std::to_string(idx) + ".bias");
      idx += 2;
    }
    idx += 1;
  }
  return names;
}

Backbone::Backbone(BackboneConfig config) : config_(std::move(config)) {
  config_.validate();
  layout_ = backbone_layout(config_.architecture);
  const int depth = config_.layer_indices.back();

  std::map<std::string, Tensor> loaded;
  const bool random = config_.weights_source == kRandomFrozen;
  if (!random) {
    for (auto& t : read_weights_file(config_.weights_source)) loaded[t.name] = std::move(t.value);
    if (config_.architecture == "vgg16") {
      mean_ = kImageNetMean;
      stddev_ = kImageNetStd;
    }
  }

  std::mt19937_64 rng(config_.seed);
  const auto names = backbone_weight_names(config_.architecture);
  std::size_t name_idx = 0;
  int in_ch = 3;
  for (int b = 0; b < depth; ++b) {
    std::vector<Conv> convs;
    const auto& spec = layout_[static_cast<std::size_t>(b)];
    for (int c = 0; c < spec.conv_count; ++c) {
      const Shape wshape{spec.channels, in_ch, 3, 3};
      Conv conv;
      if (random) {
        // He-normal keeps activation scale roughly constant through ReLUs.
        std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / (in_ch * 9)));
        conv.weight = Tensor(wshape);
        for (double& v : conv.weight.values()) v = dist(rng);
        conv.bias = Tensor({spec.channels});
      } else {
        const std::string& wn = names[name_idx];
        const std::string& bn = names[name_idx + 1];
        auto wi = loaded.find(wn);
        auto bi = loaded.find(bn);
        if (wi == loaded.end() || bi == loaded.end()) {
          throw LoadError(config_.weights_source + ": missing tensor " +
                          (wi == loaded.end() ? wn : bn));
        }
        if (wi->second.shape() != wshape || bi->second.shape() != Shape{spec.channels}) {
          throw LoadError(config_.weights_source + ": tensor " + wn + " has shape " +
                          shape_to_string(wi->second.shape()) + ", expected " +
                          shape_to_string(wshape));
        }
        conv.weight = wi->second;
        conv.bias = bi->second;
      }
      name_idx += 2;
      convs.push_back(std::move(conv));
      in_ch = spec.channels;
    }
    blocks_.push_back(std::move(convs));
  }
}

std::vector<FeatureMap> Backbone::extract(const ImageTensor& image) const {
  const Tensor& px = image.pixels;
  if (px.rank() != 3 || px.channels() != 3) {
    throw ArgumentError("extract_features: image must be [3, H, W], got " +
                        shape_to_string(px.shape()));
  }
  Tensor x = px;
  for (int c = 0; c < 3; ++c) {
    for (double& v : x.plane(c)) v = (v - mean_[static_cast<std::size_t>(c)]) / stddev_[static_cast<std::size_t>(c)];
  }
  std::vector<FeatureMap> taps;
  const int depth = config_.layer_indices.back();
  for (int b = 0; b < depth; ++b) {
    if (b > 0) x = kernels::max_pool2(x);
    for (const Conv& conv : blocks_[static_cast<std::size_t>(b)]) {
      x = kernels::relu(kernels::conv2d(x, conv.weight, conv.bias, kernels::Conv2dSpec{1, 1, 1}));
    }
    if (std::find(config_.layer_indices.begin(), config_.layer_indices.end(), b + 1) !=
        config_.layer_indices.end()) {
      taps.push_back(x);
    }
  }
  return taps;
}

std::vector<int> Backbone::tap_channels() const {
  std::vector<int> ch;
  for (int l : config_.layer_indices) ch.push_back(layout_[static_cast<std::size_t>(l - 1)].channels);
  return ch;
}

std::uint64_t Backbone::checksum() const {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](const Tensor& t) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(t.data());
    for (std::size_t i = 0; i < t.size() * sizeof(double); ++i) {
      h ^= bytes[i];
      h *= 1099511628211ULL;
    }
  };
  for (const auto& block : blocks_) {
    for (const auto& conv : block) {
      mix(conv.weight);
      mix(conv.bias);
    }
  }
  return h;
}

std::vector<FeatureMap> extract_features(const ImageTensor& image, const Backbone& backbone) {
  return backbone.extract(image);
}

FeatureMap aggregate(const std::vector<FeatureMap>& maps, std::pair<int, int> target) {
  if (maps.empty()) throw ArgumentError("aggregate: empty list of feature maps");
  const auto [h, w] = target;
  if (h <= 0 || w <= 0) throw ArgumentError("aggregate: target size must be positive");
  int channels = 0;
  for (const auto& m : maps) {
    require_feature_map(m, "aggregate input");
    channels += m.channels();
  }
  FeatureMap out({channels, h, w});
  std::size_t offset = 0;
  for (const auto& m : maps) {
    const Tensor r = kernels::bilinear_resize(m, h, w);
    std::copy(r.storage().begin(), r.storage().end(), out.storage().begin() + static_cast<std::ptrdiff_t>(offset));
    offset += r.size();
  }
  return out;
}

ChannelStats ChannelStats::compute(const std::vector<FeatureMap>& maps) {
  if (maps.empty()) throw ArgumentError("channel stats: no feature maps");
  const int channels = maps.front().channels();
  std::vector<double> sum(static_cast<std::size_t>(channels), 0.0);
  std::vector<double> sq(static_cast<std::size_t>(channels), 0.0);
  double count = 0.0;
  for (const auto& m : maps) {
    require_feature_map(m, "channel stats input");
    if (m.channels() != channels) {
      throw ArgumentError("channel stats: inconsistent channel counts " + std::to_string(channels) +
                          " vs " + std::to_string(m.channels()));
    }
    for (int c = 0; c < channels; ++c) {
      for (double v : m.plane(c)) {
        sum[static_cast<std::size_t>(c)] += v;
        sq[static_cast<std::size_t>(c)] += v * v;
      }
    }
    count += static_cast<double>(m.height()) * m.width();
  }
  ChannelStats s;
  std::vector<double> var(static_cast<std::size_t>(channels));
  double mean_var = 0.0;
  for (int c = 0; c < channels; ++c) {
    const auto i = static_cast<std::size_t>(c);
    const double mu = sum[i] / count;
    var[i] = std::max(0.0, sq[i] / count - mu * mu);
    mean_var += var[i] / channels;
    s.mean.push_back(mu);
  }
  // Near-constant channels (e.g. ReLU units that never fire on normal data)
  // get a variance floor relative to the typical channel, so an unseen
  // activation cannot produce an unbounded z-score.
  const double floor = std::max(kVarianceFloor * mean_var, 1e-12);
  for (double v : var) s.stddev.push_back(std::sqrt(v + floor));
  return s;
}

ChannelStats ChannelStats::identity(int channels) {
  return {std::vector<double>(static_cast<std::size_t>(channels), 0.0),
          std::vector<double>(static_cast<std::size_t>(channels), 1.0)};
}

FeatureMap ChannelStats::normalize(const FeatureMap& x) const {
  require_feature_map(x, "normalize input");
  if (static_cast<std::size_t>(x.channels()) != mean.size()) {
    throw ArgumentError("normalize: feature map has " + std::to_string(x.channels()) +
                        " channels, statistics cover " + std::to_string(mean.size()));
  }
  FeatureMap out = x;
  for (int c = 0; c < x.channels(); ++c) {
    const double mu = mean[static_cast<std::size_t>(c)];
    const double sd = stddev[static_cast<std::size_t>(c)];
    for (double& v : out.plane(c)) v = (v - mu) / sd;
  }
  return out;
}

std::vector<NamedTensor> read_weights_file(const std::string& path) {
  const std::string data = read_file(path);
  ByteReader rd(data, path);
  char magic[kWeightsMagicLen];
  rd.take(magic, kWeightsMagicLen);
  if (std::memcmp(magic, kWeightsMagic, kWeightsMagicLen) != 0) {
    throw LoadError(path + ": not an MFRNET-WTS-1 weights file");
  }
  const auto count = rd.read<std::uint32_t>();
  std::vector<NamedTensor> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = rd.read<std::uint32_t>();
    if (name_len > 4096) throw LoadError(path + ": corrupt tensor name");
    std::string name(name_len, '\0');
    rd.take(name.data(), name_len);
    const auto rank = rd.read<std::uint32_t>();
    if (rank > 8) throw LoadError(path + ": corrupt tensor rank for " + name);
    Shape shape(rank);
    for (auto& d : shape) {
      d = rd.read<std::int32_t>();
      if (d < 0) throw LoadError(path + ": negative extent in " + name);
    }
    const std::size_t n = shape_numel(shape);
    std::vector<float> raw(n);
    rd.take(raw.data(), n * sizeof(float));
    std::vector<double> values(raw.begin(), raw.end());
    out.push_back({std::move(name), Tensor(std::move(shape), std::move(values))});
  }
  if (!rd.done()) throw LoadError(path + ": trailing bytes after last tensor");
  return out;
}

void write_weights_file(const std::string& path, const std::vector<NamedTensor>& tensors) {
  std::string out(kWeightsMagic, kWeightsMagicLen);
  append<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    append<std::uint32_t>(out, static_cast<std::uint32_t>(t.name.size()));
    out += t.name;
    append<std::uint32_t>(out, static_cast<std::uint32_t>(t.value.rank()));
    for (int d : t.value.shape()) append<std::int32_t>(out, d);
    for (double v : t.value.values()) append<float>(out, static_cast<float>(v));
  }
  atomic_write_file(path, out);
}

}  // namespace mfrnet

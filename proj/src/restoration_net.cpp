#include "mfrnet/restoration_net.hpp"

#include <cmath>
#include <random>

namespace mfrnet {
namespace {

Tensor truncated_normal(Shape shape, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  Tensor t(std::move(shape));
  for (double& v : t.values()) {
    double z;
    do {
      z = dist(rng);
    } while (std::abs(z) > 2.0);
    v = z * stddev;
  }
  return t;
}

// U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
Tensor fan_in_uniform(Shape shape, int fan_in, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = dist(rng);
  return t;
}

}  // namespace

ag::Var lpa(const ag::Var& x, const ag::Var& weight, const ag::Var& bias) {
  return ag::add(x, ag::conv2d(x, weight, bias, kernels::Conv2dSpec{1, 1, 1}));
}

ag::Var cffn(const ag::Var& x, const FeedForwardWeights& w) {
  using kernels::Conv2dSpec;
  const int hidden = w.in_w->value.dim(0);
  ag::Var f = ag::gelu(ag::conv2d(x, w.in_w, w.in_b, Conv2dSpec{1, 0, 1}));
  f = ag::gelu(ag::conv2d(f, w.dw_w, w.dw_b, Conv2dSpec{1, 1, hidden}));
  return ag::conv2d(f, w.out_w, w.out_b, Conv2dSpec{1, 0, 1});
}

void RestorationNetConfig::validate() const {
  if (in_channels <= 0) throw ConfigError("restoration net: in_channels must be positive");
  if (base_channels <= 0) throw ConfigError("restoration net: base_channels must be positive");
  if (pooling_ratios.empty()) throw ConfigError("restoration net: pooling_ratios is empty");
  for (int r : pooling_ratios) {
    if (r < 1) throw ConfigError("restoration net: pooling ratios must be >= 1");
  }
  for (int c : stage_block_counts) {
    if (c < 0) throw ConfigError("restoration net: negative block count");
  }
  const auto& m = stage_channel_multipliers;
  if (m[0] <= 0 || m[1] != 2 * m[0] || m[2] != 2 * m[1] || m[3] != m[1] || m[4] != m[0]) {
    throw ConfigError(
        "restoration net: channel multipliers must double over stages 1-3 and mirror back, "
        "e.g. [1,2,4,2,1]");
  }
  if (ffn_expansion < 1) throw ConfigError("restoration net: ffn_expansion must be >= 1");
  if (!(layer_norm_eps > 0.0)) throw ConfigError("restoration net: layer_norm_eps must be > 0");
}

RestorationNet::RestorationNet(RestorationNetConfig config, std::uint64_t init_seed)
    : config_(std::move(config)) {
  config_.validate();
  std::mt19937_64 rng(init_seed);
  const int cin = config_.in_channels;
  const int c0 = config_.stage_channels(0);

  head_w_ = add_param("head.weight", fan_in_uniform({c0, cin, 3, 3}, cin * 9, rng));
  head_b_ = add_param("head.bias", Tensor({c0}));

  for (int s = 0; s < 5; ++s) {
    const int d = config_.stage_channels(s);
    const int hidden = d * config_.ffn_expansion;
    for (int i = 0; i < config_.stage_block_counts[static_cast<std::size_t>(s)]; ++i) {
      const std::string p = "stage" + std::to_string(s + 1) + ".block" + std::to_string(i) + ".";
      Block b;
      b.lpa_w = add_param(p + "lpa.weight", fan_in_uniform({d, d, 3, 3}, d * 9, rng));
      b.lpa_b = add_param(p + "lpa.bias", Tensor({d}));
      b.ln1_g = add_param(p + "norm1.weight", Tensor({d}, 1.0));
      b.ln1_b = add_param(p + "norm1.bias", Tensor({d}));
      b.wq = add_param(p + "attn.q", truncated_normal({d, d}, 0.02, rng));
      b.wk = add_param(p + "attn.k", truncated_normal({d, d}, 0.02, rng));
      b.wv = add_param(p + "attn.v", truncated_normal({d, d}, 0.02, rng));
      b.ln2_g = add_param(p + "norm2.weight", Tensor({d}, 1.0));
      b.ln2_b = add_param(p + "norm2.bias", Tensor({d}));
      b.ffn.in_w = add_param(p + "ffn.in.weight", truncated_normal({hidden, d, 1, 1}, 0.02, rng));
      b.ffn.in_b = add_param(p + "ffn.in.bias", Tensor({hidden}));
      b.ffn.dw_w = add_param(p + "ffn.dw.weight", fan_in_uniform({hidden, 1, 3, 3}, 9, rng));
      b.ffn.dw_b = add_param(p + "ffn.dw.bias", Tensor({hidden}));
      b.ffn.out_w = add_param(p + "ffn.out.weight", truncated_normal({d, hidden, 1, 1}, 0.02, rng));
      b.ffn.out_b = add_param(p + "ffn.out.bias", Tensor({d}));
      stages_[static_cast<std::size_t>(s)].push_back(std::move(b));
    }
    if (s < 2) {
      const int dn = config_.stage_channels(s + 1);
      const std::string p = "down" + std::to_string(s + 1) + ".";
      down_w_[static_cast<std::size_t>(s)] = add_param(p + "weight", fan_in_uniform({dn, d, 3, 3}, d * 9, rng));
      down_b_[static_cast<std::size_t>(s)] = add_param(p + "bias", Tensor({dn}));
    }
    if (s >= 2 && s < 4) {
      const int dn = config_.stage_channels(s + 1);
      const std::string p = "up" + std::to_string(s - 1) + ".";
      up_w_[static_cast<std::size_t>(s - 2)] = add_param(p + "weight", fan_in_uniform({d, dn, 2, 2}, d * 4, rng));
      up_b_[static_cast<std::size_t>(s - 2)] = add_param(p + "bias", Tensor({dn}));
    }
  }

  tail_w_ = add_param("tail.weight", fan_in_uniform({cin, c0, 3, 3}, c0 * 9, rng));
  tail_b_ = add_param("tail.bias", Tensor({cin}));
}

ag::Var RestorationNet::add_param(const std::string& name, Tensor value) {
  auto v = ag::parameter(std::move(value));
  params_.push_back({name, v});
  return v;
}

const ag::Var& RestorationNet::parameter(const std::string& name) const {
  for (const auto& p : params_) {
    if (p.name == name) return p.var;
  }
  throw ArgumentError("restoration net: no parameter named " + name);
}

std::size_t RestorationNet::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.var->value.size();
  return n;
}

void RestorationNet::zero_grad() {
  for (auto& p : params_) p.var->grad = Tensor();
}

std::uint64_t RestorationNet::checksum() const {
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto& p : params_) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(p.var->value.data());
    for (std::size_t i = 0; i < p.var->value.size() * sizeof(double); ++i) {
      h ^= bytes[i];
      h *= 1099511628211ULL;
    }
  }
  return h;
}

ag::Var RestorationNet::run_block(const Block& b, const ag::Var& x, ForwardTrace* trace) const {
  ag::Var h = lpa(x, b.lpa_w, b.lpa_b);

  Tensor* attn = nullptr;
  if (trace && trace->capture_attention) {
    trace->attention.emplace_back();
    attn = &trace->attention.back();
  }
  ag::Var normed = ag::layer_norm(h, b.ln1_g, b.ln1_b, config_.layer_norm_eps);
  h = ag::add(h, ag::pooled_attention(normed, b.wq, b.wk, b.wv, config_.pooling_ratios, attn));

  normed = ag::layer_norm(h, b.ln2_g, b.ln2_b, config_.layer_norm_eps);
  return ag::add(h, cffn(normed, b.ffn));
}

ag::Var RestorationNet::run_stage(int stage, ag::Var x, ForwardTrace* trace) const {
  for (const Block& b : stages_[static_cast<std::size_t>(stage)]) x = run_block(b, x, trace);
  if (trace) trace->stage_outputs.push_back(x->value.shape());
  return x;
}

ag::Var RestorationNet::forward(const ag::Var& masked, ForwardTrace* trace) const {
  using kernels::Conv2dSpec;
  const Tensor& in = masked->value;
  require_feature_map(in, "restoration net input");
  if (in.channels() != config_.in_channels) {
    throw ArgumentError("restoration net: expected " + std::to_string(config_.in_channels) +
                        " input channels, got " + std::to_string(in.channels()));
  }
  if (in.height() % 4 != 0 || in.width() % 4 != 0) {
    throw ArgumentError("restoration net: spatial size " + shape_to_string(in.shape()) +
                        " must be divisible by 4");
  }

  ag::Var x = ag::conv2d(masked, head_w_, head_b_, Conv2dSpec{1, 1, 1});
  ag::Var s1 = run_stage(0, x, trace);
  x = ag::conv2d(s1, down_w_[0], down_b_[0], Conv2dSpec{2, 1, 1});
  ag::Var s2 = run_stage(1, x, trace);
  if (trace && trace->bypass_inner_stages) {
    x = ag::conv_transpose2x2(s2, up_w_[1], up_b_[1]);
    x = ag::add(x, s1);
  } else {
    x = ag::conv2d(s2, down_w_[1], down_b_[1], Conv2dSpec{2, 1, 1});
    x = run_stage(2, x, trace);
    x = ag::add(ag::conv_transpose2x2(x, up_w_[0], up_b_[0]), s2);
    x = run_stage(3, x, trace);
    x = ag::add(ag::conv_transpose2x2(x, up_w_[1], up_b_[1]), s1);
    x = run_stage(4, x, trace);
  }
  return ag::conv2d(x, tail_w_, tail_b_, Conv2dSpec{1, 1, 1});
}

FeatureMap RestorationNet::restore(const FeatureMap& masked) const {
  ag::NoGradGuard guard;
  return forward(ag::constant(masked))->value;
}

}  // namespace mfrnet

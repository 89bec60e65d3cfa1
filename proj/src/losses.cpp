#include "mfrnet/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace mfrnet {
namespace {

// Uniform (2r+1)^2 mean filter with edge replication, separable.
std::vector<double> box_filter(std::span<const double> in, int h, int w, int r) {
  const double inv = 1.0 / (2 * r + 1);
  std::vector<double> tmp(in.size()), out(in.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      for (int d = -r; d <= r; ++d) s += in[static_cast<std::size_t>(y * w + std::clamp(x + d, 0, w - 1))];
      tmp[static_cast<std::size_t>(y * w + x)] = s * inv;
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      for (int d = -r; d <= r; ++d) s += tmp[static_cast<std::size_t>(std::clamp(y + d, 0, h - 1) * w + x)];
      out[static_cast<std::size_t>(y * w + x)] = s * inv;
    }
  }
  return out;
}

std::vector<double> box_filter_adjoint(std::span<const double> g, int h, int w, int r) {
  const double inv = 1.0 / (2 * r + 1);
  std::vector<double> tmp(g.size(), 0.0), out(g.size(), 0.0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double v = g[static_cast<std::size_t>(y * w + x)] * inv;
      for (int d = -r; d <= r; ++d) tmp[static_cast<std::size_t>(std::clamp(y + d, 0, h - 1) * w + x)] += v;
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double v = tmp[static_cast<std::size_t>(y * w + x)] * inv;
      for (int d = -r; d <= r; ++d) out[static_cast<std::size_t>(y * w + std::clamp(x + d, 0, w - 1))] += v;
    }
  }
  return out;
}

// "Same" 3x3 correlation with zero padding.
std::vector<double> correlate3x3(std::span<const double> in, int h, int w,
                                 const std::array<double, 9>& k) {
  std::vector<double> out(in.size(), 0.0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      for (int dy = -1; dy <= 1; ++dy) {
        const int yy = y + dy;
        if (yy < 0 || yy >= h) continue;
        for (int dx = -1; dx <= 1; ++dx) {
          const int xx = x + dx;
          if (xx < 0 || xx >= w) continue;
          s += k[static_cast<std::size_t>((dy + 1) * 3 + dx + 1)] * in[static_cast<std::size_t>(yy * w + xx)];
        }
      }
      out[static_cast<std::size_t>(y * w + x)] = s;
    }
  }
  return out;
}

std::vector<double> correlate3x3_adjoint(std::span<const double> g, int h, int w,
                                         const std::array<double, 9>& k) {
  std::vector<double> out(g.size(), 0.0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double v = g[static_cast<std::size_t>(y * w + x)];
      for (int dy = -1; dy <= 1; ++dy) {
        const int yy = y + dy;
        if (yy < 0 || yy >= h) continue;
        for (int dx = -1; dx <= 1; ++dx) {
          const int xx = x + dx;
          if (xx < 0 || xx >= w) continue;
          out[static_cast<std::size_t>(yy * w + xx)] += k[static_cast<std::size_t>((dy + 1) * 3 + dx + 1)] * v;
        }
      }
    }
  }
  return out;
}

void check_pair(const FeatureMap& x, const FeatureMap& y, const char* what) {
  require_feature_map(x, what);
  require_same_shape(x, y, what);
}

// Evaluates the channel-averaged SSIM map and, when `weights` is non-null,
// the gradient of sum_p weights(p) * map(p) with respect to y.
Tensor ssim_impl(const FeatureMap& x, const FeatureMap& y, const LossConfig& cfg,
                 const Tensor* weights, Tensor* dy) {
  check_pair(x, y, "ssim_map");
  cfg.validate();
  const int h = x.height(), w = x.width(), c_count = x.channels();
  if (h < cfg.ssim_window || w < cfg.ssim_window) {
    throw ArgumentError("ssim_map: spatial size " + std::to_string(h) + "x" + std::to_string(w) +
                        " is smaller than the window " + std::to_string(cfg.ssim_window));
  }
  const int r = cfg.ssim_window / 2;
  const std::size_t npix = static_cast<std::size_t>(h) * w;
  const double a1 = cfg.ssim_a1, a2 = cfg.ssim_a2;
  Tensor map({h, w});
  if (dy) *dy = Tensor::zeros_like(y);
  std::vector<double> xx(npix), yy(npix), xy(npix);
  std::vector<double> g_mu(npix), g_eyy(npix), g_exy(npix);
  for (int c = 0; c < c_count; ++c) {
    auto px = x.plane(c);
    auto py = y.plane(c);
    for (std::size_t p = 0; p < npix; ++p) {
      xx[p] = px[p] * px[p];
      yy[p] = py[p] * py[p];
      xy[p] = px[p] * py[p];
    }
    const auto mx = box_filter(px, h, w, r);
    const auto my = box_filter(py, h, w, r);
    const auto exx = box_filter(xx, h, w, r);
    const auto eyy = box_filter(yy, h, w, r);
    const auto exy = box_filter(xy, h, w, r);
    for (std::size_t p = 0; p < npix; ++p) {
      const double vx = exx[p] - mx[p] * mx[p];
      const double vy = eyy[p] - my[p] * my[p];
      const double cxy = exy[p] - mx[p] * my[p];
      const double n1 = 2.0 * mx[p] * my[p] + a1, n2 = 2.0 * cxy + a2;
      const double d1 = mx[p] * mx[p] + my[p] * my[p] + a1, d2 = vx + vy + a2;
      const double s = (n1 * n2) / (d1 * d2);
      map[p] += s / c_count;
      if (dy) {
        const double g = (*weights)[p] / c_count;
        const double ds_dmu = 2.0 * mx[p] * n2 / (d1 * d2) - s * 2.0 * my[p] / d1;
        const double ds_dvar = -s / d2;
        const double ds_dcov = 2.0 * n1 / (d1 * d2);
        g_mu[p] = g * (ds_dmu + ds_dvar * (-2.0 * my[p]) + ds_dcov * (-mx[p]));
        g_eyy[p] = g * ds_dvar;
        g_exy[p] = g * ds_dcov;
      }
    }
    if (dy) {
      const auto b_mu = box_filter_adjoint(g_mu, h, w, r);
      const auto b_eyy = box_filter_adjoint(g_eyy, h, w, r);
      const auto b_exy = box_filter_adjoint(g_exy, h, w, r);
      auto out = dy->plane(c);
      for (std::size_t p = 0; p < npix; ++p) {
        out[p] = b_mu[p] + 2.0 * py[p] * b_eyy[p] + px[p] * b_exy[p];
      }
    }
  }
  return map;
}

Tensor gms_impl(const FeatureMap& x, const FeatureMap& y, const LossConfig& cfg,
                const Tensor* weights, Tensor* dy) {
  check_pair(x, y, "gms_map");
  cfg.validate();
  const int h = x.height(), w = x.width(), c_count = x.channels();
  const std::size_t npix = static_cast<std::size_t>(h) * w;
  const auto& h1 = prewitt_horizontal();
  const auto& h2 = prewitt_vertical();
  Tensor map({h, w});
  if (dy) *dy = Tensor::zeros_like(y);
  std::vector<double> g1(npix), g2(npix);
  for (int c = 0; c < c_count; ++c) {
    auto px = x.plane(c);
    auto py = y.plane(c);
    const auto gx1 = correlate3x3(px, h, w, h1), gx2 = correlate3x3(px, h, w, h2);
    const auto gy1 = correlate3x3(py, h, w, h1), gy2 = correlate3x3(py, h, w, h2);
    for (std::size_t p = 0; p < npix; ++p) {
      const double sx = gx1[p] * gx1[p] + gx2[p] * gx2[p] + cfg.gms_eps;
      const double sy = gy1[p] * gy1[p] + gy2[p] * gy2[p] + cfg.gms_eps;
      const double mgx = std::sqrt(sx), mgy = std::sqrt(sy);
      const double num = 2.0 * mgx * mgy + cfg.gms_b;
      const double den = sx + sy + cfg.gms_b;
      map[p] += (num / den) / c_count;
      if (dy) {
        const double g = (*weights)[p] / c_count;
        const double d_mgy = (2.0 * mgx * den - num * 2.0 * mgy) / (den * den);
        const double k = g * d_mgy / mgy;
        g1[p] = k * gy1[p];
        g2[p] = k * gy2[p];
      }
    }
    if (dy) {
      const auto a1 = correlate3x3_adjoint(g1, h, w, h1);
      const auto a2 = correlate3x3_adjoint(g2, h, w, h2);
      auto out = dy->plane(c);
      for (std::size_t p = 0; p < npix; ++p) out[p] = a1[p] + a2[p];
    }
  }
  return map;
}

double mean_of_one_minus(const Tensor& map) {
  double s = 0.0;
  for (double v : map.values()) s += 1.0 - v;
  return s / static_cast<double>(map.size());
}

}  // namespace

void LossConfig::validate() const {
  if (ssim_window < 3 || ssim_window % 2 == 0) {
    throw ConfigError("loss: ssim_window must be odd and >= 3, got " + std::to_string(ssim_window));
  }
  if (!(ssim_a1 > 0.0) || !(ssim_a2 > 0.0) || !(gms_b > 0.0)) {
    throw ConfigError("loss: stabilizing constants a1, a2, b must be positive");
  }
  if (gms_eps < 0.0) throw ConfigError("loss: gms_eps must be non-negative");
}

double ssim_from_stats(double mean_x, double mean_y, double var_x, double var_y, double cov_xy,
                       double a1, double a2) {
  return ((2.0 * mean_x * mean_y + a1) * (2.0 * cov_xy + a2)) /
         ((mean_x * mean_x + mean_y * mean_y + a1) * (var_x + var_y + a2));
}

const std::array<double, 9>& prewitt_horizontal() {
  static const std::array<double, 9> k{1.0 / 3, 0.0, -1.0 / 3, 1.0 / 3, 0.0,
                                       -1.0 / 3, 1.0 / 3, 0.0, -1.0 / 3};
  return k;
}

const std::array<double, 9>& prewitt_vertical() {
  static const std::array<double, 9> k{1.0 / 3,  1.0 / 3,  1.0 / 3,  0.0,     0.0,
                                       0.0,      -1.0 / 3, -1.0 / 3, -1.0 / 3};
  return k;
}

double contextual_loss(const FeatureMap& target, const FeatureMap& recon) {
  check_pair(target, recon, "contextual_loss");
  double s = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    const double d = target[i] - recon[i];
    s += d * d;
  }
  return s / (static_cast<double>(target.height()) * target.width());
}

SimilarityMap ssim_map(const FeatureMap& x, const FeatureMap& y, const LossConfig& config) {
  return {ssim_impl(x, y, config, nullptr, nullptr), SimilarityKind::kSsim};
}

double ssim_loss(const FeatureMap& x, const FeatureMap& y, const LossConfig& config) {
  return mean_of_one_minus(ssim_map(x, y, config).values);
}

SimilarityMap gms_map(const FeatureMap& x, const FeatureMap& y, const LossConfig& config) {
  return {gms_impl(x, y, config, nullptr, nullptr), SimilarityKind::kGms};
}

double gms_loss(const FeatureMap& x, const FeatureMap& y, const LossConfig& config) {
  return mean_of_one_minus(gms_map(x, y, config).values);
}

HybridLoss hybrid_loss(const FeatureMap& target, const FeatureMap& recon, const LossConfig& config) {
  HybridLoss l;
  l.contextual = contextual_loss(target, recon);
  l.ssim = ssim_loss(target, recon, config);
  l.gms = gms_loss(target, recon, config);
  l.total = l.contextual + l.ssim + l.gms;
  return l;
}

Tensor squared_difference_map(const FeatureMap& x, const FeatureMap& y) {
  check_pair(x, y, "squared_difference_map");
  const std::size_t npix = static_cast<std::size_t>(x.height()) * x.width();
  Tensor map({x.height(), x.width()});
  for (int c = 0; c < x.channels(); ++c) {
    auto px = x.plane(c);
    auto py = y.plane(c);
    for (std::size_t p = 0; p < npix; ++p) {
      const double d = px[p] - py[p];
      map[p] += d * d / x.channels();
    }
  }
  return map;
}

ag::Var contextual_loss(const FeatureMap& target, const ag::Var& recon) {
  const double value = contextual_loss(target, recon->value);
  return ag::make_node(Tensor({1}, value), {recon}, [target](ag::Node& self) {
    const Tensor& r = self.parents[0]->value;
    const double scale = 2.0 * self.grad[0] / (static_cast<double>(r.height()) * r.width());
    Tensor g = Tensor::zeros_like(r);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = scale * (r[i] - target[i]);
    self.parents[0]->accumulate(g);
  });
}

ag::Var ssim_loss(const FeatureMap& target, const ag::Var& recon, const LossConfig& config) {
  const double value = ssim_loss(target, recon->value, config);
  return ag::make_node(Tensor({1}, value), {recon}, [target, config](ag::Node& self) {
    const Tensor& r = self.parents[0]->value;
    Tensor weights({r.height(), r.width()},
                   -self.grad[0] / (static_cast<double>(r.height()) * r.width()));
    Tensor g;
    ssim_impl(target, r, config, &weights, &g);
    self.parents[0]->accumulate(g);
  });
}

ag::Var gms_loss(const FeatureMap& target, const ag::Var& recon, const LossConfig& config) {
  const double value = gms_loss(target, recon->value, config);
  return ag::make_node(Tensor({1}, value), {recon}, [target, config](ag::Node& self) {
    const Tensor& r = self.parents[0]->value;
    Tensor weights({r.height(), r.width()},
                   -self.grad[0] / (static_cast<double>(r.height()) * r.width()));
    Tensor g;
    gms_impl(target, r, config, &weights, &g);
    self.parents[0]->accumulate(g);
  });
}

HybridLossVar hybrid_loss(const FeatureMap& target, const ag::Var& recon, const LossConfig& config) {
  auto con = contextual_loss(target, recon);
  auto ssim = ssim_loss(target, recon, config);
  auto gms = gms_loss(target, recon, config);
  HybridLossVar out;
  out.breakdown.contextual = con->value[0];
  out.breakdown.ssim = ssim->value[0];
  out.breakdown.gms = gms->value[0];
  out.total = ag::add(ag::add(con, ssim), gms);
  out.breakdown.total = out.total->value[0];
  return out;
}

}  // namespace mfrnet

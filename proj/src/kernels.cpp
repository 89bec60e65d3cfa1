#include "mfrnet/kernels.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numbers>

namespace mfrnet::kernels {
namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

int conv_out_extent(int in, int k, int stride, int pad) { return (in + 2 * pad - k) / stride + 1; }

void check_conv_args(const Tensor& x, const Tensor& weight, const Tensor& bias, Conv2dSpec spec) {
  require_feature_map(x, "conv2d input");
  if (weight.rank() != 4 || weight.dim(2) != weight.dim(3)) {
    throw ArgumentError("conv2d: weight must be [Co, Ci/g, k, k], got " +
                        shape_to_string(weight.shape()));
  }
  if (spec.groups < 1 || x.channels() % spec.groups != 0 || weight.dim(0) % spec.groups != 0 ||
      weight.dim(1) * spec.groups != x.channels()) {
    throw ArgumentError("conv2d: channel/group mismatch, input " + shape_to_string(x.shape()) +
                        " weight " + shape_to_string(weight.shape()));
  }
  if (!bias.empty() && (bias.rank() != 1 || bias.dim(0) != weight.dim(0))) {
    throw ArgumentError("conv2d: bias must be [Co]");
  }
  if (spec.stride < 1 || spec.padding < 0) throw ArgumentError("conv2d: bad stride/padding");
  if (conv_out_extent(x.height(), weight.dim(2), spec.stride, spec.padding) <= 0 ||
      conv_out_extent(x.width(), weight.dim(2), spec.stride, spec.padding) <= 0) {
    throw ArgumentError("conv2d: kernel larger than padded input");
  }
}

// Columns [cin * k * k, ho * wo] for channels [c0, c0 + cin).
void im2col(const Tensor& x, int c0, int cin, int k, Conv2dSpec spec, int ho, int wo,
            std::vector<double>& col) {
  const int h = x.height(), w = x.width();
  const std::size_t npix = static_cast<std::size_t>(ho) * wo;
  col.assign(static_cast<std::size_t>(cin) * k * k * npix, 0.0);
  for (int c = 0; c < cin; ++c) {
    const double* src = x.plane(c0 + c).data();
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        double* dst = col.data() + ((static_cast<std::size_t>(c) * k + ky) * k + kx) * npix;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * spec.stride - spec.padding + ky;
          if (iy < 0 || iy >= h) continue;
          const double* row = src + static_cast<std::size_t>(iy) * w;
          double* out = dst + static_cast<std::size_t>(oy) * wo;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * spec.stride - spec.padding + kx;
            if (ix >= 0 && ix < w) out[ox] = row[ix];
          }
        }
      }
    }
  }
}

void col2im_add(const std::vector<double>& col, int c0, int cin, int k, Conv2dSpec spec, int ho,
                int wo, Tensor& dx) {
  const int h = dx.height(), w = dx.width();
  const std::size_t npix = static_cast<std::size_t>(ho) * wo;
  for (int c = 0; c < cin; ++c) {
    double* dst = dx.plane(c0 + c).data();
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const double* src = col.data() + ((static_cast<std::size_t>(c) * k + ky) * k + kx) * npix;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * spec.stride - spec.padding + ky;
          if (iy < 0 || iy >= h) continue;
          double* row = dst + static_cast<std::size_t>(iy) * w;
          const double* in = src + static_cast<std::size_t>(oy) * wo;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * spec.stride - spec.padding + kx;
            if (ix >= 0 && ix < w) row[ix] += in[ox];
          }
        }
      }
    }
  }
}

bool is_depthwise(const Tensor& x, const Tensor& weight, Conv2dSpec spec) {
  return spec.groups == x.channels() && weight.dim(1) == 1 && weight.dim(0) == x.channels();
}

Tensor depthwise_conv(const Tensor& x, const Tensor& weight, const Tensor& bias, Conv2dSpec spec) {
  const int c_count = x.channels(), h = x.height(), w = x.width(), k = weight.dim(2);
  const int ho = conv_out_extent(h, k, spec.stride, spec.padding);
  const int wo = conv_out_extent(w, k, spec.stride, spec.padding);
  Tensor y({c_count, ho, wo});
  for (int c = 0; c < c_count; ++c) {
    const double* kern = weight.data() + static_cast<std::size_t>(c) * k * k;
    const double b = bias.empty() ? 0.0 : bias[c];
    for (int oy = 0; oy < ho; ++oy) {
      for (int ox = 0; ox < wo; ++ox) {
        double acc = b;
        for (int ky = 0; ky < k; ++ky) {
          const int iy = oy * spec.stride - spec.padding + ky;
          if (iy < 0 || iy >= h) continue;
          for (int kx = 0; kx < k; ++kx) {
            const int ix = ox * spec.stride - spec.padding + kx;
            if (ix < 0 || ix >= w) continue;
            acc += kern[ky * k + kx] * x.at(c, iy, ix);
          }
        }
        y.at(c, oy, ox) = acc;
      }
    }
  }
  return y;
}

Conv2dGrads depthwise_conv_backward(const Tensor& x, const Tensor& weight, const Tensor& dy,
                                    Conv2dSpec spec, bool need_dx) {
  const int c_count = x.channels(), h = x.height(), w = x.width(), k = weight.dim(2);
  const int ho = dy.height(), wo = dy.width();
  Conv2dGrads g{need_dx ? Tensor::zeros_like(x) : Tensor(), Tensor::zeros_like(weight),
                Tensor({weight.dim(0)})};
  for (int c = 0; c < c_count; ++c) {
    const double* kern = weight.data() + static_cast<std::size_t>(c) * k * k;
    double* dkern = g.dweight.data() + static_cast<std::size_t>(c) * k * k;
    double db = 0.0;
    for (int oy = 0; oy < ho; ++oy) {
      for (int ox = 0; ox < wo; ++ox) {
        const double go = dy.at(c, oy, ox);
        db += go;
        for (int ky = 0; ky < k; ++ky) {
          const int iy = oy * spec.stride - spec.padding + ky;
          if (iy < 0 || iy >= h) continue;
          for (int kx = 0; kx < k; ++kx) {
            const int ix = ox * spec.stride - spec.padding + kx;
            if (ix < 0 || ix >= w) continue;
            dkern[ky * k + kx] += go * x.at(c, iy, ix);
            if (need_dx) g.dx.at(c, iy, ix) += go * kern[ky * k + kx];
          }
        }
      }
    }
    g.dbias[c] = db;
  }
  return g;
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, Conv2dSpec spec) {
  check_conv_args(x, weight, bias, spec);
  if (is_depthwise(x, weight, spec)) return depthwise_conv(x, weight, bias, spec);

  const int k = weight.dim(2);
  const int ho = conv_out_extent(x.height(), k, spec.stride, spec.padding);
  const int wo = conv_out_extent(x.width(), k, spec.stride, spec.padding);
  const int cout = weight.dim(0), cin_g = weight.dim(1), cout_g = cout / spec.groups;
  const int npix = ho * wo, kdim = cin_g * k * k;

  Tensor y({cout, ho, wo});
  std::vector<double> col;
  for (int g = 0; g < spec.groups; ++g) {
    im2col(x, g * cin_g, cin_g, k, spec, ho, wo, col);
    ConstMatrixMap wmat(weight.data() + static_cast<std::size_t>(g) * cout_g * kdim, cout_g, kdim);
    ConstMatrixMap cmat(col.data(), kdim, npix);
    MatrixMap ymat(y.data() + static_cast<std::size_t>(g) * cout_g * npix, cout_g, npix);
    ymat.noalias() = wmat * cmat;
  }
  if (!bias.empty()) {
    for (int c = 0; c < cout; ++c) {
      for (double& v : y.plane(c)) v += bias[c];
    }
  }
  return y;
}

Conv2dGrads conv2d_backward(const Tensor& x, const Tensor& weight, const Tensor& dy,
                            Conv2dSpec spec, bool need_dx) {
  check_conv_args(x, weight, Tensor(), spec);
  if (is_depthwise(x, weight, spec)) return depthwise_conv_backward(x, weight, dy, spec, need_dx);

  const int k = weight.dim(2);
  const int ho = dy.height(), wo = dy.width();
  const int cout = weight.dim(0), cin_g = weight.dim(1), cout_g = cout / spec.groups;
  const int npix = ho * wo, kdim = cin_g * k * k;

  Conv2dGrads g{need_dx ? Tensor::zeros_like(x) : Tensor(), Tensor::zeros_like(weight),
                Tensor({cout})};
  std::vector<double> col;
  std::vector<double> dcol;
  for (int gi = 0; gi < spec.groups; ++gi) {
    im2col(x, gi * cin_g, cin_g, k, spec, ho, wo, col);
    ConstMatrixMap cmat(col.data(), kdim, npix);
    ConstMatrixMap dymat(dy.data() + static_cast<std::size_t>(gi) * cout_g * npix, cout_g, npix);
    MatrixMap dwmat(g.dweight.data() + static_cast<std::size_t>(gi) * cout_g * kdim, cout_g, kdim);
    dwmat.noalias() = dymat * cmat.transpose();
    if (need_dx) {
      ConstMatrixMap wmat(weight.data() + static_cast<std::size_t>(gi) * cout_g * kdim, cout_g,
                          kdim);
      dcol.assign(static_cast<std::size_t>(kdim) * npix, 0.0);
      MatrixMap dcmat(dcol.data(), kdim, npix);
      dcmat.noalias() = wmat.transpose() * dymat;
      col2im_add(dcol, gi * cin_g, cin_g, k, spec, ho, wo, g.dx);
    }
  }
  for (int c = 0; c < cout; ++c) {
    double s = 0.0;
    for (double v : dy.plane(c)) s += v;
    g.dbias[c] = s;
  }
  return g;
}

Tensor conv_transpose2x2(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  require_feature_map(x, "conv_transpose2x2 input");
  if (weight.rank() != 4 || weight.dim(0) != x.channels() || weight.dim(2) != 2 ||
      weight.dim(3) != 2) {
    throw ArgumentError("conv_transpose2x2: weight must be [Ci, Co, 2, 2], got " +
                        shape_to_string(weight.shape()));
  }
  const int cin = x.channels(), cout = weight.dim(1), h = x.height(), w = x.width();
  const int npix = h * w;
  // [Co*4, Ci] x [Ci, HW]
  ConstMatrixMap wmat(weight.data(), cin, cout * 4);
  ConstMatrixMap xmat(x.data(), cin, npix);
  RowMatrix prod = wmat.transpose() * xmat;
  Tensor y({cout, 2 * h, 2 * w});
  for (int co = 0; co < cout; ++co) {
    const double b = bias.empty() ? 0.0 : bias[co];
    for (int a = 0; a < 2; ++a) {
      for (int bb = 0; bb < 2; ++bb) {
        const double* row = prod.data() + static_cast<std::size_t>(co * 4 + a * 2 + bb) * npix;
        for (int iy = 0; iy < h; ++iy) {
          for (int ix = 0; ix < w; ++ix) {
            y.at(co, 2 * iy + a, 2 * ix + bb) = row[iy * w + ix] + b;
          }
        }
      }
    }
  }
  return y;
}

Conv2dGrads conv_transpose2x2_backward(const Tensor& x, const Tensor& weight, const Tensor& dy) {
  const int cin = x.channels(), cout = weight.dim(1), h = x.height(), w = x.width();
  const int npix = h * w;
  RowMatrix gathered(cout * 4, npix);
  Conv2dGrads g{Tensor(), Tensor::zeros_like(weight), Tensor({cout})};
  for (int co = 0; co < cout; ++co) {
    double db = 0.0;
    for (int a = 0; a < 2; ++a) {
      for (int bb = 0; bb < 2; ++bb) {
        double* row = gathered.data() + static_cast<std::size_t>(co * 4 + a * 2 + bb) * npix;
        for (int iy = 0; iy < h; ++iy) {
          for (int ix = 0; ix < w; ++ix) {
            const double v = dy.at(co, 2 * iy + a, 2 * ix + bb);
            row[iy * w + ix] = v;
            db += v;
          }
        }
      }
    }
    g.dbias[co] = db;
  }
  ConstMatrixMap wmat(weight.data(), cin, cout * 4);
  ConstMatrixMap xmat(x.data(), cin, npix);
  g.dx = Tensor::zeros_like(x);
  MatrixMap dxmat(g.dx.data(), cin, npix);
  dxmat.noalias() = wmat * gathered;
  MatrixMap dwmat(g.dweight.data(), cin, cout * 4);
  dwmat.noalias() = xmat * gathered.transpose();
  return g;
}

Tensor avg_pool(const Tensor& x, int ratio) {
  require_feature_map(x, "avg_pool input");
  if (ratio < 1 || ratio > x.height() || ratio > x.width()) {
    throw ConfigError("avg_pool: ratio " + std::to_string(ratio) + " invalid for spatial size " +
                      shape_to_string(x.shape()));
  }
  if (ratio == 1) return x;
  const int ho = x.height() / ratio, wo = x.width() / ratio;
  const double scale = 1.0 / (ratio * ratio);
  Tensor y({x.channels(), ho, wo});
  for (int c = 0; c < x.channels(); ++c) {
    for (int oy = 0; oy < ho; ++oy) {
      for (int ox = 0; ox < wo; ++ox) {
        double s = 0.0;
        for (int dy = 0; dy < ratio; ++dy) {
          for (int dx = 0; dx < ratio; ++dx) s += x.at(c, oy * ratio + dy, ox * ratio + dx);
        }
        y.at(c, oy, ox) = s * scale;
      }
    }
  }
  return y;
}

Tensor avg_pool_backward(const Tensor& dy, int ratio, int height, int width) {
  if (ratio == 1) return dy;
  Tensor dx({dy.channels(), height, width});
  const double scale = 1.0 / (ratio * ratio);
  for (int c = 0; c < dy.channels(); ++c) {
    for (int oy = 0; oy < dy.height(); ++oy) {
      for (int ox = 0; ox < dy.width(); ++ox) {
        const double g = dy.at(c, oy, ox) * scale;
        for (int a = 0; a < ratio; ++a) {
          for (int b = 0; b < ratio; ++b) dx.at(c, oy * ratio + a, ox * ratio + b) += g;
        }
      }
    }
  }
  return dx;
}

Tensor max_pool2(const Tensor& x) {
  const int ho = x.height() / 2, wo = x.width() / 2;
  Tensor y({x.channels(), ho, wo});
  for (int c = 0; c < x.channels(); ++c) {
    for (int oy = 0; oy < ho; ++oy) {
      for (int ox = 0; ox < wo; ++ox) {
        y.at(c, oy, ox) = std::max({x.at(c, 2 * oy, 2 * ox), x.at(c, 2 * oy, 2 * ox + 1),
                                    x.at(c, 2 * oy + 1, 2 * ox), x.at(c, 2 * oy + 1, 2 * ox + 1)});
      }
    }
  }
  return y;
}

Tensor relu(const Tensor& x) {
  Tensor y = x;
  for (double& v : y.values()) v = std::max(v, 0.0);
  return y;
}

Tensor bilinear_resize(const Tensor& x, int height, int width) {
  require_feature_map(x, "bilinear_resize input");
  if (height <= 0 || width <= 0) throw ArgumentError("bilinear_resize: target must be positive");
  if (height == x.height() && width == x.width()) return x;

  struct Tap {
    int lo, hi;
    double frac;
  };
  auto taps = [](int in, int out) {
    std::vector<Tap> t(static_cast<std::size_t>(out));
    const double scale = static_cast<double>(in) / out;
    for (int o = 0; o < out; ++o) {
      double src = (o + 0.5) * scale - 0.5;
      if (src < 0.0) src = 0.0;
      int lo = static_cast<int>(std::floor(src));
      if (lo > in - 1) lo = in - 1;
      const int hi = std::min(lo + 1, in - 1);
      t[static_cast<std::size_t>(o)] = {lo, hi, src - lo};
    }
    return t;
  };
  const auto ty = taps(x.height(), height);
  const auto tx = taps(x.width(), width);
  Tensor y({x.channels(), height, width});
  for (int c = 0; c < x.channels(); ++c) {
    for (int oy = 0; oy < height; ++oy) {
      const Tap& a = ty[static_cast<std::size_t>(oy)];
      for (int ox = 0; ox < width; ++ox) {
        const Tap& b = tx[static_cast<std::size_t>(ox)];
        const double top = x.at(c, a.lo, b.lo) * (1.0 - b.frac) + x.at(c, a.lo, b.hi) * b.frac;
        const double bot = x.at(c, a.hi, b.lo) * (1.0 - b.frac) + x.at(c, a.hi, b.hi) * b.frac;
        y.at(c, oy, ox) = top * (1.0 - a.frac) + bot * a.frac;
      }
    }
  }
  return y;
}

Tensor nearest_resize(const Tensor& x, int height, int width) {
  require_feature_map(x, "nearest_resize input");
  if (height <= 0 || width <= 0) throw ArgumentError("nearest_resize: target must be positive");
  Tensor y({x.channels(), height, width});
  for (int c = 0; c < x.channels(); ++c) {
    for (int oy = 0; oy < height; ++oy) {
      const int sy = std::min(static_cast<int>(static_cast<long>(oy) * x.height() / height),
                              x.height() - 1);
      for (int ox = 0; ox < width; ++ox) {
        const int sx =
            std::min(static_cast<int>(static_cast<long>(ox) * x.width() / width), x.width() - 1);
        y.at(c, oy, ox) = x.at(c, sy, sx);
      }
    }
  }
  return y;
}

Tensor gaussian_blur(const Tensor& x, double sigma) {
  require_feature_map(x, "gaussian_blur input");
  if (!(sigma > 0.0)) return x;
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> kern(static_cast<std::size_t>(2 * radius + 1));
  double norm = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    const double v = std::exp(-0.5 * i * i / (sigma * sigma));
    kern[static_cast<std::size_t>(i + radius)] = v;
    norm += v;
  }
  for (double& v : kern) v /= norm;

  const int h = x.height(), w = x.width();
  Tensor tmp = Tensor::zeros_like(x);
  Tensor y = Tensor::zeros_like(x);
  for (int c = 0; c < x.channels(); ++c) {
    for (int yy = 0; yy < h; ++yy) {
      for (int xx = 0; xx < w; ++xx) {
        double s = 0.0;
        for (int i = -radius; i <= radius; ++i) {
          const int sx = std::clamp(xx + i, 0, w - 1);
          s += kern[static_cast<std::size_t>(i + radius)] * x.at(c, yy, sx);
        }
        tmp.at(c, yy, xx) = s;
      }
    }
    for (int yy = 0; yy < h; ++yy) {
      for (int xx = 0; xx < w; ++xx) {
        double s = 0.0;
        for (int i = -radius; i <= radius; ++i) {
          const int sy = std::clamp(yy + i, 0, h - 1);
          s += kern[static_cast<std::size_t>(i + radius)] * tmp.at(c, sy, xx);
        }
        y.at(c, yy, xx) = s;
      }
    }
  }
  return y;
}

Tensor layer_norm_channels(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps,
                           LayerNormCache* cache) {
  require_feature_map(x, "layer_norm input");
  const int c_count = x.channels();
  if (gamma.size() != static_cast<std::size_t>(c_count) ||
      beta.size() != static_cast<std::size_t>(c_count)) {
    throw ArgumentError("layer_norm: affine parameters must have one entry per channel");
  }
  const std::size_t npix = static_cast<std::size_t>(x.height()) * x.width();
  Tensor y = Tensor::zeros_like(x);
  Tensor normalized = Tensor::zeros_like(x);
  std::vector<double> inv_std(npix);
  for (std::size_t p = 0; p < npix; ++p) {
    double mean = 0.0;
    for (int c = 0; c < c_count; ++c) mean += x[c * npix + p];
    mean /= c_count;
    double var = 0.0;
    for (int c = 0; c < c_count; ++c) {
      const double d = x[c * npix + p] - mean;
      var += d * d;
    }
    var /= c_count;
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[p] = is;
    for (int c = 0; c < c_count; ++c) {
      const double n = (x[c * npix + p] - mean) * is;
      normalized[c * npix + p] = n;
      y[c * npix + p] = n * gamma[static_cast<std::size_t>(c)] + beta[static_cast<std::size_t>(c)];
    }
  }
  if (cache) {
    cache->normalized = std::move(normalized);
    cache->inv_std = std::move(inv_std);
  }
  return y;
}

Conv2dGrads layer_norm_channels_backward(const LayerNormCache& cache, const Tensor& gamma,
                                         const Tensor& dy) {
  const Tensor& xn = cache.normalized;
  const int c_count = xn.channels();
  const std::size_t npix = static_cast<std::size_t>(xn.height()) * xn.width();
  Conv2dGrads g{Tensor::zeros_like(xn), Tensor({c_count}), Tensor({c_count})};
  for (std::size_t p = 0; p < npix; ++p) {
    double mean_g = 0.0, mean_gx = 0.0;
    for (int c = 0; c < c_count; ++c) {
      const std::size_t i = c * npix + p;
      const double gn = dy[i] * gamma[static_cast<std::size_t>(c)];
      mean_g += gn;
      mean_gx += gn * xn[i];
      g.dweight[static_cast<std::size_t>(c)] += dy[i] * xn[i];
      g.dbias[static_cast<std::size_t>(c)] += dy[i];
    }
    mean_g /= c_count;
    mean_gx /= c_count;
    for (int c = 0; c < c_count; ++c) {
      const std::size_t i = c * npix + p;
      const double gn = dy[i] * gamma[static_cast<std::size_t>(c)];
      g.dx[i] = cache.inv_std[p] * (gn - mean_g - xn[i] * mean_gx);
    }
  }
  return g;
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }

double gelu_derivative(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

}  // namespace mfrnet::kernels

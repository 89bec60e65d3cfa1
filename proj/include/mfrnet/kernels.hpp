#pragma once

// Forward and backward kernels on plain tensors. These carry no autograd
// bookkeeping; autograd.hpp wraps them into differentiable ops.

#include "mfrnet/tensor.hpp"

namespace mfrnet::kernels {

struct Conv2dSpec {
  int stride = 1;
  int padding = 0;
  int groups = 1;
};

// x: [Ci, H, W]; weight: [Co, Ci/groups, k, k]; bias: [Co] or empty.
// Zero padding.
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, Conv2dSpec spec);

struct Conv2dGrads {
  Tensor dx;
  Tensor dweight;
  Tensor dbias;
};
Conv2dGrads conv2d_backward(const Tensor& x, const Tensor& weight, const Tensor& dy,
                            Conv2dSpec spec, bool need_dx = true);

// Stride-2 transposed convolution with a 2x2 kernel.
// x: [Ci, H, W]; weight: [Ci, Co, 2, 2]; output [Co, 2H, 2W].
Tensor conv_transpose2x2(const Tensor& x, const Tensor& weight, const Tensor& bias);
Conv2dGrads conv_transpose2x2_backward(const Tensor& x, const Tensor& weight, const Tensor& dy);

// Non-overlapping average pooling with window = stride = ratio; trailing
// rows/columns that do not fill a window are dropped (floor division).
Tensor avg_pool(const Tensor& x, int ratio);
// Adjoint of avg_pool: scatters pooled gradients back to [C, H, W].
Tensor avg_pool_backward(const Tensor& dy, int ratio, int height, int width);

Tensor max_pool2(const Tensor& x);
Tensor relu(const Tensor& x);

// Bilinear resize of every channel, half-pixel centres (align_corners off).
Tensor bilinear_resize(const Tensor& x, int height, int width);

// Nearest-neighbour resize (used for binary masks).
Tensor nearest_resize(const Tensor& x, int height, int width);

// Separable Gaussian blur with edge replication, radius ceil(3 sigma).
Tensor gaussian_blur(const Tensor& x, double sigma);

// LayerNorm over the channel axis at each spatial position.
struct LayerNormCache {
  Tensor normalized;  // (x - mean) / std
  std::vector<double> inv_std;
};
Tensor layer_norm_channels(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps,
                           LayerNormCache* cache);
Conv2dGrads layer_norm_channels_backward(const LayerNormCache& cache, const Tensor& gamma,
                                         const Tensor& dy);

double gelu(double x);
double gelu_derivative(double x);

}  // namespace mfrnet::kernels

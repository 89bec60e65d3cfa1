#pragma once

// Minimal reverse-mode automatic differentiation over Tensor values.
//
// A Var is a shared handle to a graph node. Leaves created with parameter()
// accumulate gradients across backward() calls until zero_grad(); interior
// nodes are released when the last Var referring to them goes away.

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "mfrnet/kernels.hpp"
#include "mfrnet/tensor.hpp"

namespace mfrnet::ag {

struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  void accumulate(const Tensor& g);
};

using Var = std::shared_ptr<Node>;

// While alive, make_node() records no parents or backward closures on this
// thread, so inference does not retain activations.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};
bool grad_enabled();

Var constant(Tensor value);
Var parameter(Tensor value);

// Builds an interior node; requires_grad is inherited from the parents.
Var make_node(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backward_fn);

// Seeds d(root)/d(root) = 1 (root must hold one element) and propagates.
void backward(const Var& root);

Var add(const Var& a, const Var& b);
Var scale(const Var& x, double s);
// Multiplies every channel of x by a constant [H, W] (or [1, H, W]) mask.
Var mul_mask(const Var& x, const Tensor& mask);
Var gelu(const Var& x);
Var conv2d(const Var& x, const Var& weight, const Var& bias, kernels::Conv2dSpec spec);
Var conv_transpose2x2(const Var& x, const Var& weight, const Var& bias);
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps);

// Single-head attention whose keys and values come from the token-axis
// concatenation of average-pooled copies of x, one per ratio:
//   Softmax(Q K^T / sqrt(d)) V,  Q = wq x,  K = wk z',  V = wv z'.
// x is [D, H, W]; projections are [D_out, D_in] acting on the channel axis. If
// `attention` is non-null it receives the [H*W, M] row-stochastic matrix.
Var pooled_attention(const Var& x, const Var& wq, const Var& wk, const Var& wv,
                     std::span<const int> ratios, Tensor* attention = nullptr);

}  // namespace mfrnet::ag

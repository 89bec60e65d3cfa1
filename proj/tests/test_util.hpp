#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>

#include "mfrnet/tensor.hpp"

namespace mfrnet::testing {

inline Tensor random_tensor(Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = u(rng);
  return t;
}

// Central difference of f with respect to every entry of `x` (perturbed in
// place and restored).
inline Tensor numeric_gradient(Tensor& x, const std::function<double()>& f, double h = 1e-5) {
  Tensor g = Tensor::zeros_like(x);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + h;
    const double up = f();
    x[i] = saved - h;
    const double down = f();
    x[i] = saved;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

// ||a - b|| / max(||a||, ||b||, tiny).
inline double relative_error(const Tensor& a, const Tensor& b) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nb), 1e-300});
}

}  // namespace mfrnet::testing

#include "mfrnet/autograd.hpp"

namespace mfrnet::testing {

// Scalar sum(x * probe) as a differentiable node.
inline ag::Var dot_with(const ag::Var& x, const Tensor& probe) {
  double s = 0.0;
  for (std::size_t i = 0; i < probe.size(); ++i) s += x->value[i] * probe[i];
  return ag::make_node(Tensor({1}, s), {x}, [probe](ag::Node& self) {
    self.parents[0]->accumulate(probe * self.grad[0]);
  });
}

}  // namespace mfrnet::testing

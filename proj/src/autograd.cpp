#include "mfrnet/autograd.hpp"

#include <Eigen/Core>
#include <cmath>
#include <unordered_set>

namespace mfrnet::ag {
namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

void topo_visit(Node* n, std::unordered_set<Node*>& seen, std::vector<Node*>& order) {
  // Iterative post-order; graphs can be a few thousand nodes deep.
  std::vector<std::pair<Node*, std::size_t>> stack{{n, 0}};
  seen.insert(n);
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      Node* p = node->parents[idx++].get();
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
}

thread_local bool g_grad_enabled = true;

}  // namespace

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

void Node::accumulate(const Tensor& g) {
  if (grad.empty()) {
    grad = g;
  } else {
    grad += g;
  }
}

Var constant(Tensor value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  return n;
}

Var parameter(Tensor value) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  n->requires_grad = true;
  return n;
}

Var make_node(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backward_fn) {
  auto n = std::make_shared<Node>();
  n->value = std::move(value);
  if (!g_grad_enabled) return n;
  for (const auto& p : parents) n->requires_grad = n->requires_grad || p->requires_grad;
  if (n->requires_grad) {
    n->parents = std::move(parents);
    n->backward_fn = std::move(backward_fn);
  }
  return n;
}

void backward(const Var& root) {
  if (root->value.size() != 1) throw ArgumentError("backward: root must be a scalar");
  if (!root->requires_grad) return;
  std::unordered_set<Node*> seen;
  std::vector<Node*> order;
  topo_visit(root.get(), seen, order);
  root->accumulate(Tensor(root->value.shape(), 1.0));
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn && !n->grad.empty()) {
      n->backward_fn(*n);
      // Interior gradients are not needed once propagated.
      n->grad = Tensor();
    }
  }
}

Var add(const Var& a, const Var& b) {
  require_same_shape(a->value, b->value, "add");
  return make_node(a->value + b->value, {a, b}, [](Node& self) {
    for (auto& p : self.parents) {
      if (p->requires_grad) p->accumulate(self.grad);
    }
  });
}

Var scale(const Var& x, double s) {
  return make_node(x->value * s, {x}, [s](Node& self) {
    self.parents[0]->accumulate(self.grad * s);
  });
}

Var mul_mask(const Var& x, const Tensor& mask) {
  const Tensor& v = x->value;
  require_feature_map(v, "mul_mask input");
  const std::size_t npix = static_cast<std::size_t>(v.height()) * v.width();
  if (mask.size() != npix) {
    throw ArgumentError("mul_mask: mask " + shape_to_string(mask.shape()) +
                        " does not match spatial size of " + shape_to_string(v.shape()));
  }
  auto apply = [npix](const Tensor& in, const Tensor& m) {
    Tensor out = in;
    for (int c = 0; c < in.channels(); ++c) {
      auto plane = out.plane(c);
      for (std::size_t p = 0; p < npix; ++p) plane[p] *= m[p];
    }
    return out;
  };
  return make_node(apply(v, mask), {x}, [mask, apply](Node& self) {
    self.parents[0]->accumulate(apply(self.grad, mask));
  });
}

Var gelu(const Var& x) {
  Tensor y = x->value;
  for (double& v : y.values()) v = kernels::gelu(v);
  return make_node(std::move(y), {x}, [](Node& self) {
    const Tensor& in = self.parents[0]->value;
    Tensor g = self.grad;
    for (std::size_t i = 0; i < g.size(); ++i) g[i] *= kernels::gelu_derivative(in[i]);
    self.parents[0]->accumulate(g);
  });
}

Var conv2d(const Var& x, const Var& weight, const Var& bias, kernels::Conv2dSpec spec) {
  Tensor y = kernels::conv2d(x->value, weight->value, bias ? bias->value : Tensor(), spec);
  std::vector<Var> parents{x, weight};
  if (bias) parents.push_back(bias);
  return make_node(std::move(y), std::move(parents), [spec](Node& self) {
    auto& in = self.parents[0];
    auto& w = self.parents[1];
    auto g = kernels::conv2d_backward(in->value, w->value, self.grad, spec, in->requires_grad);
    if (in->requires_grad) in->accumulate(g.dx);
    if (w->requires_grad) w->accumulate(g.dweight);
    if (self.parents.size() > 2 && self.parents[2]->requires_grad) {
      self.parents[2]->accumulate(g.dbias);
    }
  });
}

Var conv_transpose2x2(const Var& x, const Var& weight, const Var& bias) {
  Tensor y = kernels::conv_transpose2x2(x->value, weight->value, bias ? bias->value : Tensor());
  std::vector<Var> parents{x, weight};
  if (bias) parents.push_back(bias);
  return make_node(std::move(y), std::move(parents), [](Node& self) {
    auto& in = self.parents[0];
    auto& w = self.parents[1];
    auto g = kernels::conv_transpose2x2_backward(in->value, w->value, self.grad);
    if (in->requires_grad) in->accumulate(g.dx);
    if (w->requires_grad) w->accumulate(g.dweight);
    if (self.parents.size() > 2 && self.parents[2]->requires_grad) {
      self.parents[2]->accumulate(g.dbias);
    }
  });
}

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
  auto cache = std::make_shared<kernels::LayerNormCache>();
  Tensor y = kernels::layer_norm_channels(x->value, gamma->value, beta->value, eps, cache.get());
  return make_node(std::move(y), {x, gamma, beta}, [cache](Node& self) {
    auto g = kernels::layer_norm_channels_backward(*cache, self.parents[1]->value, self.grad);
    if (self.parents[0]->requires_grad) self.parents[0]->accumulate(g.dx);
    if (self.parents[1]->requires_grad) self.parents[1]->accumulate(g.dweight);
    if (self.parents[2]->requires_grad) self.parents[2]->accumulate(g.dbias);
  });
}

Var pooled_attention(const Var& x, const Var& wq, const Var& wk, const Var& wv,
                     std::span<const int> ratios, Tensor* attention) {
  const Tensor& xv = x->value;
  require_feature_map(xv, "pooled_attention input");
  const int d = xv.channels(), h = xv.height(), w = xv.width(), n = h * w;
  for (const Var* p : {&wq, &wk, &wv}) {
    if ((*p)->value.shape() != Shape{d, d}) {
      throw ArgumentError("pooled_attention: projection must be [D, D] with D=" +
                          std::to_string(d));
    }
  }
  if (ratios.empty()) throw ConfigError("pooled_attention: no pooling ratios");

  // z' as a [D, M] matrix, columns are pooled tokens in ratio order.
  std::vector<int> ratio_list(ratios.begin(), ratios.end());
  std::vector<int> offsets;
  int m = 0;
  for (int r : ratio_list) {
    if (r < 1 || r > std::min(h, w)) {
      throw ConfigError("pooling ratio " + std::to_string(r) + " exceeds spatial size " +
                        std::to_string(h) + "x" + std::to_string(w));
    }
    offsets.push_back(m);
    m += (h / r) * (w / r);
  }
  RowMatrix pooled(d, m);
  for (std::size_t i = 0; i < ratio_list.size(); ++i) {
    Tensor p = kernels::avg_pool(xv, ratio_list[i]);
    const int cnt = p.height() * p.width();
    pooled.block(0, offsets[i], d, cnt) = ConstMatrixMap(p.data(), d, cnt);
  }

  ConstMatrixMap xmat(xv.data(), d, n);
  ConstMatrixMap q_w(wq->value.data(), d, d);
  ConstMatrixMap k_w(wk->value.data(), d, d);
  ConstMatrixMap v_w(wv->value.data(), d, d);
  RowMatrix q = q_w * xmat;     // [D, N]
  RowMatrix k = k_w * pooled;   // [D, M]
  RowMatrix v = v_w * pooled;   // [D, M]
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  RowMatrix a = (q.transpose() * k) * inv_sqrt_d;  // [N, M]
  for (int i = 0; i < n; ++i) {
    auto row = a.row(i);
    const double mx = row.maxCoeff();
    row = (row.array() - mx).exp();
    row /= row.sum();
  }
  Tensor out({d, h, w});
  MatrixMap(out.data(), d, n).noalias() = v * a.transpose();
  if (attention) {
    *attention = Tensor({n, m});
    MatrixMap(attention->data(), n, m) = a;
  }

  auto saved = std::make_shared<std::tuple<RowMatrix, RowMatrix, RowMatrix, RowMatrix, RowMatrix>>(
      std::move(pooled), std::move(q), std::move(k), std::move(v), std::move(a));
  return make_node(
      std::move(out), {x, wq, wk, wv},
      [saved, ratio_list, offsets, d, h, w, n, m, inv_sqrt_d](Node& self) {
        const auto& [zp, q, k, v, a] = *saved;
        ConstMatrixMap dout(self.grad.data(), d, n);
        RowMatrix dv = dout * a;                 // [D, M]
        RowMatrix da = dout.transpose() * v;     // [N, M]
        RowMatrix ds(n, m);
        for (int i = 0; i < n; ++i) {
          const double dot = da.row(i).dot(a.row(i));
          ds.row(i) = a.row(i).array() * (da.row(i).array() - dot);
        }
        ds *= inv_sqrt_d;
        RowMatrix dq = k * ds.transpose();       // [D, N]
        RowMatrix dk = q * ds;                   // [D, M]

        auto& xin = self.parents[0];
        ConstMatrixMap xmat(xin->value.data(), d, n);
        auto grad_of = [d](const RowMatrix& g) {
          Tensor t({d, d});
          MatrixMap(t.data(), d, d) = g;
          return t;
        };
        if (self.parents[1]->requires_grad) self.parents[1]->accumulate(grad_of(dq * xmat.transpose()));
        if (self.parents[2]->requires_grad) self.parents[2]->accumulate(grad_of(dk * zp.transpose()));
        if (self.parents[3]->requires_grad) self.parents[3]->accumulate(grad_of(dv * zp.transpose()));
        if (xin->requires_grad) {
          ConstMatrixMap q_w(self.parents[1]->value.data(), d, d);
          ConstMatrixMap k_w(self.parents[2]->value.data(), d, d);
          ConstMatrixMap v_w(self.parents[3]->value.data(), d, d);
          Tensor dx({d, h, w});
          MatrixMap(dx.data(), d, n).noalias() = q_w.transpose() * dq;
          RowMatrix dzp = k_w.transpose() * dk + v_w.transpose() * dv;  // [D, M]
          for (std::size_t i = 0; i < ratio_list.size(); ++i) {
            const int r = ratio_list[i];
            const int ph = h / r, pw = w / r;
            Tensor dp({d, ph, pw});
            MatrixMap(dp.data(), d, ph * pw) = dzp.block(0, offsets[i], d, ph * pw);
            dx += kernels::avg_pool_backward(dp, r, h, w);
          }
          xin->accumulate(dx);
        }
      });
}

}  // namespace mfrnet::ag

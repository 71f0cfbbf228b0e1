#include "ttm/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "ttm/kernels.hpp"

namespace ttm {

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << "x";
    os << s[i];
  }
  os << "]";
  return os.str();
}

std::size_t numel(const Shape& s) {
  std::size_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

namespace {

thread_local bool t_grad_enabled = true;

std::shared_ptr<TensorNode> make_node(Shape shape, std::vector<double> val) {
  auto n = std::make_shared<TensorNode>();
  n->shape = std::move(shape);
  n->val = std::move(val);
  return n;
}

// Builds an op output node; records graph edges only when gradients are
// enabled and some input requires them.
Tensor make_op(Shape shape, std::vector<double> val,
               std::initializer_list<Tensor> inputs,
               std::function<void(TensorNode&)> bp) {
  auto n = make_node(std::move(shape), std::move(val));
  bool req = false;
  for (const auto& t : inputs) req = req || t.requires_grad();
  if (t_grad_enabled && req) {
    n->requires_grad = true;
    for (const auto& t : inputs) n->parents.push_back(t.node());
    n->backprop = std::move(bp);
  }
  return Tensor(n);
}

void acc(TensorNode& p, const double* g, std::size_t n) {
  if (!p.requires_grad) return;
  p.ensure_grad();
  for (std::size_t i = 0; i < n; ++i) p.grad[i] += g[i];
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw DimensionError(std::string(op) + ": shapes " + shape_str(a.shape()) +
                         " vs " + shape_str(b.shape()));
}

// dC = A[m x k] row-major; accumulates C += A * B^T with B[n x k].
void acc_nt(const double* a, const double* b, double* c, std::size_t m,
            std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double* bj = b + j * k;
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += ai[p] * bj[p];
      c[i * n + j] += s;
    }
  }
}

// C[m x n] += A^T * B with A[k x m], B[k x n].
void acc_tn(const double* a, const double* b, double* c, std::size_t m,
            std::size_t k, std::size_t n) {
  for (std::size_t p = 0; p < k; ++p) {
    const double* ap = a + p * m;
    const double* bp = b + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double api = ap[i];
      if (api == 0.0) continue;
      double* ci = c + i * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += api * bp[j];
    }
  }
}

}  // namespace

NoGradGuard::NoGradGuard() : prev_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = prev_; }
bool grad_enabled() { return t_grad_enabled; }

Tensor Tensor::zeros(const Shape& shape, bool requires_grad) {
  auto n = make_node(shape, std::vector<double>(numel(shape), 0.0));
  n->requires_grad = requires_grad;
  return Tensor(n);
}

Tensor Tensor::full(const Shape& shape, double v, bool requires_grad) {
  auto n = make_node(shape, std::vector<double>(numel(shape), v));
  n->requires_grad = requires_grad;
  return Tensor(n);
}

Tensor Tensor::from_data(const Shape& shape, std::vector<double> data,
                         bool requires_grad) {
  if (data.size() != numel(shape))
    throw DimensionError("from_data: " + std::to_string(data.size()) +
                         " values for shape " + shape_str(shape));
  auto n = make_node(shape, std::move(data));
  n->requires_grad = requires_grad;
  return Tensor(n);
}

Tensor Tensor::scalar(double v, bool requires_grad) {
  return from_data({1}, {v}, requires_grad);
}

Tensor Tensor::randn(const Shape& shape, std::mt19937_64& rng, double stddev,
                     bool requires_grad) {
  std::normal_distribution<double> d(0.0, stddev);
  std::vector<double> v(numel(shape));
  for (auto& x : v) x = d(rng);
  return from_data(shape, std::move(v), requires_grad);
}

std::size_t Tensor::rows() const {
  return node_->shape.empty() ? 0 : node_->shape[0];
}

std::size_t Tensor::cols() const {
  return node_->shape.size() == 2 ? node_->shape[1] : 1;
}

double Tensor::item() const {
  if (size() != 1) throw ContractError("item: tensor is not scalar, shape " +
                                       shape_str(shape()));
  return node_->val[0];
}

double Tensor::at(std::size_t r, std::size_t c) const {
  return node_->val[r * cols() + c];
}

void backward(const Tensor& loss) {
  if (loss.size() != 1)
    throw ContractError("backward: loss must be scalar, got shape " +
                        shape_str(loss.shape()));
  if (!loss.requires_grad()) return;

  // Post-order DFS; reverse gives a valid reverse-topological evaluation
  // order. Deterministic: traversal follows recorded parent order.
  std::vector<TensorNode*> order;
  std::unordered_set<TensorNode*> seen;
  struct Frame {
    TensorNode* n;
    std::size_t next;
  };
  std::vector<Frame> stack;
  stack.push_back({loss.node().get(), 0});
  seen.insert(loss.node().get());
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next < f.n->parents.size()) {
      TensorNode* p = f.n->parents[f.next++].get();
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(f.n);
      stack.pop_back();
    }
  }

  // Interior nodes get fresh adjoints each sweep; leaf (parameter) grads
  // accumulate across sweeps until explicitly zeroed.
  for (TensorNode* n : order)
    if (n->backprop) n->grad.assign(n->val.size(), 0.0);
  loss.node()->ensure_grad();
  loss.node()->grad[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorNode* n = *it;
    if (n->backprop) {
      n->ensure_grad();
      n->backprop(*n);
    }
  }
}

// ---------------- elementwise ----------------

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.at(i) + b.at(i);
  auto an = a.node(), bn = b.node();
  return make_op(a.shape(), std::move(v), {a, b}, [an, bn](TensorNode& o) {
    acc(*an, o.grad.data(), o.grad.size());
    acc(*bn, o.grad.data(), o.grad.size());
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.at(i) - b.at(i);
  auto an = a.node(), bn = b.node();
  return make_op(a.shape(), std::move(v), {a, b}, [an, bn](TensorNode& o) {
    acc(*an, o.grad.data(), o.grad.size());
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (std::size_t i = 0; i < o.grad.size(); ++i) bn->grad[i] -= o.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  std::vector<double> v(a.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.at(i) * b.at(i);
  auto an = a.node(), bn = b.node();
  return make_op(a.shape(), std::move(v), {a, b}, [an, bn](TensorNode& o) {
    if (an->requires_grad) {
      an->ensure_grad();
      for (std::size_t i = 0; i < o.grad.size(); ++i)
        an->grad[i] += o.grad[i] * bn->val[i];
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      for (std::size_t i = 0; i < o.grad.size(); ++i)
        bn->grad[i] += o.grad[i] * an->val[i];
    }
  });
}

Tensor scale(const Tensor& x, double c) {
  std::vector<double> v(x.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = x.at(i) * c;
  auto xn = x.node();
  return make_op(x.shape(), std::move(v), {x}, [xn, c](TensorNode& o) {
    if (!xn->requires_grad) return;
    xn->ensure_grad();
    for (std::size_t i = 0; i < o.grad.size(); ++i)
      xn->grad[i] += o.grad[i] * c;
  });
}

Tensor add_const(const Tensor& x, double c) {
  std::vector<double> v(x.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = x.at(i) + c;
  auto xn = x.node();
  return make_op(x.shape(), std::move(v), {x}, [xn](TensorNode& o) {
    acc(*xn, o.grad.data(), o.grad.size());
  });
}

Tensor neg(const Tensor& x) { return scale(x, -1.0); }

Tensor pow_const(const Tensor& x, double p) {
  std::vector<double> v(x.size());
  for (std::size_t i = 0; i < v.size(); ++i)
    v[i] = (p == 0.0) ? 1.0 : std::pow(x.at(i), p);
  auto xn = x.node();
  return make_op(x.shape(), std::move(v), {x}, [xn, p](TensorNode& o) {
    if (!xn->requires_grad || p == 0.0) return;
    xn->ensure_grad();
    for (std::size_t i = 0; i < o.grad.size(); ++i)
      xn->grad[i] += o.grad[i] * p * std::pow(xn->val[i], p - 1.0);
  });
}

Tensor vsqrt(const Tensor& x) { return pow_const(x, 0.5); }

Tensor vlog(const Tensor& x) {
  std::vector<double> v(x.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::log(x.at(i));
  auto xn = x.node();
  return make_op(x.shape(), std::move(v), {x}, [xn](TensorNode& o) {
    if (!xn->requires_grad) return;
    xn->ensure_grad();
    for (std::size_t i = 0; i < o.grad.size(); ++i)
      xn->grad[i] += o.grad[i] / xn->val[i];
  });
}

Tensor vexp(const Tensor& x) {
  std::vector<double> v(x.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::exp(x.at(i));
  auto xn = x.node();
  return make_op(x.shape(), std::move(v), {x}, [xn](TensorNode& o) {
    if (!xn->requires_grad) return;
    xn->ensure_grad();
    for (std::size_t i = 0; i < o.grad.size(); ++i)
      xn->grad[i] += o.grad[i] * o.val[i];
  });
}

Tensor sigmoid(const Tensor& x) {
  std::vector<double> v(x.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double z = x.at(i);
    v[i] = z >= 0.0 ? 1.0 / (1.0 + std::exp(-z))
                    : std::exp(z) / (1.0 + std::exp(z));
  }
  auto xn = x.node();
  return make_op(x.shape(), std::move(v), {x}, [xn](TensorNode& o) {
    if (!xn->requires_grad) return;
    xn->ensure_grad();
    for (std::size_t i = 0; i < o.grad.size(); ++i)
      xn->grad[i] += o.grad[i] * o.val[i] * (1.0 - o.val[i]);
  });
}

Tensor gelu(const Tensor& x) {
  constexpr double kGate = 1.702;
  std::vector<double> v(x.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double z = x.at(i);
    v[i] = z / (1.0 + std::exp(-kGate * z));
  }
  auto xn = x.node();
  return make_op(x.shape(), std::move(v), {x}, [xn](TensorNode& o) {
    if (!xn->requires_grad) return;
    xn->ensure_grad();
    for (std::size_t i = 0; i < o.grad.size(); ++i) {
      const double z = xn->val[i];
      const double s = 1.0 / (1.0 + std::exp(-kGate * z));
      xn->grad[i] += o.grad[i] * (s + z * kGate * s * (1.0 - s));
    }
  });
}

Tensor clamp(const Tensor& x, double lo, double hi) {
  std::vector<double> v(x.size());
  for (std::size_t i = 0; i < v.size(); ++i)
    v[i] = std::min(hi, std::max(lo, x.at(i)));
  auto xn = x.node();
  return make_op(x.shape(), std::move(v), {x}, [xn, lo, hi](TensorNode& o) {
    if (!xn->requires_grad) return;
    xn->ensure_grad();
    for (std::size_t i = 0; i < o.grad.size(); ++i)
      if (xn->val[i] > lo && xn->val[i] < hi) xn->grad[i] += o.grad[i];
  });
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x.at(i);
  auto xn = x.node();
  return make_op({1}, {s}, {x}, [xn](TensorNode& o) {
    if (!xn->requires_grad) return;
    xn->ensure_grad();
    for (auto& g : xn->grad) g += o.grad[0];
  });
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / x.size()); }

Tensor dot(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "dot");
  return sum(mul(a, b));
}

Tensor scale_by(const Tensor& x, const Tensor& s) {
  if (s.size() != 1) throw ContractError("scale_by: scalar expected");
  const double sv = s.at(0);
  std::vector<double> v(x.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = x.at(i) * sv;
  auto xn = x.node(), sn = s.node();
  return make_op(x.shape(), std::move(v), {x, s}, [xn, sn](TensorNode& o) {
    if (xn->requires_grad) {
      xn->ensure_grad();
      for (std::size_t i = 0; i < o.grad.size(); ++i)
        xn->grad[i] += o.grad[i] * sn->val[0];
    }
    if (sn->requires_grad) {
      sn->ensure_grad();
      double g = 0.0;
      for (std::size_t i = 0; i < o.grad.size(); ++i)
        g += o.grad[i] * xn->val[i];
      sn->grad[0] += g;
    }
  });
}

// ---------------- linear algebra ----------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.shape().size() != 2 || b.shape().size() != 2)
    throw DimensionError("matmul: rank-2 operands required, got " +
                         shape_str(a.shape()) + " and " + shape_str(b.shape()));
  const std::size_t m = a.shape()[0], k = a.shape()[1];
  if (b.shape()[0] != k)
    throw DimensionError("matmul: inner dimensions disagree, " +
                         shape_str(a.shape()) + " * " + shape_str(b.shape()));
  const std::size_t n = b.shape()[1];
  std::vector<double> v(m * n);
  kernels::matmul(a.value().data(), b.value().data(), v.data(), m, k, n);
  auto an = a.node(), bn = b.node();
  return make_op({m, n}, std::move(v), {a, b},
                 [an, bn, m, k, n](TensorNode& o) {
                   if (an->requires_grad) {
                     an->ensure_grad();
                     acc_nt(o.grad.data(), bn->val.data(), an->grad.data(), m,
                            n, k);
                   }
                   if (bn->requires_grad) {
                     bn->ensure_grad();
                     acc_tn(an->val.data(), o.grad.data(), bn->grad.data(), k,
                            m, n);
                   }
                 });
}

Tensor transpose(const Tensor& x) {
  if (x.shape().size() != 2)
    throw DimensionError("transpose: rank-2 required, got " +
                         shape_str(x.shape()));
  const std::size_t r = x.shape()[0], c = x.shape()[1];
  std::vector<double> v(r * c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) v[j * r + i] = x.at(i, j);
  auto xn = x.node();
  return make_op({c, r}, std::move(v), {x}, [xn, r, c](TensorNode& o) {
    if (!xn->requires_grad) return;
    xn->ensure_grad();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j)
        xn->grad[i * c + j] += o.grad[j * r + i];
  });
}

Tensor add_rowvec(const Tensor& x, const Tensor& v) {
  if (x.shape().size() != 2 || v.shape().size() != 1 ||
      x.shape()[1] != v.shape()[0])
    throw DimensionError("add_rowvec: " + shape_str(x.shape()) + " + " +
                         shape_str(v.shape()));
  const std::size_t r = x.shape()[0], c = x.shape()[1];
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = x.at(i, j) + v.at(j);
  auto xn = x.node(), vn = v.node();
  return make_op({r, c}, std::move(out), {x, v}, [xn, vn, r, c](TensorNode& o) {
    if (xn->requires_grad) acc(*xn, o.grad.data(), o.grad.size());
    if (vn->requires_grad) {
      vn->ensure_grad();
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j)
          vn->grad[j] += o.grad[i * c + j];
    }
  });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  Tensor y = matmul(x, w);
  return b.defined() ? add_rowvec(y, b) : y;
}

Tensor cross3(const Tensor& a, const Tensor& b) {
  if (a.shape() != Shape{3} || b.shape() != Shape{3})
    throw DimensionError("cross3: 3-vectors required");
  const auto& av = a.value();
  const auto& bv = b.value();
  std::vector<double> v = {av[1] * bv[2] - av[2] * bv[1],
                           av[2] * bv[0] - av[0] * bv[2],
                           av[0] * bv[1] - av[1] * bv[0]};
  auto an = a.node(), bn = b.node();
  return make_op({3}, std::move(v), {a, b}, [an, bn](TensorNode& o) {
    const double* g = o.grad.data();
    if (an->requires_grad) {
      an->ensure_grad();
      const double* b = bn->val.data();
      an->grad[0] += b[1] * g[2] - b[2] * g[1];
      an->grad[1] += b[2] * g[0] - b[0] * g[2];
      an->grad[2] += b[0] * g[1] - b[1] * g[0];
    }
    if (bn->requires_grad) {
      bn->ensure_grad();
      const double* a = an->val.data();
      bn->grad[0] += g[1] * a[2] - g[2] * a[1];
      bn->grad[1] += g[2] * a[0] - g[0] * a[2];
      bn->grad[2] += g[0] * a[1] - g[1] * a[0];
    }
  });
}

// ---------------- shape ops ----------------

Tensor reshape(const Tensor& x, const Shape& shape) {
  if (numel(shape) != x.size())
    throw DimensionError("reshape: " + shape_str(x.shape()) + " -> " +
                         shape_str(shape));
  std::vector<double> v = x.value();
  auto xn = x.node();
  return make_op(shape, std::move(v), {x}, [xn](TensorNode& o) {
    acc(*xn, o.grad.data(), o.grad.size());
  });
}

Tensor slice_cols(const Tensor& x, std::size_t c0, std::size_t c1) {
  if (x.shape().size() != 2 || c1 > x.shape()[1] || c0 >= c1)
    throw DimensionError("slice_cols: [" + std::to_string(c0) + "," +
                         std::to_string(c1) + ") of " + shape_str(x.shape()));
  const std::size_t r = x.shape()[0], c = x.shape()[1], w = c1 - c0;
  std::vector<double> v(r * w);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < w; ++j) v[i * w + j] = x.at(i, c0 + j);
  auto xn = x.node();
  return make_op({r, w}, std::move(v), {x}, [xn, r, c, c0, w](TensorNode& o) {
    if (!xn->requires_grad) return;
    xn->ensure_grad();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < w; ++j)
        xn->grad[i * c + c0 + j] += o.grad[i * w + j];
  });
}

Tensor slice_rows(const Tensor& x, std::size_t r0, std::size_t r1) {
  if (x.shape().size() != 2 || r1 > x.shape()[0] || r0 >= r1)
    throw DimensionError("slice_rows: [" + std::to_string(r0) + "," +
                         std::to_string(r1) + ") of " + shape_str(x.shape()));
  const std::size_t c = x.shape()[1], h = r1 - r0;
  std::vector<double> v(x.value().begin() + r0 * c, x.value().begin() + r1 * c);
  auto xn = x.node();
  return make_op({h, c}, std::move(v), {x}, [xn, r0, c, h](TensorNode& o) {
    if (!xn->requires_grad) return;
    xn->ensure_grad();
    for (std::size_t i = 0; i < h * c; ++i) xn->grad[r0 * c + i] += o.grad[i];
  });
}

Tensor slice_vec(const Tensor& x, std::size_t i0, std::size_t i1) {
  if (x.shape().size() != 1 || i1 > x.shape()[0] || i0 >= i1)
    throw DimensionError("slice_vec: [" + std::to_string(i0) + "," +
                         std::to_string(i1) + ") of " + shape_str(x.shape()));
  std::vector<double> v(x.value().begin() + i0, x.value().begin() + i1);
  auto xn = x.node();
  return make_op({i1 - i0}, std::move(v), {x}, [xn, i0](TensorNode& o) {
    if (!xn->requires_grad) return;
    xn->ensure_grad();
    for (std::size_t i = 0; i < o.grad.size(); ++i)
      xn->grad[i0 + i] += o.grad[i];
  });
}

Tensor concat_cols(const Tensor& a, const Tensor& b) {
  if (a.shape().size() != 2 || b.shape().size() != 2 ||
      a.shape()[0] != b.shape()[0])
    throw DimensionError("concat_cols: " + shape_str(a.shape()) + " | " +
                         shape_str(b.shape()));
  const std::size_t r = a.shape()[0], ca = a.shape()[1], cb = b.shape()[1];
  std::vector<double> v(r * (ca + cb));
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < ca; ++j) v[i * (ca + cb) + j] = a.at(i, j);
    for (std::size_t j = 0; j < cb; ++j) v[i * (ca + cb) + ca + j] = b.at(i, j);
  }
  auto an = a.node(), bn = b.node();
  return make_op({r, ca + cb}, std::move(v), {a, b},
                 [an, bn, r, ca, cb](TensorNode& o) {
                   const std::size_t c = ca + cb;
                   if (an->requires_grad) {
                     an->ensure_grad();
                     for (std::size_t i = 0; i < r; ++i)
                       for (std::size_t j = 0; j < ca; ++j)
                         an->grad[i * ca + j] += o.grad[i * c + j];
                   }
                   if (bn->requires_grad) {
                     bn->ensure_grad();
                     for (std::size_t i = 0; i < r; ++i)
                       for (std::size_t j = 0; j < cb; ++j)
                         bn->grad[i * cb + j] += o.grad[i * c + ca + j];
                   }
                 });
}

Tensor concat_rows(const Tensor& a, const Tensor& b) {
  if (a.shape().size() != 2 || b.shape().size() != 2 ||
      a.shape()[1] != b.shape()[1])
    throw DimensionError("concat_rows: " + shape_str(a.shape()) + " / " +
                         shape_str(b.shape()));
  const std::size_t ra = a.shape()[0], rb = b.shape()[0], c = a.shape()[1];
  std::vector<double> v;
  v.reserve((ra + rb) * c);
  v.insert(v.end(), a.value().begin(), a.value().end());
  v.insert(v.end(), b.value().begin(), b.value().end());
  auto an = a.node(), bn = b.node();
  return make_op({ra + rb, c}, std::move(v), {a, b},
                 [an, bn, ra, rb, c](TensorNode& o) {
                   if (an->requires_grad) acc(*an, o.grad.data(), ra * c);
                   if (bn->requires_grad) {
                     bn->ensure_grad();
                     for (std::size_t i = 0; i < rb * c; ++i)
                       bn->grad[i] += o.grad[ra * c + i];
                   }
                 });
}

Tensor row(const Tensor& x, std::size_t r) {
  if (x.shape().size() != 2 || r >= x.shape()[0])
    throw DimensionError("row: " + std::to_string(r) + " of " +
                         shape_str(x.shape()));
  const std::size_t c = x.shape()[1];
  std::vector<double> v(x.value().begin() + r * c,
                        x.value().begin() + (r + 1) * c);
  auto xn = x.node();
  return make_op({c}, std::move(v), {x}, [xn, r, c](TensorNode& o) {
    if (!xn->requires_grad) return;
    xn->ensure_grad();
    for (std::size_t j = 0; j < c; ++j) xn->grad[r * c + j] += o.grad[j];
  });
}

Tensor stack_rows(const std::vector<Tensor>& rows) {
  if (rows.empty()) throw ContractError("stack_rows: empty input");
  const std::size_t c = rows[0].size();
  std::vector<double> v;
  v.reserve(rows.size() * c);
  bool req = false;
  for (const auto& r : rows) {
    if (r.shape().size() != 1 || r.size() != c)
      throw DimensionError("stack_rows: inconsistent row shapes");
    v.insert(v.end(), r.value().begin(), r.value().end());
    req = req || r.requires_grad();
  }
  auto n = make_node({rows.size(), c}, std::move(v));
  if (grad_enabled() && req) {
    n->requires_grad = true;
    std::vector<std::shared_ptr<TensorNode>> parents;
    for (const auto& r : rows) parents.push_back(r.node());
    n->parents = parents;
    n->backprop = [parents, c](TensorNode& o) {
      for (std::size_t i = 0; i < parents.size(); ++i) {
        auto& p = *parents[i];
        if (!p.requires_grad) continue;
        p.ensure_grad();
        for (std::size_t j = 0; j < c; ++j) p.grad[j] += o.grad[i * c + j];
      }
    };
  }
  return Tensor(n);
}

// ---------------- structured ops ----------------

Tensor softmax(const Tensor& x, int axis) {
  const std::size_t rank = x.shape().size();
  if (rank == 0 || rank > 2 || axis < 0 || axis >= static_cast<int>(rank))
    throw DimensionError("softmax: axis " + std::to_string(axis) +
                         " invalid for shape " + shape_str(x.shape()));
  // Lines: contiguous for rank-1 / axis=1; strided for rank-2 axis=0.
  const std::size_t r = rank == 2 ? x.shape()[0] : 1;
  const std::size_t c = rank == 2 ? x.shape()[1] : x.shape()[0];
  const bool by_rows = (rank == 1) || axis == 1;
  const std::size_t nlines = by_rows ? r : c;
  const std::size_t len = by_rows ? c : r;
  const std::size_t stride = by_rows ? 1 : c;

  std::vector<double> v(x.size());
  for (std::size_t l = 0; l < nlines; ++l) {
    const std::size_t base = by_rows ? l * c : l;
    double mx = -1e300;
    for (std::size_t i = 0; i < len; ++i)
      mx = std::max(mx, x.at(base + i * stride));
    double s = 0.0;
    for (std::size_t i = 0; i < len; ++i) {
      const double e = std::exp(x.at(base + i * stride) - mx);
      v[base + i * stride] = e;
      s += e;
    }
    for (std::size_t i = 0; i < len; ++i) v[base + i * stride] /= s;
  }
  auto xn = x.node();
  return make_op(x.shape(), std::move(v), {x},
                 [xn, nlines, len, stride, by_rows, c](TensorNode& o) {
                   if (!xn->requires_grad) return;
                   xn->ensure_grad();
                   for (std::size_t l = 0; l < nlines; ++l) {
                     const std::size_t base = by_rows ? l * c : l;
                     double gy = 0.0;
                     for (std::size_t i = 0; i < len; ++i) {
                       const std::size_t k = base + i * stride;
                       gy += o.grad[k] * o.val[k];
                     }
                     for (std::size_t i = 0; i < len; ++i) {
                       const std::size_t k = base + i * stride;
                       xn->grad[k] += (o.grad[k] - gy) * o.val[k];
                     }
                   }
                 });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps) {
  const std::size_t rank = x.shape().size();
  const std::size_t d = rank == 2 ? x.shape()[1] : x.shape()[0];
  const std::size_t r = rank == 2 ? x.shape()[0] : 1;
  if (d < 1) throw DimensionError("layer_norm: empty last axis");
  if (gain.shape() != Shape{d} || bias.shape() != Shape{d})
    throw DimensionError("layer_norm: gain/bias must match last axis " +
                         std::to_string(d));
  std::vector<double> v(x.size());
  std::vector<double> inv_sd(r), mu(r);
  for (std::size_t i = 0; i < r; ++i) {
    double m = 0.0;
    for (std::size_t j = 0; j < d; ++j) m += x.at(i * d + j);
    m /= d;
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double t = x.at(i * d + j) - m;
      var += t * t;
    }
    var /= d;
    const double is = 1.0 / std::sqrt(var + eps);
    mu[i] = m;
    inv_sd[i] = is;
    for (std::size_t j = 0; j < d; ++j)
      v[i * d + j] = (x.at(i * d + j) - m) * is * gain.at(j) + bias.at(j);
  }
  auto xn = x.node(), gn = gain.node(), bn = bias.node();
  return make_op(
      x.shape(), std::move(v), {x, gain, bias},
      [xn, gn, bn, r, d, mu, inv_sd](TensorNode& o) {
        for (std::size_t i = 0; i < r; ++i) {
          const double is = inv_sd[i];
          // Recover xhat from cached mean / inv-stddev.
          double m_dxhat = 0.0, m_dxhat_xhat = 0.0;
          std::vector<double> xhat(d), dxhat(d);
          for (std::size_t j = 0; j < d; ++j) {
            xhat[j] = (xn->val[i * d + j] - mu[i]) * is;
            dxhat[j] = o.grad[i * d + j] * gn->val[j];
            m_dxhat += dxhat[j];
            m_dxhat_xhat += dxhat[j] * xhat[j];
          }
          m_dxhat /= d;
          m_dxhat_xhat /= d;
          if (xn->requires_grad) {
            xn->ensure_grad();
            for (std::size_t j = 0; j < d; ++j)
              xn->grad[i * d + j] +=
                  is * (dxhat[j] - m_dxhat - xhat[j] * m_dxhat_xhat);
          }
          if (gn->requires_grad) {
            gn->ensure_grad();
            for (std::size_t j = 0; j < d; ++j)
              gn->grad[j] += o.grad[i * d + j] * xhat[j];
          }
          if (bn->requires_grad) {
            bn->ensure_grad();
            for (std::size_t j = 0; j < d; ++j) bn->grad[j] += o.grad[i * d + j];
          }
        }
      });
}

Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& b,
              std::size_t ksize, std::size_t stride) {
  if (x.shape().size() != 2 || w.shape().size() != 2)
    throw DimensionError("conv1d: rank-2 input and weight required");
  const std::size_t m = x.shape()[0], f = x.shape()[1];
  if (w.shape()[0] != ksize * f)
    throw DimensionError("conv1d: weight rows " + std::to_string(w.shape()[0]) +
                         " != ksize*features " + std::to_string(ksize * f));
  const std::size_t och = w.shape()[1];
  if (b.shape() != Shape{och})
    throw DimensionError("conv1d: bias length mismatch");
  if (m < ksize) throw DimensionError("conv1d: input shorter than kernel");
  if (stride == 0) throw ContractError("conv1d: stride must be positive");
  const std::size_t t_out = (m - ksize) / stride + 1;
  std::vector<double> v(t_out * och);
  for (std::size_t t = 0; t < t_out; ++t) {
    double* vr = v.data() + t * och;
    for (std::size_t o = 0; o < och; ++o) vr[o] = b.at(o);
    for (std::size_t j = 0; j < ksize; ++j) {
      const double* xr = x.value().data() + (t * stride + j) * f;
      for (std::size_t u = 0; u < f; ++u) {
        const double xv = xr[u];
        const double* wr = w.value().data() + (j * f + u) * och;
        for (std::size_t o = 0; o < och; ++o) vr[o] += xv * wr[o];
      }
    }
  }
  auto xn = x.node(), wn = w.node(), bn = b.node();
  return make_op(
      {t_out, och}, std::move(v), {x, w, b},
      [xn, wn, bn, f, och, ksize, stride, t_out](TensorNode& o) {
        if (xn->requires_grad) xn->ensure_grad();
        if (wn->requires_grad) wn->ensure_grad();
        if (bn->requires_grad) bn->ensure_grad();
        for (std::size_t t = 0; t < t_out; ++t) {
          const double* g = o.grad.data() + t * och;
          if (bn->requires_grad)
            for (std::size_t c = 0; c < och; ++c) bn->grad[c] += g[c];
          for (std::size_t j = 0; j < ksize; ++j) {
            const std::size_t rowi = (t * stride + j) * f;
            for (std::size_t u = 0; u < f; ++u) {
              const std::size_t wrow = (j * f + u) * och;
              if (xn->requires_grad) {
                double s = 0.0;
                for (std::size_t c = 0; c < och; ++c)
                  s += g[c] * wn->val[wrow + c];
                xn->grad[rowi + u] += s;
              }
              if (wn->requires_grad) {
                const double xv = xn->val[rowi + u];
                for (std::size_t c = 0; c < och; ++c)
                  wn->grad[wrow + c] += g[c] * xv;
              }
            }
          }
        }
      });
}

Tensor avg_pool_rows(const Tensor& x, std::size_t t_out) {
  if (x.shape().size() != 2) throw DimensionError("avg_pool_rows: rank-2 required");
  if (t_out == 0) throw ContractError("avg_pool_rows: t_out must be positive");
  const std::size_t m = x.shape()[0], d = x.shape()[1];
  std::vector<double> v(t_out * d, 0.0);
  std::vector<std::size_t> lo(t_out), hi(t_out);
  for (std::size_t t = 0; t < t_out; ++t) {
    lo[t] = t * m / t_out;
    hi[t] = std::max(lo[t] + 1, (t + 1) * m / t_out);
    hi[t] = std::min(hi[t], m);
    const double inv = 1.0 / static_cast<double>(hi[t] - lo[t]);
    for (std::size_t i = lo[t]; i < hi[t]; ++i)
      for (std::size_t j = 0; j < d; ++j) v[t * d + j] += x.at(i, j) * inv;
  }
  auto xn = x.node();
  return make_op({t_out, d}, std::move(v), {x},
                 [xn, lo, hi, d](TensorNode& o) {
                   if (!xn->requires_grad) return;
                   xn->ensure_grad();
                   for (std::size_t t = 0; t < lo.size(); ++t) {
                     const double inv = 1.0 / static_cast<double>(hi[t] - lo[t]);
                     for (std::size_t i = lo[t]; i < hi[t]; ++i)
                       for (std::size_t j = 0; j < d; ++j)
                         xn->grad[i * d + j] += o.grad[t * d + j] * inv;
                   }
                 });
}

bool all_finite(const Tensor& x) {
  for (std::size_t i = 0; i < x.size(); ++i)
    if (!std::isfinite(x.at(i))) return false;
  return true;
}

}  // namespace ttm

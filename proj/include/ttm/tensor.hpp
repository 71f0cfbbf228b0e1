#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "ttm/errors.hpp"

namespace ttm {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& s);
std::size_t numel(const Shape& s);

struct TensorNode {
  Shape shape;
  std::vector<double> val;
  std::vector<double> grad;  // allocated lazily, same length as val
  bool requires_grad = false;
  std::string tag;  // optional diagnostic name
  std::vector<std::shared_ptr<TensorNode>> parents;
  std::function<void(TensorNode&)> backprop;  // accumulates into parents' grad

  void ensure_grad() {
    if (grad.size() != val.size()) grad.assign(val.size(), 0.0);
  }
};

// Dense 64-bit tensor with reverse-mode gradient tracking. Copies are
// shallow (shared node); ops build a graph of shared nodes that backward()
// walks in reverse topological order. Rank 1 and rank 2 are supported.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<TensorNode> n) : node_(std::move(n)) {}

  static Tensor zeros(const Shape& shape, bool requires_grad = false);
  static Tensor full(const Shape& shape, double v, bool requires_grad = false);
  static Tensor from_data(const Shape& shape, std::vector<double> data,
                          bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);
  static Tensor randn(const Shape& shape, std::mt19937_64& rng, double stddev,
                      bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t size() const { return node_->val.size(); }
  std::size_t rows() const;
  std::size_t cols() const;

  const std::vector<double>& value() const { return node_->val; }
  std::vector<double>& value() { return node_->val; }
  const std::vector<double>& grad() const { return node_->grad; }
  bool has_grad() const { return node_->grad.size() == node_->val.size(); }
  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool b) { node_->requires_grad = b; }
  void zero_grad() { node_->grad.assign(node_->val.size(), 0.0); }
  void clear_grad() { node_->grad.clear(); }

  double item() const;  // scalar tensors only
  double at(std::size_t i) const { return node_->val[i]; }
  double at(std::size_t r, std::size_t c) const;

  const std::string& tag() const { return node_->tag; }
  void set_tag(std::string t) { node_->tag = std::move(t); }

  std::shared_ptr<TensorNode> node() const { return node_; }

 private:
  std::shared_ptr<TensorNode> node_;
};

// When a NoGradGuard is alive on a thread, ops compute values only and
// record no graph. Used by evaluation paths.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

bool grad_enabled();

// Reverse-mode sweep from a scalar loss. Gradients accumulate until
// explicitly zeroed; the training loop zeroes after each optimizer step.
void backward(const Tensor& loss);

// ---- elementwise / reduction ops ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double c);
Tensor add_const(const Tensor& x, double c);
Tensor neg(const Tensor& x);
Tensor pow_const(const Tensor& x, double p);
Tensor vsqrt(const Tensor& x);
Tensor vlog(const Tensor& x);
Tensor vexp(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor gelu(const Tensor& x);  // smooth gate x * sigmoid(1.702 x)
Tensor clamp(const Tensor& x, double lo, double hi);
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor dot(const Tensor& a, const Tensor& b);
Tensor scale_by(const Tensor& x, const Tensor& s);  // s is a scalar tensor

// ---- linear algebra ----
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& x);
Tensor add_rowvec(const Tensor& x, const Tensor& v);  // x[T x D] + v[D]
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);  // x*w + b
Tensor cross3(const Tensor& a, const Tensor& b);

// ---- shape ops ----
Tensor reshape(const Tensor& x, const Shape& shape);
Tensor slice_cols(const Tensor& x, std::size_t c0, std::size_t c1);
Tensor slice_rows(const Tensor& x, std::size_t r0, std::size_t r1);
Tensor slice_vec(const Tensor& x, std::size_t i0, std::size_t i1);
Tensor concat_cols(const Tensor& a, const Tensor& b);
Tensor concat_rows(const Tensor& a, const Tensor& b);
Tensor row(const Tensor& x, std::size_t r);           // rank-1 view copy
Tensor stack_rows(const std::vector<Tensor>& rows);    // rank-1 -> rank-2

// ---- structured ops ----
Tensor softmax(const Tensor& x, int axis);  // axis 0 (cols) or 1 (rows); rank-1 uses axis 0
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps);
// Valid 1-D convolution along rows: x[M x F], w[(ksize*F) x O], b[O].
Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& b,
              std::size_t ksize, std::size_t stride);
// Average rows of x[M x D] into t_out bins (index-proportional mapping).
Tensor avg_pool_rows(const Tensor& x, std::size_t t_out);

// True if every value is finite.
bool all_finite(const Tensor& x);

}  // namespace ttm

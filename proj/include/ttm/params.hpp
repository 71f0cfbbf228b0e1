#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "ttm/tensor.hpp"

namespace ttm {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Named trainable tensors. std::map keeps iteration lexicographic, which
// makes optimizer state and checkpoints reproducible across runs.
class ParameterSet {
 public:
  Tensor& add(const std::string& name, Tensor t);
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  bool contains(const std::string& name) const;
  std::size_t size() const { return params_.size(); }
  std::uint64_t step() const { return step_; }

  std::map<std::string, Tensor>& all() { return params_; }
  const std::map<std::string, Tensor>& all() const { return params_; }

  // Allocates zero gradients for parameters that received none; called by
  // the trainer before backward so toggled-off branches stay valid.
  void ensure_grads();
  void zero_grads();

  // Standard Adam with bias correction; requires every parameter to carry
  // a gradient, then zeroes all gradients and bumps the step counter.
  void adam_step(const AdamConfig& cfg);

  // Global L2 clip; returns the pre-clip norm.
  double clip_grad_norm(double max_norm);

  // Versioned binary checkpoint: per parameter (path, shape, raw
  // little-endian doubles). Byte-exact round trip.
  void save(const std::string& path) const;
  void load(const std::string& path);

 private:
  std::map<std::string, Tensor> params_;
  std::map<std::string, std::vector<double>> adam_m_, adam_v_;
  std::uint64_t step_ = 0;
};

}  // namespace ttm

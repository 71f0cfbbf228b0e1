#include "ttm/params.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

namespace ttm {

namespace {
constexpr char kMagic[8] = {'T', 'T', 'M', 'C', 'K', 'P', 'T', '1'};

void write_u64(std::ostream& os, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  os.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t read_u64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}
}  // namespace

Tensor& ParameterSet::add(const std::string& name, Tensor t) {
  if (params_.count(name))
    throw ContractError("parameter already registered: " + name);
  t.set_requires_grad(true);
  t.set_tag(name);
  auto [it, ok] = params_.emplace(name, std::move(t));
  (void)ok;
  return it->second;
}

Tensor& ParameterSet::at(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw ContractError("unknown parameter: " + name);
  return it->second;
}

const Tensor& ParameterSet::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw ContractError("unknown parameter: " + name);
  return it->second;
}

bool ParameterSet::contains(const std::string& name) const {
  return params_.count(name) != 0;
}

void ParameterSet::ensure_grads() {
  for (auto& [name, t] : params_)
    if (!t.has_grad()) t.zero_grad();
}

void ParameterSet::zero_grads() {
  for (auto& [name, t] : params_) t.zero_grad();
}

void ParameterSet::adam_step(const AdamConfig& cfg) {
  std::string missing;
  for (const auto& [name, t] : params_)
    if (t.requires_grad() && !t.has_grad())
      missing += (missing.empty() ? "" : ", ") + name;
  if (!missing.empty())
    throw ContractError("adam_step: gradients missing for " + missing);

  step_ += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step_));
  for (auto& [name, t] : params_) {
    if (!t.requires_grad()) continue;
    auto& m = adam_m_[name];
    auto& v = adam_v_[name];
    if (m.size() != t.size()) m.assign(t.size(), 0.0);
    if (v.size() != t.size()) v.assign(t.size(), 0.0);
    const auto& g = t.grad();
    auto& val = t.value();
    for (std::size_t i = 0; i < val.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      val[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
  zero_grads();
}

double ParameterSet::clip_grad_norm(double max_norm) {
  double sq = 0.0;
  for (const auto& [name, t] : params_) {
    if (!t.has_grad()) continue;
    for (double g : t.grad()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double s = max_norm / norm;
    for (auto& [name, t] : params_) {
      if (!t.has_grad()) continue;
      auto& g = t.node()->grad;
      for (auto& x : g) x *= s;
    }
  }
  return norm;
}

void ParameterSet::save(const std::string& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open for write: " + path);
  os.write(kMagic, 8);
  write_u64(os, step_);
  write_u64(os, params_.size());
  for (const auto& [name, t] : params_) {
    write_u64(os, name.size());
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u64(os, t.shape().size());
    for (auto d : t.shape()) write_u64(os, d);
    // Doubles written as raw little-endian words.
    for (double x : t.value()) {
      std::uint64_t bits;
      std::memcpy(&bits, &x, 8);
      write_u64(os, bits);
    }
  }
  if (!os) throw IoError("write failed: " + path);
}

void ParameterSet::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open: " + path);
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kMagic, 8) != 0)
    throw IoError("bad checkpoint header: " + path);
  step_ = read_u64(is);
  const std::uint64_t count = read_u64(is);
  params_.clear();
  adam_m_.clear();
  adam_v_.clear();
  for (std::uint64_t p = 0; p < count; ++p) {
    const std::uint64_t nlen = read_u64(is);
    std::string name(nlen, '\0');
    is.read(name.data(), static_cast<std::streamsize>(nlen));
    const std::uint64_t rank = read_u64(is);
    Shape shape(rank);
    for (auto& d : shape) d = read_u64(is);
    std::vector<double> data(numel(shape));
    for (auto& x : data) {
      const std::uint64_t bits = read_u64(is);
      std::memcpy(&x, &bits, 8);
    }
    if (!is) throw IoError("truncated checkpoint: " + path);
    add(name, Tensor::from_data(shape, std::move(data)));
  }
}

}  // namespace ttm

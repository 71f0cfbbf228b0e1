#include "ttm/gradcheck.hpp"

#include <cmath>
#include <map>
#include <vector>

namespace ttm {

double gradcheck_max_error(ParameterSet& params,
                           const std::function<Tensor()>& loss_fn,
                           double eps) {
  params.zero_grads();
  Tensor loss = loss_fn();
  backward(loss);

  std::map<std::string, std::vector<double>> analytic;
  for (auto& [name, t] : params.all()) {
    analytic[name] = t.has_grad() ? t.grad() : std::vector<double>(t.size(), 0.0);
  }

  double max_err = 0.0;
  NoGradGuard ng;  // perturbed evaluations need values only
  for (auto& [name, t] : params.all()) {
    if (!t.requires_grad()) continue;  // frozen entries (e.g. data stats)
    auto& val = t.value();
    const auto& g = analytic[name];
    for (std::size_t i = 0; i < val.size(); ++i) {
      const double orig = val[i];
      val[i] = orig + eps;
      const double fp = loss_fn().item();
      val[i] = orig - eps;
      const double fm = loss_fn().item();
      val[i] = orig;
      const double fd = (fp - fm) / (2.0 * eps);
      const double denom = std::max({1.0, std::abs(fd), std::abs(g[i])});
      max_err = std::max(max_err, std::abs(fd - g[i]) / denom);
    }
  }
  params.zero_grads();
  return max_err;
}

}  // namespace ttm

#include "ttm/vmma.hpp"

#include <algorithm>
#include <cmath>

namespace ttm::vmma {

Prompt fine_grained_prompt(const PresenceMask& mask, std::size_t dim) {
  if (dim < 1) throw ConfigError("fine_grained_prompt: dim must be >= 1");
  Prompt p;
  p.frames = mask.size();
  p.dim = dim;
  p.mode = PromptMode::Fine;
  p.values.assign(p.frames * dim, 0.0);
  for (std::size_t t = 0; t < mask.size(); ++t)
    if (!mask[t])
      for (std::size_t d = 0; d < dim; ++d) p.values[t * dim + d] = 1.0;
  return p;
}

double missing_ratio(const PresenceMask& mask) {
  if (mask.empty())
    throw ContractError("missing_ratio: sequence has zero frames");
  std::size_t miss = 0;
  for (bool b : mask)
    if (!b) ++miss;
  return static_cast<double>(miss) / static_cast<double>(mask.size());
}

Prompt coarse_grained_prompt(double delta_c, double beta_t, std::size_t dim,
                             std::size_t frames) {
  if (dim == 0 || dim % 2 != 0)
    throw ConfigError("coarse_grained_prompt: dim must be even, got " +
                      std::to_string(dim));
  Prompt p;
  p.frames = frames;
  p.dim = dim;
  p.mode = PromptMode::Coarse;
  p.values.assign(frames * dim, 0.0);
  const bool first_half = delta_c < beta_t;  // ties go to the second half
  const std::size_t lo = first_half ? 0 : dim / 2;
  const std::size_t hi = first_half ? dim / 2 : dim;
  for (std::size_t t = 0; t < frames; ++t)
    for (std::size_t d = lo; d < hi; ++d) p.values[t * dim + d] = 1.0;
  return p;
}

double adaptive_threshold(const std::vector<double>& history, double k) {
  if (history.empty())
    throw ContractError("adaptive_threshold: empty history");
  double mean = 0.0;
  for (double v : history) mean += v;
  mean /= static_cast<double>(history.size());
  double var = 0.0;
  for (double v : history) var += (v - mean) * (v - mean);
  var /= static_cast<double>(history.size());  // population variance
  return std::clamp(mean + k * std::sqrt(var), 0.0, 1.0);
}

}  // namespace ttm::vmma

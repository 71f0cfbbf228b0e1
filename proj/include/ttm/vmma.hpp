#pragma once

#include <cstdint>
#include <vector>

#include "ttm/errors.hpp"

namespace ttm::vmma {

// Per-frame head-crop availability for one sequence; true = present.
using PresenceMask = std::vector<bool>;

enum class PromptMode { Fine, Coarse };

// T x D binary grid, row-major. Values are exactly 0.0 or 1.0; prompts are
// inputs to the fusion stage, never parameters.
struct Prompt {
  std::size_t frames = 0;
  std::size_t dim = 0;
  std::vector<double> values;
  PromptMode mode = PromptMode::Fine;

  double at(std::size_t t, std::size_t d) const { return values[t * dim + d]; }
};

// Frame t gets all-zero entries when present, all-one when missing.
Prompt fine_grained_prompt(const PresenceMask& mask, std::size_t dim);

// Fraction of missing frames.
double missing_ratio(const PresenceMask& mask);

// One D-row broadcast over all frames: first half active when
// delta_c < beta_t, second half active when delta_c >= beta_t
// (d is 1-indexed, first half is d <= D/2). D must be even.
Prompt coarse_grained_prompt(double delta_c, double beta_t, std::size_t dim,
                             std::size_t frames);

// Population mean + k * population stddev of observed missing ratios,
// clamped to [0,1].
double adaptive_threshold(const std::vector<double>& history, double k);

struct ThresholdState {
  double beta_t = 0.2;
  double k = 0.0;
  std::vector<double> history;

  void observe(double delta_c) { history.push_back(delta_c); }
  // Freezes beta_t from the collected history.
  void fit() { beta_t = adaptive_threshold(history, k); }
};

}  // namespace ttm::vmma

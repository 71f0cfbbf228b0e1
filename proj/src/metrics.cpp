#include "ttm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace ttm::metrics {

std::optional<double> average_precision(const std::vector<ScoredLabel>& pairs) {
  for (const auto& p : pairs) {
    if (p.label != 0 && p.label != 1)
      throw DataError("average_precision: label outside {0,1}");
    if (!std::isfinite(p.score))
      throw DataError("average_precision: non-finite score");
  }
  std::vector<std::size_t> idx(pairs.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return pairs[a].score > pairs[b].score;
  });
  std::size_t positives_seen = 0;
  double ap = 0.0;
  for (std::size_t rank = 0; rank < idx.size(); ++rank) {
    if (pairs[idx[rank]].label == 1) {
      ++positives_seen;
      ap += static_cast<double>(positives_seen) /
            static_cast<double>(rank + 1);
    }
  }
  if (positives_seen == 0) return std::nullopt;
  return ap / static_cast<double>(positives_seen);
}

double top1_accuracy(const std::vector<ScoredLabel>& pairs, double threshold) {
  if (pairs.empty()) throw ContractError("top1_accuracy: empty input");
  std::size_t correct = 0;
  for (const auto& p : pairs) {
    if (p.label != 0 && p.label != 1)
      throw DataError("top1_accuracy: label outside {0,1}");
    if ((p.score >= threshold ? 1 : 0) == p.label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(pairs.size());
}

}  // namespace ttm::metrics

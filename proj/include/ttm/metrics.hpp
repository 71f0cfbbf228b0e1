#pragma once

#include <optional>
#include <vector>

#include "ttm/errors.hpp"

namespace ttm::metrics {

struct ScoredLabel {
  double score;
  int label;  // 0 or 1
};

// Area under precision-recall as the mean over positives of
// precision@rank. Ranking is a stable descending sort, so ties keep their
// original order. Returns nullopt when there are no positives (the group
// is then excluded from any mAP mean).
std::optional<double> average_precision(const std::vector<ScoredLabel>& pairs);

// Mean of [(score >= threshold) == label].
double top1_accuracy(const std::vector<ScoredLabel>& pairs,
                     double threshold = 0.5);

}  // namespace ttm::metrics

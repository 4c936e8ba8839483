#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lsnet/tensor.hpp"

namespace lsnet {

/// Pixel confusion counts for binary change maps. Merging is associative,
/// so per-image counts can be computed in parallel and reduced.
struct ConfusionCounts {
  std::uint64_t tp = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;
  std::uint64_t tn = 0;

  std::uint64_t total() const { return tp + fp + fn + tn; }
  ConfusionCounts& merge(const ConfusionCounts& other);
};

/// Percentages in [0, 100]. A degenerate denominator (no predicted
/// positives, no actual positives, or an undefined F1) yields 0 with the
/// matching flag set instead of failing, so large evaluations never abort.
struct MetricsReport {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double oa = 0.0;
  bool precision_degenerate = false;
  bool recall_degenerate = false;
  bool f1_degenerate = false;

  std::string to_table() const;
  std::string to_kv() const;
};

/// Counts prediction scores against a {0,1} ground truth. A pixel is
/// positive when score >= threshold (ties count positive). Accumulates over
/// the whole batch. Throws for shape mismatch or non-binary ground truth.
ConfusionCounts confusion(const Tensor& pred, const Tensor& gt, float threshold = 0.5f);

/// P/R/F1/OA from pooled counts; total() must be positive.
MetricsReport prf1_oa(const ConfusionCounts& c);

/// Mean of per-image reports (macro averaging, behind the --per-image flag).
MetricsReport average_reports(const std::vector<MetricsReport>& reports);

/// 0/1 mask from scores: 1 where score >= threshold.
Tensor binarize(const Tensor& scores, float threshold);

}  // namespace lsnet

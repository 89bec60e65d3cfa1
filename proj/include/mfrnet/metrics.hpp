#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "mfrnet/tensor.hpp"

namespace mfrnet {

// A metric is undefined for the given input (e.g. AUROC with one class).
class MetricError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

struct Confusion {
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  std::int64_t tn = 0;
  std::int64_t fn = 0;

  std::int64_t total() const { return tp + fp + tn + fn; }
  double accuracy() const;
  // 2TP / (2TP + FP + FN); 0 when the denominator is 0.
  double f1() const;
  Confusion& operator+=(const Confusion& o);
  friend bool operator==(const Confusion&, const Confusion&) = default;
};

struct EvalReport {
  double auroc = 0.0;
  double mae = 0.0;
  double acc = 0.0;
  double f1 = 0.0;
  // A pixel is flagged defective iff its normalised score is strictly above
  // this value.
  double threshold = 0.0;
  Confusion confusion;
  std::map<std::string, EvalReport> per_category;
};

// Mann-Whitney AUROC: P(score_pos > score_neg) + 0.5 P(tie).
double auroc(std::span<const double> scores, std::span<const std::uint8_t> labels);

// (1 / (w*h)) sum |pred - truth|.
double mae(const Tensor& pred, const Tensor& truth);

// A pixel is predicted defective iff pred >= threshold (pred > threshold when
// `strict`); TP iff predicted defective and truth = 1, and so on.
Confusion binarize_and_confuse(const Tensor& pred, const Tensor& truth, double threshold,
                               bool strict = false);

// Threshold-free AUROC and MAE on maps min-max normalised with the pooled
// range, plus the dataset-level best-F1 operating point chosen among
// `num_thresholds` equally spaced quantiles of the pooled normalised scores.
// Pixels strictly above the threshold are flagged. Ties in F1 keep the lowest
// threshold. AUROC is NaN when the pooled truth holds a single class.
EvalReport best_f1_sweep(const std::vector<Tensor>& preds, const std::vector<Tensor>& truths,
                         int num_thresholds = 256);

// Runs best_f1_sweep over all items and over each category's subset.
EvalReport evaluate_by_category(const std::vector<Tensor>& preds, const std::vector<Tensor>& truths,
                                const std::vector<std::string>& categories,
                                int num_thresholds = 256);

// Min-max normalisation with a shared range; a constant input maps to zeros.
std::vector<Tensor> normalize_pooled(const std::vector<Tensor>& maps);

}  // namespace mfrnet

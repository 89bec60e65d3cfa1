#include "mfrnet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace mfrnet {
namespace {

void check_binary(const Tensor& truth) {
  for (double v : truth.values()) {
    if (v != 0.0 && v != 1.0) throw ArgumentError("ground truth must be binary (0/1)");
  }
}

}  // namespace

double Confusion::accuracy() const {
  const auto n = total();
  return n == 0 ? 0.0 : static_cast<double>(tp + tn) / static_cast<double>(n);
}

double Confusion::f1() const {
  const auto denom = 2 * tp + fp + fn;
  return denom == 0 ? 0.0 : static_cast<double>(2 * tp) / static_cast<double>(denom);
}

Confusion& Confusion::operator+=(const Confusion& o) {
  tp += o.tp;
  fp += o.fp;
  tn += o.tn;
  fn += o.fn;
  return *this;
}

double auroc(std::span<const double> scores, std::span<const std::uint8_t> labels) {
  if (scores.size() != labels.size()) throw ArgumentError("auroc: scores/labels length mismatch");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Sum of mid-ranks of the positives (ranks start at 1).
  double rank_sum = 0.0;
  std::size_t positives = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double mid_rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t t = i; t < j; ++t) {
      if (labels[order[t]]) {
        rank_sum += mid_rank;
        ++positives;
      }
    }
    i = j;
  }
  const std::size_t negatives = n - positives;
  if (positives == 0 || negatives == 0) {
    throw MetricError("auroc: undefined with a single class (" + std::to_string(positives) +
                      " positives, " + std::to_string(negatives) + " negatives)");
  }
  const double p = static_cast<double>(positives);
  const double u = rank_sum - p * (p + 1.0) / 2.0;
  return u / (p * static_cast<double>(negatives));
}

double mae(const Tensor& pred, const Tensor& truth) {
  if (pred.size() != truth.size() || pred.empty()) {
    throw ArgumentError("mae: size mismatch " + shape_to_string(pred.shape()) + " vs " +
                        shape_to_string(truth.shape()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += std::abs(pred[i] - truth[i]);
  return s / static_cast<double>(pred.size());
}

Confusion binarize_and_confuse(const Tensor& pred, const Tensor& truth, double threshold,
                               bool strict) {
  if (!std::isfinite(threshold)) throw ArgumentError("binarize_and_confuse: threshold not finite");
  if (pred.size() != truth.size()) {
    throw ArgumentError("binarize_and_confuse: size mismatch " + shape_to_string(pred.shape()) +
                        " vs " + shape_to_string(truth.shape()));
  }
  Confusion c;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const bool positive = strict ? pred[i] > threshold : pred[i] >= threshold;
    const bool defect = truth[i] != 0.0;
    if (positive && defect) {
      ++c.tp;
    } else if (positive) {
      ++c.fp;
    } else if (defect) {
      ++c.fn;
    } else {
      ++c.tn;
    }
  }
  return c;
}

std::vector<Tensor> normalize_pooled(const std::vector<Tensor>& maps) {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const auto& m : maps) {
    for (double v : m.values()) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  }
  std::vector<Tensor> out;
  out.reserve(maps.size());
  const double range = hi - lo;
  for (const auto& m : maps) {
    Tensor t = m;
    for (double& v : t.values()) v = range > 0.0 ? (v - lo) / range : 0.0;
    out.push_back(std::move(t));
  }
  return out;
}

EvalReport best_f1_sweep(const std::vector<Tensor>& preds, const std::vector<Tensor>& truths,
                         int num_thresholds) {
  if (preds.empty()) throw ArgumentError("best_f1_sweep: no images");
  if (preds.size() != truths.size()) throw ArgumentError("best_f1_sweep: preds/truths count mismatch");
  if (num_thresholds < 1) throw ArgumentError("best_f1_sweep: num_thresholds must be >= 1");
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i].size() != truths[i].size()) {
      throw ArgumentError("best_f1_sweep: image " + std::to_string(i) + " size mismatch");
    }
    check_binary(truths[i]);
  }

  const auto norm = normalize_pooled(preds);
  std::vector<double> scores;
  std::vector<std::uint8_t> labels;
  std::vector<double> pos, neg;
  double abs_err = 0.0;
  for (std::size_t i = 0; i < norm.size(); ++i) {
    for (std::size_t p = 0; p < norm[i].size(); ++p) {
      const double s = norm[i][p];
      const bool defect = truths[i][p] != 0.0;
      scores.push_back(s);
      labels.push_back(defect ? 1 : 0);
      (defect ? pos : neg).push_back(s);
      abs_err += std::abs(s - truths[i][p]);
    }
  }

  EvalReport report;
  report.mae = abs_err / static_cast<double>(scores.size());
  report.auroc = (pos.empty() || neg.empty()) ? std::numeric_limits<double>::quiet_NaN()
                                              : auroc(scores, labels);

  std::sort(pos.begin(), pos.end());
  std::sort(neg.begin(), neg.end());
  std::vector<double> sorted = scores;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  const auto count_above = [](const std::vector<double>& v, double t) {
    return static_cast<std::int64_t>(v.end() - std::upper_bound(v.begin(), v.end(), t));
  };

  double best_f1 = -1.0;
  for (int i = 0; i < num_thresholds; ++i) {
    const double q = num_thresholds == 1 ? 0.0 : static_cast<double>(i) / (num_thresholds - 1);
    const auto idx = static_cast<std::size_t>(std::llround(q * static_cast<double>(n - 1)));
    const double t = sorted[idx];
    Confusion c;
    c.tp = count_above(pos, t);
    c.fn = static_cast<std::int64_t>(pos.size()) - c.tp;
    c.fp = count_above(neg, t);
    c.tn = static_cast<std::int64_t>(neg.size()) - c.fp;
    const double f1 = c.f1();
    if (f1 > best_f1 || (f1 == best_f1 && t < report.threshold)) {
      best_f1 = f1;
      report.threshold = t;
      report.confusion = c;
    }
  }
  report.f1 = report.confusion.f1();
  report.acc = report.confusion.accuracy();
  return report;
}

EvalReport evaluate_by_category(const std::vector<Tensor>& preds, const std::vector<Tensor>& truths,
                                const std::vector<std::string>& categories, int num_thresholds) {
  if (categories.size() != preds.size()) {
    throw ArgumentError("evaluate_by_category: one category per image required");
  }
  EvalReport report = best_f1_sweep(preds, truths, num_thresholds);
  std::map<std::string, std::pair<std::vector<Tensor>, std::vector<Tensor>>> groups;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    groups[categories[i]].first.push_back(preds[i]);
    groups[categories[i]].second.push_back(truths[i]);
  }
  for (const auto& [name, group] : groups) {
    report.per_category[name] = best_f1_sweep(group.first, group.second, num_thresholds);
  }
  return report;
}

}  // namespace mfrnet

#include "synthdet/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace synthdet::metrics {

namespace {

struct ClassCounts {
  std::size_t positives = 0;
  std::size_t negatives = 0;
};

ClassCounts check_inputs(std::span<const double> scores, std::span<const int> labels, const char* what) {
  if (scores.size() != labels.size())
    throw std::invalid_argument(std::string(what) + ": scores and labels differ in length");
  if (scores.empty()) throw std::invalid_argument(std::string(what) + ": empty input");
  ClassCounts counts;
  for (int l : labels) {
    if (l == 1) {
      ++counts.positives;
    } else if (l == 0) {
      ++counts.negatives;
    } else {
      throw std::invalid_argument(std::string(what) + ": labels must be 0 or 1");
    }
  }
  return counts;
}

ClassCounts require_both_classes(std::span<const double> scores, std::span<const int> labels, const char* what) {
  auto counts = check_inputs(scores, labels, what);
  if (counts.positives == 0 || counts.negatives == 0)
    throw std::invalid_argument(std::string(what) + ": requires both classes");
  return counts;
}

std::vector<std::size_t> descending_order(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

/// Cumulative (tp, fp) after each group of tied scores, in descending score order.
struct OperatingPoint {
  std::size_t tp;
  std::size_t fp;
};

std::vector<OperatingPoint> sweep(std::span<const double> scores, std::span<const int> labels) {
  const auto order = descending_order(scores);
  std::vector<OperatingPoint> points;
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double s = scores[order[i]];
    while (i < order.size() && scores[order[i]] == s) {
      if (labels[order[i]] == 1) {
        ++tp;
      } else {
        ++fp;
      }
      ++i;
    }
    points.push_back({tp, fp});
  }
  return points;
}

}  // namespace

double average_precision(std::span<const double> scores, std::span<const int> labels) {
  const auto counts = require_both_classes(scores, labels, "average_precision");
  const double positives = static_cast<double>(counts.positives);
  double ap = 0.0;
  double prev_recall = 0.0;
  for (const auto& p : sweep(scores, labels)) {
    const double recall = static_cast<double>(p.tp) / positives;
    const double precision = static_cast<double>(p.tp) / static_cast<double>(p.tp + p.fp);
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
  }
  return ap;
}

double accuracy_at_threshold(std::span<const double> scores, std::span<const int> labels, double threshold) {
  check_inputs(scores, labels, "accuracy_at_threshold");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const int predicted = scores[i] >= threshold ? 1 : 0;
    if (predicted == labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(scores.size());
}

double f1_score(std::span<const double> scores, std::span<const int> labels, double threshold) {
  check_inputs(scores, labels, "f1_score");
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool predicted = scores[i] >= threshold;
    if (predicted && labels[i] == 1) ++tp;
    if (predicted && labels[i] == 0) ++fp;
    if (!predicted && labels[i] == 1) ++fn;
  }
  const double precision = tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
  const double recall = tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
  if (precision + recall == 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
  const auto counts = require_both_classes(scores, labels, "roc_auc");
  // Trapezoids between successive tie groups give exactly the pair-counting
  // statistic with ties counted as one half.
  double area = 0.0;
  std::size_t prev_tp = 0, prev_fp = 0;
  for (const auto& p : sweep(scores, labels)) {
    area += static_cast<double>(p.fp - prev_fp) * static_cast<double>(p.tp + prev_tp) / 2.0;
    prev_tp = p.tp;
    prev_fp = p.fp;
  }
  return area / (static_cast<double>(counts.positives) * static_cast<double>(counts.negatives));
}

double tpr_at_fpr(std::span<const double> scores, std::span<const int> labels, double fpr_cap) {
  const auto counts = require_both_classes(scores, labels, "tpr_at_fpr");
  if (fpr_cap < 0.0 || fpr_cap > 1.0) throw std::invalid_argument("tpr_at_fpr: fpr cap must be in [0, 1]");
  const double positives = static_cast<double>(counts.positives);
  const double negatives = static_cast<double>(counts.negatives);
  double best = 0.0;  // threshold above every score: nothing flagged
  for (const auto& p : sweep(scores, labels)) {
    if (static_cast<double>(p.fp) / negatives <= fpr_cap) best = std::max(best, static_cast<double>(p.tp) / positives);
  }
  return best;
}

}  // namespace synthdet::metrics

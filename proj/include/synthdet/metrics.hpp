#pragma once

#include <span>

namespace synthdet::metrics {

// Labels are 1 for synthetic (positive) and 0 for real. Rank metrics need
// both classes and throw std::invalid_argument otherwise.

/// Area under the precision-recall step curve. Tied scores form a single
/// threshold: AP = sum_k (R_k - R_{k-1}) * P_k over distinct thresholds in
/// descending order.
double average_precision(std::span<const double> scores, std::span<const int> labels);

/// Fraction of samples with (score >= threshold) == label.
double accuracy_at_threshold(std::span<const double> scores, std::span<const int> labels, double threshold = 0.5);

/// F1 on the synthetic class; 0 when precision + recall is 0.
double f1_score(std::span<const double> scores, std::span<const int> labels, double threshold = 0.5);

/// Probability that a random positive outranks a random negative, ties count 1/2.
double roc_auc(std::span<const double> scores, std::span<const int> labels);

/// Largest TPR over thresholds whose empirical FPR does not exceed `fpr_cap`.
double tpr_at_fpr(std::span<const double> scores, std::span<const int> labels, double fpr_cap);

}  // namespace synthdet::metrics

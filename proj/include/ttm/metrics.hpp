#pragma once

#include <span>

namespace ttm {

/// Probability that a random positive outscores a random negative, ties
/// counting one half. Rank-sum with average ranks; O(n log n).
/// Throws MetricError unless both classes are present.
double auc(std::span<const double> scores, std::span<const double> labels);

/// Root mean squared error. Throws InputError on empty or mismatched input.
double rmse(std::span<const double> pred, std::span<const double> target);

/// Fraction of rows where (score >= threshold) matches the label.
double accuracy(std::span<const double> scores, std::span<const double> labels, double threshold = 0.5);

/// Mean binary cross-entropy of probabilities, clamped to [1e-15, 1 - 1e-15].
double log_loss(std::span<const double> probs, std::span<const double> labels);

}  // namespace ttm

#include "ttm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "ttm/errors.hpp"

namespace ttm {

namespace {

void check_lengths(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw InputError(std::string(what) + ": length mismatch (" + std::to_string(a) + " vs " +
                     std::to_string(b) + ")");
  }
  if (a == 0) {
    throw InputError(std::string(what) + ": empty input");
  }
}

}  // namespace

double auc(std::span<const double> scores, std::span<const double> labels) {
  check_lengths(scores.size(), labels.size(), "auc");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Sum of (1-based, tie-averaged) ranks of the positives. Ranks are
  // half-integers, so the sum is exact in double for any realistic n.
  double rank_sum = 0.0;
  double n_pos = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) {
      ++j;
    }
    const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (std::size_t k = i; k <= j; ++k) {
      const double y = labels[order[k]];
      if (y != 0.0 && y != 1.0) {
        throw InputError("auc: labels must be 0 or 1");
      }
      if (y == 1.0) {
        rank_sum += avg_rank;
        n_pos += 1.0;
      }
    }
    i = j + 1;
  }
  const double n_neg = static_cast<double>(n) - n_pos;
  if (n_pos == 0.0 || n_neg == 0.0) {
    throw MetricError("auc: undefined with a single class present");
  }
  return (rank_sum - n_pos * (n_pos + 1.0) / 2.0) / (n_pos * n_neg);
}

double rmse(std::span<const double> pred, std::span<const double> target) {
  check_lengths(pred.size(), target.size(), "rmse");
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - target[i];
    acc += d * d;
  }
  return std::sqrt(acc / static_cast<double>(pred.size()));
}

double accuracy(std::span<const double> scores, std::span<const double> labels, double threshold) {
  check_lengths(scores.size(), labels.size(), "accuracy");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool predicted = scores[i] >= threshold;
    if (predicted == (labels[i] == 1.0)) {
      ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(scores.size());
}

double log_loss(std::span<const double> probs, std::span<const double> labels) {
  check_lengths(probs.size(), labels.size(), "log_loss");
  double acc = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const double p = std::clamp(probs[i], 1e-15, 1.0 - 1e-15);
    acc -= labels[i] == 1.0 ? std::log(p) : std::log1p(-p);
  }
  return acc / static_cast<double>(probs.size());
}

}  // namespace ttm

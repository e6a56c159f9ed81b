#pragma once

// Timestamp featurization psi(t): fixed sin/cos features over calendar-scale
// periods plus a linear trend, followed by a learned projection.
//
// Raw layout: periods in configured order (default year, month, day, hour),
// within each period sin(2 pi k t / P), cos(2 pi k t / P) interleaved for
// k = 1..order, then the trend column if enabled. Phase is anchored at epoch 0.

#include <span>
#include <string>
#include <vector>

#include "ttm/numeric.hpp"

namespace ttm {

inline constexpr double kHourSeconds = 3600.0;
inline constexpr double kDaySeconds = 86400.0;
inline constexpr double kYearSeconds = 365.2425 * kDaySeconds;  // 31556952
inline constexpr double kMonthSeconds = kYearSeconds / 12.0;     // 2629746
inline constexpr int kDefaultOrder = 128;

enum class PeriodName { Year, Month, Day, Hour };

std::string to_string(PeriodName name);
PeriodName period_name_from_string(const std::string& s);
double period_seconds(PeriodName name);

struct PeriodSpec {
  PeriodName name = PeriodName::Year;
  double period_seconds = kYearSeconds;
  int order = kDefaultOrder;

  static PeriodSpec make(PeriodName name, int order = kDefaultOrder) {
    return {name, ttm::period_seconds(name), order};
  }
};

struct EmbeddingConfig {
  std::vector<PeriodSpec> periods = default_periods();
  bool trend = true;
  int d_embedding = 128;

  static std::vector<PeriodSpec> default_periods(int order = kDefaultOrder);

  Eigen::Index raw_width() const;
  bool enabled() const { return d_embedding > 0; }
  /// Throws InputError on bad orders, non-power-of-two width or no active component.
  void validate() const;
};

/// Maps timestamps to (t - t_min) / (t_max - t_min) using the training range.
/// Not clipped: later timestamps give values above 1.
struct TrendNormalizer {
  double t_min = 0.0;
  double t_max = 1.0;

  static TrendNormalizer fit(std::span<const double> t);
  double apply(double t) const { return (t - t_min) / (t_max - t_min); }
};

Vector raw_features(double t, const EmbeddingConfig& config, const TrendNormalizer& normalizer);
Matrix raw_features(std::span<const double> t, const EmbeddingConfig& config,
                    const TrendNormalizer& normalizer);

struct EmbeddingCache {
  Matrix raw;
  Matrix psi;
  bool valid() const { return raw.rows() > 0 || psi.rows() > 0; }
};

/// Config, trend normalizer and the learned raw -> d_embedding projection.
class TemporalEmbedding {
 public:
  TemporalEmbedding() = default;
  TemporalEmbedding(EmbeddingConfig config, TrendNormalizer normalizer, Linear<double> projection);

  const EmbeddingConfig& config() const { return config_; }
  const TrendNormalizer& normalizer() const { return normalizer_; }
  void set_normalizer(TrendNormalizer n) { normalizer_ = n; }
  Linear<double>& projection() { return projection_; }
  const Linear<double>& projection() const { return projection_; }
  Eigen::Index width() const { return projection_.out(); }

  Matrix raw(std::span<const double> t) const { return raw_features(t, config_, normalizer_); }

  /// Projects precomputed raw features; keeps them for backward.
  EmbeddingCache forward(Matrix raw) const;
  Vector embed(double t) const;
  Matrix embed(std::span<const double> t) const;

  /// Accumulates projection gradients. Raw features are constants of t.
  void backward(const EmbeddingCache& cache, const Matrix& upstream);

 private:
  EmbeddingConfig config_;
  TrendNormalizer normalizer_;
  Linear<double> projection_;
};

}  // namespace ttm

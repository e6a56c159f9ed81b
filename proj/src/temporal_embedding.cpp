#include "ttm/temporal_embedding.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numbers>
#include <set>

namespace ttm {

std::string to_string(PeriodName name) {
  switch (name) {
    case PeriodName::Year: return "year";
    case PeriodName::Month: return "month";
    case PeriodName::Day: return "day";
    case PeriodName::Hour: return "hour";
  }
  return "?";
}

PeriodName period_name_from_string(const std::string& s) {
  if (s == "year") return PeriodName::Year;
  if (s == "month") return PeriodName::Month;
  if (s == "day") return PeriodName::Day;
  if (s == "hour") return PeriodName::Hour;
  throw InputError("unknown period '" + s + "' (expected year, month, day or hour)");
}

double period_seconds(PeriodName name) {
  switch (name) {
    case PeriodName::Year: return kYearSeconds;
    case PeriodName::Month: return kMonthSeconds;
    case PeriodName::Day: return kDaySeconds;
    case PeriodName::Hour: return kHourSeconds;
  }
  return kYearSeconds;
}

std::vector<PeriodSpec> EmbeddingConfig::default_periods(int order) {
  return {PeriodSpec::make(PeriodName::Year, order), PeriodSpec::make(PeriodName::Month, order),
          PeriodSpec::make(PeriodName::Day, order), PeriodSpec::make(PeriodName::Hour, order)};
}

Eigen::Index EmbeddingConfig::raw_width() const {
  Eigen::Index w = trend ? 1 : 0;
  for (const auto& p : periods) {
    w += 2 * static_cast<Eigen::Index>(p.order);
  }
  return w;
}

void EmbeddingConfig::validate() const {
  std::set<PeriodName> seen;
  for (const auto& p : periods) {
    if (p.order < 0) {
      throw InputError("embedding: negative order for period " + to_string(p.name));
    }
    if (!(p.period_seconds > 0) || !std::isfinite(p.period_seconds)) {
      throw InputError("embedding: period length must be positive");
    }
    if (!seen.insert(p.name).second) {
      throw InputError("embedding: duplicate period " + to_string(p.name));
    }
  }
  if (d_embedding < 0 ||
      (d_embedding > 0 && !std::has_single_bit(static_cast<unsigned>(d_embedding)))) {
    throw InputError("embedding: d_embedding must be 0 or a power of two, got " +
                     std::to_string(d_embedding));
  }
  if (d_embedding > 0 && raw_width() == 0) {
    throw InputError("embedding: no active periodic or trend component");
  }
}

TrendNormalizer TrendNormalizer::fit(std::span<const double> t) {
  if (t.empty()) {
    throw InputError("trend normalizer: no timestamps");
  }
  const auto [lo, hi] = std::minmax_element(t.begin(), t.end());
  if (!(*hi > *lo)) {
    throw InputError("trend normalizer: training timestamps must span a positive range");
  }
  return {*lo, *hi};
}

namespace {

void fill_raw(double t, const EmbeddingConfig& config, const TrendNormalizer& normalizer,
              double* out) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  for (const auto& p : config.periods) {
    // Reduce before scaling so that t and t + P give bit-identical phases.
    double r = std::fmod(t, p.period_seconds);
    if (r < 0) {
      r += p.period_seconds;
    }
    for (int k = 1; k <= p.order; ++k) {
      const double phase = std::fmod(static_cast<double>(k) * r, p.period_seconds) / p.period_seconds;
      const double angle = two_pi * phase;
      *out++ = std::sin(angle);
      *out++ = std::cos(angle);
    }
  }
  if (config.trend) {
    *out = normalizer.apply(t);
  }
}

}  // namespace

Vector raw_features(double t, const EmbeddingConfig& config, const TrendNormalizer& normalizer) {
  if (config.raw_width() == 0) {
    throw InputError("raw_features: no active component");
  }
  Vector v(config.raw_width());
  fill_raw(t, config, normalizer, v.data());
  return v;
}

Matrix raw_features(std::span<const double> t, const EmbeddingConfig& config,
                    const TrendNormalizer& normalizer) {
  if (config.raw_width() == 0) {
    throw InputError("raw_features: no active component");
  }
  Matrix m(static_cast<Eigen::Index>(t.size()), config.raw_width());
  for (std::size_t i = 0; i < t.size(); ++i) {
    fill_raw(t[i], config, normalizer, m.row(static_cast<Eigen::Index>(i)).data());
  }
  return m;
}

TemporalEmbedding::TemporalEmbedding(EmbeddingConfig config, TrendNormalizer normalizer,
                                     Linear<double> projection)
    : config_(std::move(config)), normalizer_(normalizer), projection_(std::move(projection)) {
  config_.validate();
  if (projection_.in() != config_.raw_width()) {
    throw DimensionError("temporal embedding: projection input " + std::to_string(projection_.in()) +
                         " != raw width " + std::to_string(config_.raw_width()));
  }
}

EmbeddingCache TemporalEmbedding::forward(Matrix raw) const {
  EmbeddingCache cache;
  cache.psi = linear_forward(projection_, raw);
  cache.raw = std::move(raw);
  return cache;
}

Vector TemporalEmbedding::embed(double t) const {
  const double ts[] = {t};
  return embed(ts).row(0).transpose();
}

Matrix TemporalEmbedding::embed(std::span<const double> t) const {
  return linear_forward(projection_, raw(t));
}

void TemporalEmbedding::backward(const EmbeddingCache& cache, const Matrix& upstream) {
  if (!cache.valid()) {
    throw InputError("temporal embedding backward: no forward cache");
  }
  linear_backward_params(projection_, cache.raw, upstream);
}

}  // namespace ttm

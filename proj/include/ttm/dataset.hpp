#pragma once

// Timestamped tabular data: container, CSV I/O, splits, standardization,
// synthetic shift generators and per-window distribution statistics.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ttm/model.hpp"
#include "ttm/numeric.hpp"

namespace ttm {

struct Dataset {
  Matrix X;
  Vector y;
  std::vector<double> t;  // epoch seconds
  std::vector<std::string> feature_names;
  Task task = Task::BinaryClassification;

  Eigen::Index rows() const { return X.rows(); }
  Eigen::Index cols() const { return X.cols(); }
  /// Throws InputError on length mismatch, non-finite values or non-binary labels.
  void validate() const;
  Dataset subset(std::span<const std::size_t> rows) const;
};

struct SplitRatios {
  double train = 0.7;
  double val = 0.15;
  double test = 0.15;

  void validate() const;
};

/// Disjoint train/val/test row indices covering the dataset.
///
/// Sizes: train = floor(r_train * n), val = floor(r_val * n), test = the rest.
struct SplitAssignment {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;

  void validate(std::size_t n) const;
};

/// Chronological cut after a stable sort on (t, original index).
SplitAssignment temporal_split(const Dataset& ds, SplitRatios ratios = {});
/// Seeded Fisher-Yates shuffle followed by the same cut.
SplitAssignment random_split(const Dataset& ds, SplitRatios ratios, std::uint64_t seed);

/// Per-column mean and population std over the training rows. Columns with
/// zero spread are centred but divided by 1.
struct Standardizer {
  Vector mean;
  Vector std;

  static Standardizer fit(const Matrix& X, std::span<const std::size_t> rows);
  static Standardizer fit(const Matrix& X);
  Matrix apply(const Matrix& X) const;
  Vector inverse(const Vector& z, Eigen::Index column = 0) const;
  double divisor(Eigen::Index j) const { return std::abs(std(j)) > 0 ? std(j) : 1.0; }
};

enum class ShiftKind { Concept, Covariate, Label, None };

std::string to_string(ShiftKind kind);
/// Accepts "concept-shift", "covariate-shift", "label-shift", "no-shift" and
/// the short forms "concept", "covariate", "label", "none".
ShiftKind shift_kind_from_string(const std::string& s);

/// Integer epoch of the first generated row (2020-01-01T03:00:00Z, a whole
/// number of year periods so that the yearly phase starts at 0).
inline constexpr double kGeneratorEpoch = 1577847600.0;
inline constexpr double kGeneratorSpan = 31556952.0;

struct ShiftGeneratorSpec {
  ShiftKind kind = ShiftKind::Concept;
  std::size_t n = 10000;
  std::uint64_t seed = 0;
  int segments = 5;
  double radius = 2.0;
  double noise = 0.5;

  void validate() const;
};

/// Rows i = 0..n-1 at u = i/n, t = epoch + round(u * span). Labels y ~ Bernoulli(pi(u)) and
/// x ~ N(mu_y(u), noise^2 I):
///   Concept:   mu = +-r (cos 2 pi u, sin 2 pi u), pi = 0.5
///   Covariate: mu = (4u, 0) +- (r, 0),             pi = 0.5
///   Label:     mu = +-(r, 0),                       pi = 0.2 + 0.6 u
///   None:      mu = +-(r, 0),                       pi = 0.5
Dataset generate(const ShiftGeneratorSpec& spec);

/// Position in [0, 1) of a generated timestamp.
double generator_phase(double t);
/// Segment index floor(u * segments) clamped to the last segment.
int segment_of(double t, int segments);
/// Timestamp at the centre of a segment.
double segment_center(int segment, int segments);

struct Moments {
  double mean = 0.0;
  double std = 0.0;
  std::optional<double> skewness;  // missing with < 3 values or zero spread
};

/// Population moments; skewness g1 = m3 / m2^(3/2).
Moments moments(std::span<const double> values);

struct WindowStat {
  std::size_t window = 0;
  double t_start = 0.0;
  double t_end = 0.0;
  std::string feature;
  Moments moments;
};

/// Equal-count chronological windows; row order window-major, feature-minor.
std::vector<WindowStat> temporal_stats(const Dataset& ds, std::size_t n_windows);

// ---- CSV ----

struct CsvOptions {
  std::string label_col = "y";
  std::string time_col = "t";
  std::vector<std::string> categorical_cols;
  Task task = Task::BinaryClassification;
};

/// Parsed file before categorical encoding.
struct CsvTable {
  std::vector<std::string> numeric_names;
  std::vector<std::vector<double>> numeric;  // column-major
  std::vector<std::string> categorical_names;
  std::vector<std::vector<std::string>> categorical;  // column-major
  std::vector<double> y;
  std::vector<double> t;
  Task task = Task::BinaryClassification;

  std::size_t rows() const { return t.size(); }
};

CsvTable read_csv_table(const std::filesystem::path& path, const CsvOptions& options);

/// One-hot encodes categoricals with categories ordered by first appearance
/// among `vocab_rows` (in index order). Unseen categories encode as all zeros.
Dataset encode(const CsvTable& table, std::span<const std::size_t> vocab_rows);

/// read_csv_table + encode with the vocabulary taken from every row.
Dataset load_csv(const std::filesystem::path& path, const CsvOptions& options);

/// Parses epoch seconds ("1577836800", "1.5e9") or RFC 3339
/// ("2020-01-01T00:00:00Z", "2020-01-01 00:00:00+02:00").
std::optional<double> parse_timestamp(std::string_view s);

/// Header: feature names, y, t. Values printed with %.17g, t as an integer
/// when integral.
void write_csv(const Dataset& ds, const std::filesystem::path& path);
std::string format_double(double v);

void write_stats_csv(const std::vector<WindowStat>& stats, const std::filesystem::path& path);

}  // namespace ttm

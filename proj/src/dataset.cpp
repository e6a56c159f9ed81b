#include "ttm/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <numeric>
#include <sstream>

#include "ttm/rng.hpp"

namespace ttm {

void Dataset::validate() const {
  const auto n = static_cast<std::size_t>(X.rows());
  if (static_cast<std::size_t>(y.size()) != n || t.size() != n) {
    throw InputError("dataset: X has " + std::to_string(n) + " rows, y " + std::to_string(y.size()) +
                     ", t " + std::to_string(t.size()));
  }
  if (!feature_names.empty() && feature_names.size() != static_cast<std::size_t>(X.cols())) {
    throw InputError("dataset: feature name count does not match columns");
  }
  require_finite(X, "dataset features");
  require_finite(y, "dataset labels");
  for (double v : t) {
    if (!std::isfinite(v)) {
      throw InputError("dataset: non-finite timestamp");
    }
  }
  if (task == Task::BinaryClassification) {
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      if (y(i) != 0.0 && y(i) != 1.0) {
        throw InputError("dataset: label at row " + std::to_string(i) + " is not 0 or 1");
      }
    }
  }
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
  Dataset out;
  out.X.resize(static_cast<Eigen::Index>(rows.size()), X.cols());
  out.y.resize(static_cast<Eigen::Index>(rows.size()));
  out.t.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(rows[i]);
    out.X.row(static_cast<Eigen::Index>(i)) = X.row(r);
    out.y(static_cast<Eigen::Index>(i)) = y(r);
    out.t.push_back(t[rows[i]]);
  }
  out.feature_names = feature_names;
  out.task = task;
  return out;
}

// ---- splits ----

void SplitRatios::validate() const {
  if (!(train > 0) || !(val > 0) || !(test > 0)) {
    throw InputError("split ratios must all be positive");
  }
  if (std::abs(train + val + test - 1.0) > 1e-9) {
    throw InputError("split ratios must sum to 1");
  }
}

void SplitAssignment::validate(std::size_t n) const {
  std::vector<char> seen(n, 0);
  for (const auto* part : {&train, &val, &test}) {
    if (part->empty()) {
      throw InputError("split: empty partition");
    }
    for (std::size_t i : *part) {
      if (i >= n || seen[i]) {
        throw InputError("split: index " + std::to_string(i) + " out of range or repeated");
      }
      seen[i] = 1;
    }
  }
  if (train.size() + val.size() + test.size() != n) {
    throw InputError("split: partitions do not cover the dataset");
  }
}

namespace {

SplitAssignment cut(const std::vector<std::size_t>& order, const SplitRatios& r) {
  const std::size_t n = order.size();
  const auto n_train = static_cast<std::size_t>(std::floor(r.train * static_cast<double>(n) + 1e-9));
  const auto n_val = static_cast<std::size_t>(std::floor(r.val * static_cast<double>(n) + 1e-9));
  if (n_train == 0 || n_val == 0 || n_train + n_val >= n) {
    throw InputError("split: ratios leave an empty partition for " + std::to_string(n) + " rows");
  }
  SplitAssignment s;
  s.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.val.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train),
               order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  s.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), order.end());
  return s;
}

std::vector<std::size_t> chronological_order(std::span<const double> t) {
  std::vector<std::size_t> order(t.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return t[a] < t[b]; });
  return order;
}

}  // namespace

SplitAssignment temporal_split(const Dataset& ds, SplitRatios ratios) {
  ratios.validate();
  if (ds.t.size() < 3) {
    throw InputError("temporal_split: need at least 3 rows");
  }
  return cut(chronological_order(ds.t), ratios);
}

SplitAssignment random_split(const Dataset& ds, SplitRatios ratios, std::uint64_t seed) {
  ratios.validate();
  const std::size_t n = static_cast<std::size_t>(ds.rows());
  if (n < 3) {
    throw InputError("random_split: need at least 3 rows");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  CounterRng rng(derive_seed(seed, "split"));
  for (std::size_t i = n - 1; i > 0; --i) {
    std::swap(order[i], order[rng.index(i + 1)]);
  }
  return cut(order, ratios);
}

// ---- standardization ----

Standardizer Standardizer::fit(const Matrix& X, std::span<const std::size_t> rows) {
  if (rows.empty()) {
    throw InputError("standardizer: empty training set");
  }
  const auto n = static_cast<double>(rows.size());
  Standardizer s{Vector::Zero(X.cols()), Vector::Zero(X.cols())};
  for (std::size_t r : rows) {
    s.mean += X.row(static_cast<Eigen::Index>(r)).transpose();
  }
  s.mean /= n;
  for (std::size_t r : rows) {
    s.std += (X.row(static_cast<Eigen::Index>(r)).transpose() - s.mean).cwiseAbs2();
  }
  s.std = (s.std / n).cwiseSqrt();
  return s;
}

Standardizer Standardizer::fit(const Matrix& X) {
  std::vector<std::size_t> rows(static_cast<std::size_t>(X.rows()));
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return fit(X, rows);
}

Matrix Standardizer::apply(const Matrix& X) const {
  if (X.cols() != mean.size()) {
    throw DimensionError("standardizer: " + std::to_string(X.cols()) + " columns, fitted on " +
                         std::to_string(mean.size()));
  }
  Matrix out(X.rows(), X.cols());
  for (Eigen::Index j = 0; j < X.cols(); ++j) {
    out.col(j) = (X.col(j).array() - mean(j)) / divisor(j);
  }
  return out;
}

Vector Standardizer::inverse(const Vector& z, Eigen::Index column) const {
  return (z.array() * divisor(column) + mean(column)).matrix();
}

// ---- generators ----

std::string to_string(ShiftKind kind) {
  switch (kind) {
    case ShiftKind::Concept: return "concept-shift";
    case ShiftKind::Covariate: return "covariate-shift";
    case ShiftKind::Label: return "label-shift";
    case ShiftKind::None: return "no-shift";
  }
  return "?";
}

ShiftKind shift_kind_from_string(const std::string& s) {
  if (s == "concept-shift" || s == "concept") return ShiftKind::Concept;
  if (s == "covariate-shift" || s == "covariate") return ShiftKind::Covariate;
  if (s == "label-shift" || s == "label") return ShiftKind::Label;
  if (s == "no-shift" || s == "none") return ShiftKind::None;
  throw InputError("unknown shift kind '" + s +
                   "' (expected concept-shift, covariate-shift, label-shift or no-shift)");
}

void ShiftGeneratorSpec::validate() const {
  if (n == 0) {
    throw InputError("generator: n must be positive");
  }
  if (segments < 1) {
    throw InputError("generator: segments must be >= 1");
  }
  if (!(radius > 0) || !std::isfinite(radius) || !(noise > 0) || !std::isfinite(noise)) {
    throw InputError("generator: radius and noise must be positive and finite");
  }
}

Dataset generate(const ShiftGeneratorSpec& spec) {
  spec.validate();
  const auto n = static_cast<Eigen::Index>(spec.n);
  Dataset ds;
  ds.X.resize(n, 2);
  ds.y.resize(n);
  ds.t.resize(spec.n);
  ds.feature_names = {"x0", "x1"};
  ds.task = Task::BinaryClassification;
  CounterRng rng(derive_seed(spec.seed, "generator", static_cast<std::uint64_t>(spec.kind)));
  const double r = spec.radius;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double u = static_cast<double>(i) / static_cast<double>(n);
    const double prior = spec.kind == ShiftKind::Label ? 0.2 + 0.6 * u : 0.5;
    const bool positive = rng.uniform() < prior;
    const double sign = positive ? 1.0 : -1.0;
    double mx = sign * r;
    double my = 0.0;
    if (spec.kind == ShiftKind::Concept) {
      const double theta = 2.0 * std::numbers::pi * u;
      mx = sign * r * std::cos(theta);
      my = sign * r * std::sin(theta);
    } else if (spec.kind == ShiftKind::Covariate) {
      mx += 4.0 * u;
    }
    const auto [z0, z1] = rng.normal_pair();
    ds.X(i, 0) = mx + spec.noise * z0;
    ds.X(i, 1) = my + spec.noise * z1;
    ds.y(i) = positive ? 1.0 : 0.0;
    ds.t[static_cast<std::size_t>(i)] = kGeneratorEpoch + std::round(u * kGeneratorSpan);
  }
  return ds;
}

double generator_phase(double t) {
  return (t - kGeneratorEpoch) / kGeneratorSpan;
}

int segment_of(double t, int segments) {
  const int s = static_cast<int>(std::floor(generator_phase(t) * segments));
  return std::clamp(s, 0, segments - 1);
}

double segment_center(int segment, int segments) {
  const double u = (static_cast<double>(segment) + 0.5) / static_cast<double>(segments);
  return kGeneratorEpoch + std::round(u * kGeneratorSpan);
}

// ---- statistics ----

Moments moments(std::span<const double> values) {
  Moments m;
  if (values.empty()) {
    return m;
  }
  const auto n = static_cast<double>(values.size());
  double sum = 0.0;
  for (double v : values) {
    sum += v;
  }
  m.mean = sum / n;
  double m2 = 0.0;
  double m3 = 0.0;
  for (double v : values) {
    const double d = v - m.mean;
    m2 += d * d;
    m3 += d * d * d;
  }
  m2 /= n;
  m3 /= n;
  m.std = std::sqrt(m2);
  if (values.size() >= 3 && m2 > 0.0) {
    m.skewness = m3 / std::pow(m2, 1.5);
  }
  return m;
}

std::vector<WindowStat> temporal_stats(const Dataset& ds, std::size_t n_windows) {
  const auto n = static_cast<std::size_t>(ds.rows());
  if (n_windows == 0 || n_windows > n) {
    throw InputError("temporal_stats: need 1 <= windows <= rows (" + std::to_string(n) + ")");
  }
  const auto order = chronological_order(ds.t);
  std::vector<WindowStat> out;
  std::vector<double> column;
  for (std::size_t w = 0; w < n_windows; ++w) {
    const std::size_t begin = w * n / n_windows;
    const std::size_t end = (w + 1) * n / n_windows;
    for (Eigen::Index j = 0; j < ds.cols(); ++j) {
      column.clear();
      for (std::size_t k = begin; k < end; ++k) {
        column.push_back(ds.X(static_cast<Eigen::Index>(order[k]), j));
      }
      WindowStat s;
      s.window = w;
      s.t_start = ds.t[order[begin]];
      s.t_end = ds.t[order[end - 1]];
      s.feature = ds.feature_names.empty() ? "x" + std::to_string(j)
                                           : ds.feature_names[static_cast<std::size_t>(j)];
      s.moments = moments(column);
      out.push_back(std::move(s));
    }
  }
  return out;
}

// ---- CSV ----

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  fields.push_back(std::move(cur));
  return fields;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::optional<double> parse_number(std::string_view s) {
  s = trim(s);
  if (s.empty()) {
    return std::nullopt;
  }
  if (s.front() == '+') {
    s.remove_prefix(1);
  }
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v)) {
    return std::nullopt;
  }
  return v;
}

// Days since 1970-01-01 for a proleptic Gregorian date.
std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) {
  y -= m <= 2 ? 1 : 0;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const auto yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

bool read_int(std::string_view s, std::size_t pos, std::size_t len, int& out) {
  if (pos + len > s.size()) return false;
  out = 0;
  for (std::size_t i = pos; i < pos + len; ++i) {
    if (s[i] < '0' || s[i] > '9') return false;
    out = out * 10 + (s[i] - '0');
  }
  return true;
}

std::optional<double> parse_rfc3339(std::string_view s) {
  int year = 0, month = 0, day = 0, hour = 0, minute = 0, second = 0;
  if (!read_int(s, 0, 4, year) || s.size() < 19 || s[4] != '-' || !read_int(s, 5, 2, month) || s[7] != '-' ||
      !read_int(s, 8, 2, day) || (s[10] != 'T' && s[10] != 't' && s[10] != ' ') || !read_int(s, 11, 2, hour) ||
      s[13] != ':' || !read_int(s, 14, 2, minute) || s[16] != ':' || !read_int(s, 17, 2, second)) {
    return std::nullopt;
  }
  if (month < 1 || month > 12 || day < 1 || day > 31 || hour > 23 || minute > 59 || second > 60) {
    return std::nullopt;
  }
  std::size_t pos = 19;
  double frac = 0.0;
  if (pos < s.size() && s[pos] == '.') {
    double scale = 0.1;
    ++pos;
    const std::size_t start = pos;
    while (pos < s.size() && s[pos] >= '0' && s[pos] <= '9') {
      frac += scale * (s[pos] - '0');
      scale /= 10.0;
      ++pos;
    }
    if (pos == start) return std::nullopt;
  }
  int offset = 0;
  if (pos < s.size() && (s[pos] == 'Z' || s[pos] == 'z')) {
    ++pos;
  } else if (pos < s.size() && (s[pos] == '+' || s[pos] == '-')) {
    int oh = 0, om = 0;
    if (!read_int(s, pos + 1, 2, oh) || pos + 3 >= s.size() || s[pos + 3] != ':' || !read_int(s, pos + 4, 2, om)) {
      return std::nullopt;
    }
    offset = (s[pos] == '+' ? 1 : -1) * (oh * 3600 + om * 60);
    pos += 6;
  } else {
    return std::nullopt;
  }
  if (pos != s.size()) {
    return std::nullopt;
  }
  const std::int64_t days = days_from_civil(year, static_cast<unsigned>(month), static_cast<unsigned>(day));
  return static_cast<double>(days * 86400 + hour * 3600 + minute * 60 + second - offset) + frac;
}

}  // namespace

std::optional<double> parse_timestamp(std::string_view s) {
  s = trim(s);
  if (auto v = parse_number(s)) {
    return v;
  }
  return parse_rfc3339(s);
}

CsvTable read_csv_table(const std::filesystem::path& path, const CsvOptions& options) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot open " + path.string());
  }
  std::string line;
  if (!std::getline(in, line) || trim(line).empty()) {
    throw SchemaError(path.string() + ": empty file (no header)");
  }
  std::vector<std::string> header = split_csv_line(line);
  for (auto& h : header) {
    h = std::string(trim(h));
  }
  if (!header.empty() && header[0].starts_with("\xEF\xBB\xBF")) {
    header[0] = header[0].substr(3);
  }
  const auto find = [&](const std::string& name) -> std::ptrdiff_t {
    const auto it = std::find(header.begin(), header.end(), name);
    return it == header.end() ? -1 : it - header.begin();
  };
  const std::ptrdiff_t label_idx = find(options.label_col);
  if (label_idx < 0) {
    throw SchemaError(path.string() + ": label column '" + options.label_col + "' not found");
  }
  const std::ptrdiff_t time_idx = find(options.time_col);
  if (time_idx < 0) {
    throw SchemaError(path.string() + ": time column '" + options.time_col + "' not found");
  }
  for (const auto& c : options.categorical_cols) {
    if (find(c) < 0) {
      throw SchemaError(path.string() + ": categorical column '" + c + "' not found");
    }
  }

  CsvTable table;
  table.task = options.task;
  std::vector<std::ptrdiff_t> numeric_idx;
  std::vector<std::ptrdiff_t> cat_idx;
  for (std::ptrdiff_t j = 0; j < static_cast<std::ptrdiff_t>(header.size()); ++j) {
    if (j == label_idx || j == time_idx) continue;
    const auto& name = header[static_cast<std::size_t>(j)];
    if (std::find(options.categorical_cols.begin(), options.categorical_cols.end(), name) !=
        options.categorical_cols.end()) {
      cat_idx.push_back(j);
      table.categorical_names.push_back(name);
    } else {
      numeric_idx.push_back(j);
      table.numeric_names.push_back(name);
    }
  }
  table.numeric.resize(numeric_idx.size());
  table.categorical.resize(cat_idx.size());

  std::size_t row = 0;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split_csv_line(line);
    const std::string where =
        path.string() + ": data row " + std::to_string(row + 1) + " (line " + std::to_string(line_no) + ")";
    if (fields.size() != header.size()) {
      throw SchemaError(where + " has " + std::to_string(fields.size()) + " fields, header has " +
                        std::to_string(header.size()));
    }
    const auto label = parse_number(fields[static_cast<std::size_t>(label_idx)]);
    if (!label) {
      throw SchemaError(where + ": unparseable label '" + fields[static_cast<std::size_t>(label_idx)] + "'");
    }
    if (options.task == Task::BinaryClassification && *label != 0.0 && *label != 1.0) {
      throw SchemaError(where + ": label must be 0 or 1");
    }
    const auto ts = parse_timestamp(fields[static_cast<std::size_t>(time_idx)]);
    if (!ts) {
      throw SchemaError(where + ": unparseable timestamp '" + fields[static_cast<std::size_t>(time_idx)] + "'");
    }
    table.y.push_back(*label);
    table.t.push_back(*ts);
    for (std::size_t k = 0; k < numeric_idx.size(); ++k) {
      const auto& cell = fields[static_cast<std::size_t>(numeric_idx[k])];
      const auto v = parse_number(cell);
      if (!v) {
        throw SchemaError(where + ": unparseable value '" + cell + "' in column '" + table.numeric_names[k] + "'");
      }
      table.numeric[k].push_back(*v);
    }
    for (std::size_t k = 0; k < cat_idx.size(); ++k) {
      table.categorical[k].emplace_back(trim(fields[static_cast<std::size_t>(cat_idx[k])]));
    }
    ++row;
  }
  if (row == 0) {
    throw SchemaError(path.string() + ": no data rows");
  }
  return table;
}

Dataset encode(const CsvTable& table, std::span<const std::size_t> vocab_rows) {
  std::vector<std::vector<std::string>> vocab(table.categorical.size());
  for (std::size_t k = 0; k < table.categorical.size(); ++k) {
    for (std::size_t r : vocab_rows) {
      const auto& v = table.categorical[k].at(r);
      if (std::find(vocab[k].begin(), vocab[k].end(), v) == vocab[k].end()) {
        vocab[k].push_back(v);
      }
    }
  }
  Eigen::Index width = static_cast<Eigen::Index>(table.numeric.size());
  for (const auto& v : vocab) {
    width += static_cast<Eigen::Index>(v.size());
  }
  const auto n = static_cast<Eigen::Index>(table.rows());
  Dataset ds;
  ds.task = table.task;
  ds.X = Matrix::Zero(n, width);
  ds.y = Eigen::Map<const Vector>(table.y.data(), n);
  ds.t = table.t;
  ds.feature_names = table.numeric_names;
  for (std::size_t k = 0; k < table.numeric.size(); ++k) {
    for (Eigen::Index i = 0; i < n; ++i) {
      ds.X(i, static_cast<Eigen::Index>(k)) = table.numeric[k][static_cast<std::size_t>(i)];
    }
  }
  Eigen::Index col = static_cast<Eigen::Index>(table.numeric.size());
  for (std::size_t k = 0; k < vocab.size(); ++k) {
    for (const auto& category : vocab[k]) {
      ds.feature_names.push_back(table.categorical_names[k] + "=" + category);
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& v = table.categorical[k][static_cast<std::size_t>(i)];
      const auto it = std::find(vocab[k].begin(), vocab[k].end(), v);
      if (it != vocab[k].end()) {
        ds.X(i, col + (it - vocab[k].begin())) = 1.0;
      }
    }
    col += static_cast<Eigen::Index>(vocab[k].size());
  }
  ds.validate();
  return ds;
}

Dataset load_csv(const std::filesystem::path& path, const CsvOptions& options) {
  const CsvTable table = read_csv_table(path, options);
  std::vector<std::size_t> all(table.rows());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return encode(table, all);
}

std::string format_double(double v) {
  if (std::isfinite(v) && v == std::trunc(v) && std::abs(v) < 1e15) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.0f", v);
    return buf;
  }
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_csv(const Dataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw IoError("cannot write " + path.string());
  }
  for (Eigen::Index j = 0; j < ds.cols(); ++j) {
    out << (ds.feature_names.empty() ? "x" + std::to_string(j) : ds.feature_names[static_cast<std::size_t>(j)])
        << ',';
  }
  out << "y,t\n";
  char buf[40];
  for (Eigen::Index i = 0; i < ds.rows(); ++i) {
    for (Eigen::Index j = 0; j < ds.cols(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", ds.X(i, j));
      out << buf << ',';
    }
    out << format_double(ds.y(i)) << ',' << format_double(ds.t[static_cast<std::size_t>(i)]) << '\n';
  }
  if (!out) {
    throw IoError("write failed for " + path.string());
  }
}

void write_stats_csv(const std::vector<WindowStat>& stats, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw IoError("cannot write " + path.string());
  }
  out << "window,t_start,t_end,feature,mean,std,skewness\n";
  char buf[40];
  const auto g = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  for (const auto& s : stats) {
    out << s.window << ',' << format_double(s.t_start) << ',' << format_double(s.t_end) << ',' << s.feature << ','
        << g(s.moments.mean) << ',' << g(s.moments.std) << ',';
    if (s.moments.skewness) {
      out << g(*s.moments.skewness);
    }
    out << '\n';
  }
  if (!out) {
    throw IoError("write failed for " + path.string());
  }
}

}  // namespace ttm

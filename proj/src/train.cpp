#include "ttm/train.hpp"

#include <bit>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "ttm/config.hpp"
#include "ttm/metrics.hpp"
#include "ttm/rng.hpp"

namespace ttm {

void TrainConfig::validate() const {
  if (batch_size < 1) {
    throw InputError("train: batch_size must be >= 1");
  }
  if (patience < 1) {
    throw InputError("train: patience must be >= 1");
  }
  if (max_epochs < 1) {
    throw InputError("train: max_epochs must be >= 1");
  }
  adamw.validate();
}

AdamW::AdamW(std::vector<Parameter<double>*> params, AdamWConfig config)
    : params_(std::move(params)), config_(config) {
  config_.validate();
  states_.reserve(params_.size());
  for (auto* p : params_) {
    states_.emplace_back(*p);
  }
}

void AdamW::step() {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    adamw_step(*params_[i], states_[i], config_);
  }
}

void AdamW::zero_grad() {
  for (auto* p : params_) {
    p->zero_grad();
  }
}

EarlyStopping::EarlyStopping(std::size_t patience, MetricDirection direction, double tolerance)
    : patience_(patience), direction_(direction), tolerance_(tolerance) {
  if (patience_ < 1) {
    throw InputError("early stopping: patience must be >= 1");
  }
}

bool EarlyStopping::update(double metric) {
  ++epochs_;
  const bool improved = best_epoch_ == 0 ||
                        (direction_ == MetricDirection::HigherIsBetter ? metric > best_ + tolerance_
                                                                       : metric < best_ - tolerance_);
  if (improved) {
    best_ = metric;
    best_epoch_ = epochs_;
    since_best_ = 0;
  } else {
    ++since_best_;
  }
  return improved;
}

std::string primary_metric_name(Task task) {
  return task == Task::BinaryClassification ? "auc" : "rmse";
}

MetricDirection primary_metric_direction(Task task) {
  return task == Task::BinaryClassification ? MetricDirection::HigherIsBetter : MetricDirection::LowerIsBetter;
}

namespace {

constexpr Eigen::Index kEvalChunk = 4096;

Matrix targets(const Vector& y) {
  return Matrix(y);
}

LossResult<double> task_loss(Task task, const Matrix& out, const Vector& y) {
  return task == Task::BinaryClassification ? bce_with_logits(out, targets(y)) : mse_loss(out, targets(y));
}

Matrix gather_rows(const Matrix& m, std::span<const std::size_t> rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(rows[i]));
  }
  return out;
}

Vector gather(const Vector& v, std::span<const std::size_t> rows) {
  Vector out(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out(static_cast<Eigen::Index>(i)) = v(static_cast<Eigen::Index>(rows[i]));
  }
  return out;
}

/// Model outputs for the given rows of precomputed (standardized) inputs.
Vector outputs_for(const Model& model, const Matrix& xs, const Matrix& raw, std::span<const std::size_t> rows) {
  Vector out(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t begin = 0; begin < rows.size(); begin += kEvalChunk) {
    const auto chunk = rows.subspan(begin, std::min<std::size_t>(kEvalChunk, rows.size() - begin));
    const Matrix o = model.forward_raw(gather_rows(xs, chunk), gather_rows(raw, chunk));
    out.segment(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(chunk.size())) = o.col(0);
  }
  return out;
}

EvalMetrics metrics_from_outputs(Task task, const Vector& out, const Vector& y,
                                 const std::optional<Standardizer>& target) {
  EvalMetrics m;
  const std::span<const double> ys(y.data(), static_cast<std::size_t>(y.size()));
  if (task == Task::BinaryClassification) {
    Vector p(out.size());
    for (Eigen::Index i = 0; i < out.size(); ++i) {
      p(i) = sigmoid(out(i));
    }
    const std::span<const double> ps(p.data(), static_cast<std::size_t>(p.size()));
    const std::span<const double> os(out.data(), static_cast<std::size_t>(out.size()));
    bool both = false;
    for (Eigen::Index i = 1; i < y.size() && !both; ++i) {
      both = y(i) != y(0);
    }
    if (both) {
      m.auc = auc(os, ys);
    }
    m.accuracy = accuracy(ps, ys);
    m.log_loss = log_loss(ps, ys);
  } else {
    const Vector pred = target ? target->inverse(out) : out;
    m.rmse = rmse(std::span<const double>(pred.data(), static_cast<std::size_t>(pred.size())), ys);
  }
  return m;
}

double primary(Task task, const EvalMetrics& m) {
  if (task == Task::BinaryClassification) {
    if (!m.auc) {
      throw MetricError("validation AUC undefined: validation split contains a single class");
    }
    return *m.auc;
  }
  return *m.rmse;
}

std::vector<Matrix> snapshot(Model& model) {
  std::vector<Matrix> values;
  for (auto* p : model.parameters()) {
    values.push_back(p->value);
  }
  return values;
}

void restore(Model& model, const std::vector<Matrix>& values) {
  const auto params = model.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    params[i]->value = values[i];
  }
}

}  // namespace

double loss_and_grad(Model& model, const Matrix& x, const Matrix& time_raw, const Vector& y) {
  if (x.rows() == 0) {
    throw InputError("loss_and_grad: empty batch");
  }
  ForwardCache cache;
  const Matrix out = model.forward_raw(x, time_raw, &cache);
  LossResult<double> loss = task_loss(model.spec().task, out, y);
  model.backward(cache, loss.grad);
  return loss.loss;
}

double loss_value(const Model& model, const Matrix& x, const Matrix& time_raw, const Vector& y) {
  if (x.rows() == 0) {
    throw InputError("loss_value: empty batch");
  }
  return task_loss(model.spec().task, model.forward_raw(x, time_raw), y).loss;
}

Vector TrainedModel::logits(const Matrix& X, std::span<const double> t) const {
  const Matrix xs = features.apply(X);
  Vector out(X.rows());
  for (Eigen::Index begin = 0; begin < X.rows(); begin += kEvalChunk) {
    const Eigen::Index len = std::min(kEvalChunk, X.rows() - begin);
    const auto ts = model.spec().uses_time() ? t.subspan(static_cast<std::size_t>(begin), static_cast<std::size_t>(len))
                                             : std::span<const double>{};
    out.segment(begin, len) = model.forward(xs.middleRows(begin, len), ts).col(0);
  }
  return out;
}

Vector TrainedModel::predict(const Matrix& X, std::span<const double> t) const {
  const Vector out = logits(X, t);
  if (model.spec().task == Task::BinaryClassification) {
    return out.unaryExpr([](double z) { return sigmoid(z); });
  }
  return target ? target->inverse(out) : out;
}

EvalMetrics evaluate(const TrainedModel& trained, const Dataset& ds, std::span<const std::size_t> rows) {
  const Dataset sub = ds.subset(rows);
  const Vector out = trained.logits(sub.X, sub.t);
  return metrics_from_outputs(trained.model.spec().task, out, sub.y, trained.target);
}

TrainOutput train(const ModelSpec& spec_in, const Dataset& ds, const SplitAssignment& splits,
                  const TrainConfig& config) {
  const auto start = std::chrono::steady_clock::now();
  config.validate();
  ds.validate();
  splits.validate(static_cast<std::size_t>(ds.rows()));
  if (spec_in.backbone.input_width != ds.cols()) {
    throw InputError("train: model input width " + std::to_string(spec_in.backbone.input_width) +
                     " does not match dataset width " + std::to_string(ds.cols()));
  }
  if (spec_in.task != ds.task) {
    throw InputError("train: model task does not match dataset task");
  }

  TrainOutput result{TrainedModel{Model(spec_in, config.seed), Standardizer::fit(ds.X, splits.train), std::nullopt},
                     RunResult{}};
  TrainedModel& tm = result.trained;
  RunResult& run = result.result;
  Model& model = tm.model;
  const Task task = spec_in.task;
  run.seed = config.seed;
  run.val_metric_name = primary_metric_name(task);

  const Matrix xs = tm.features.apply(ds.X);
  Vector ys = ds.y;
  if (task == Task::Regression) {
    const Matrix ycol = ds.y;
    tm.target = Standardizer::fit(ycol, splits.train);
    ys = tm.target->apply(ycol).col(0);
  }
  if (model.spec().uses_time()) {
    std::vector<double> train_t;
    for (std::size_t r : splits.train) {
      train_t.push_back(ds.t[r]);
    }
    model.set_trend_normalizer(TrendNormalizer::fit(train_t));
  }
  const Matrix raw = model.time_features(ds.t);

  run.initial_train_loss =
      loss_value(model, gather_rows(xs, splits.train), gather_rows(raw, splits.train), gather(ys, splits.train));

  AdamW optimizer(model.parameters(), config.adamw);
  EarlyStopping stopper(config.patience, primary_metric_direction(task));
  std::vector<Matrix> best = snapshot(model);
  std::vector<std::size_t> order = splits.train;
  const Vector y_val = gather(ds.y, splits.val);

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    if (config.shuffle) {
      order = splits.train;
      CounterRng rng(derive_seed(config.seed, "shuffle", epoch));
      for (std::size_t i = order.size() - 1; i > 0; --i) {
        std::swap(order[i], order[rng.index(i + 1)]);
      }
    }
    double loss_sum = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size, ++batch_index) {
      const auto rows = std::span<const std::size_t>(order).subspan(
          begin, std::min(config.batch_size, order.size() - begin));
      optimizer.zero_grad();
      const double loss = loss_and_grad(model, gather_rows(xs, rows), gather_rows(raw, rows), gather(ys, rows));
      if (!std::isfinite(loss)) {
        throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                            std::to_string(batch_index));
      }
      optimizer.step();
      loss_sum += loss * static_cast<double>(rows.size());
    }
    const EvalMetrics val = metrics_from_outputs(task, outputs_for(model, xs, raw, splits.val), y_val, tm.target);
    const double metric = primary(task, val);
    run.history.push_back({epoch, loss_sum / static_cast<double>(order.size()), metric});
    if (stopper.update(metric)) {
      best = snapshot(model);
    }
    if (stopper.should_stop()) {
      break;
    }
  }

  restore(model, best);
  run.best_epoch = stopper.best_epoch();
  run.best_val_metric = stopper.best_metric();
  run.val = metrics_from_outputs(task, outputs_for(model, xs, raw, splits.val), y_val, tm.target);
  run.test = metrics_from_outputs(task, outputs_for(model, xs, raw, splits.test), gather(ds.y, splits.test), tm.target);
  run.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

// ---- model file ----
//
// "TTMMODEL" | u32 version | u64 header bytes | header JSON | float64 LE parameter data

namespace {

constexpr char kMagic[8] = {'T', 'T', 'M', 'M', 'O', 'D', 'E', 'L'};
constexpr std::uint32_t kModelVersion = 1;

template <typename T>
void write_le(std::ostream& out, T v) {
  static_assert(std::is_integral_v<T>);
  unsigned char buf[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    buf[i] = static_cast<unsigned char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xFF);
  }
  out.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T read_le(std::istream& in) {
  unsigned char buf[sizeof(T)];
  in.read(reinterpret_cast<char*>(buf), sizeof(T));
  if (!in) {
    throw SchemaError("model file truncated");
  }
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  }
  return static_cast<T>(v);
}

nlohmann::json standardizer_json(const Standardizer& s) {
  return {{"mean", std::vector<double>(s.mean.data(), s.mean.data() + s.mean.size())},
          {"std", std::vector<double>(s.std.data(), s.std.data() + s.std.size())}};
}

Standardizer standardizer_from(const nlohmann::json& j) {
  const auto mean = j.at("mean").get<std::vector<double>>();
  const auto sd = j.at("std").get<std::vector<double>>();
  if (mean.size() != sd.size()) {
    throw SchemaError("model file: standardizer mean/std length mismatch");
  }
  return {Eigen::Map<const Vector>(mean.data(), static_cast<Eigen::Index>(mean.size())),
          Eigen::Map<const Vector>(sd.data(), static_cast<Eigen::Index>(sd.size()))};
}

}  // namespace

void save_model(const TrainedModel& trained, const std::filesystem::path& path) {
  TrainedModel& tm = const_cast<TrainedModel&>(trained);
  nlohmann::json header;
  header["spec"] = model_spec_to_json(tm.model.spec());
  header["features"] = standardizer_json(tm.features);
  if (tm.target) {
    header["target"] = standardizer_json(*tm.target);
  }
  if (tm.model.has_embedding()) {
    const auto& n = tm.model.embedding().normalizer();
    header["trend"] = {{"t_min", n.t_min}, {"t_max", n.t_max}};
  }
  nlohmann::json params = nlohmann::json::array();
  const auto named = tm.model.named_parameters();
  for (const auto& np : named) {
    params.push_back({{"name", np.name}, {"rows", np.param->value.rows()}, {"cols", np.param->value.cols()}});
  }
  header["parameters"] = params;
  const std::string text = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw IoError("cannot write " + path.string());
  }
  out.write(kMagic, sizeof kMagic);
  write_le<std::uint32_t>(out, kModelVersion);
  write_le<std::uint64_t>(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& np : named) {
    const Matrix& v = np.param->value;
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      write_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v.data()[i]));
    }
  }
  if (!out) {
    throw IoError("write failed for " + path.string());
  }
}

TrainedModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open " + path.string());
  }
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof magic) != 0) {
    throw SchemaError(path.string() + ": not a model file");
  }
  const auto version = read_le<std::uint32_t>(in);
  if (version != kModelVersion) {
    throw SchemaError(path.string() + ": unsupported model version " + std::to_string(version));
  }
  const auto len = read_le<std::uint64_t>(in);
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) {
    throw SchemaError(path.string() + ": truncated header");
  }
  const nlohmann::json header = nlohmann::json::parse(text);
  TrainedModel tm{Model(model_spec_from_json(header.at("spec")), 0), standardizer_from(header.at("features")),
                  std::nullopt};
  if (header.contains("target")) {
    tm.target = standardizer_from(header.at("target"));
  }
  if (header.contains("trend")) {
    tm.model.set_trend_normalizer({header["trend"].at("t_min").get<double>(), header["trend"].at("t_max").get<double>()});
  }
  const auto named = tm.model.named_parameters();
  const auto& listed = header.at("parameters");
  if (listed.size() != named.size()) {
    throw SchemaError(path.string() + ": parameter table does not match the model spec");
  }
  for (std::size_t k = 0; k < named.size(); ++k) {
    Matrix& v = named[k].param->value;
    if (listed[k].at("name").get<std::string>() != named[k].name ||
        listed[k].at("rows").get<Eigen::Index>() != v.rows() || listed[k].at("cols").get<Eigen::Index>() != v.cols()) {
      throw SchemaError(path.string() + ": parameter " + named[k].name + " has unexpected name or shape");
    }
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      v.data()[i] = std::bit_cast<double>(read_le<std::uint64_t>(in));
    }
  }
  return tm;
}

}  // namespace ttm

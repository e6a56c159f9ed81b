#pragma once

// Mini-batch AdamW training with validation-metric early stopping.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ttm/dataset.hpp"
#include "ttm/model.hpp"
#include "ttm/numeric.hpp"

namespace ttm {

struct TrainConfig {
  std::size_t batch_size = 1024;
  std::size_t max_epochs = 1000;
  std::size_t patience = 16;
  AdamWConfig adamw{};
  std::uint64_t seed = 0;
  bool shuffle = true;

  void validate() const;
};

/// AdamW over a fixed list of parameters.
class AdamW {
 public:
  AdamW(std::vector<Parameter<double>*> params, AdamWConfig config);
  void step();
  void zero_grad();
  const AdamWConfig& config() const { return config_; }

 private:
  std::vector<Parameter<double>*> params_;
  std::vector<AdamWState<double>> states_;
  AdamWConfig config_;
};

enum class MetricDirection { HigherIsBetter, LowerIsBetter };

/// Tracks the best validation metric. Epochs are numbered from 1. An epoch
/// improves only if it beats the best by more than `tolerance`.
class EarlyStopping {
 public:
  EarlyStopping(std::size_t patience, MetricDirection direction, double tolerance = 1e-12);

  /// Records the metric of the next epoch; returns true if it is the new best.
  bool update(double metric);
  bool should_stop() const { return since_best_ >= patience_; }

  std::size_t best_epoch() const { return best_epoch_; }
  double best_metric() const { return best_; }
  std::size_t epochs_seen() const { return epochs_; }

 private:
  std::size_t patience_;
  MetricDirection direction_;
  double tolerance_;
  double best_ = 0.0;
  std::size_t best_epoch_ = 0;
  std::size_t epochs_ = 0;
  std::size_t since_best_ = 0;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_metric = 0.0;
};

struct EvalMetrics {
  std::optional<double> auc;
  std::optional<double> accuracy;
  std::optional<double> log_loss;
  std::optional<double> rmse;
};

struct RunResult {
  std::size_t best_epoch = 0;
  std::string val_metric_name;
  double best_val_metric = 0.0;
  double initial_train_loss = 0.0;  // training-split loss before the first update
  std::vector<EpochRecord> history;
  EvalMetrics val;
  EvalMetrics test;
  std::uint64_t seed = 0;
  double wall_seconds = 0.0;
};

/// A model together with the preprocessing fitted on its training split.
struct TrainedModel {
  Model model;
  Standardizer features;
  std::optional<Standardizer> target;  // regression only

  /// Probabilities (classification) or de-standardized predictions (regression)
  /// for raw, unstandardized features.
  Vector predict(const Matrix& X, std::span<const double> t) const;
  Vector logits(const Matrix& X, std::span<const double> t) const;
};

struct TrainOutput {
  TrainedModel trained;
  RunResult result;
};

std::string primary_metric_name(Task task);
MetricDirection primary_metric_direction(Task task);

/// Model loss on a batch with gradients accumulated into the model parameters.
double loss_and_grad(Model& model, const Matrix& x, const Matrix& time_raw, const Vector& y);
/// Loss only.
double loss_value(const Model& model, const Matrix& x, const Matrix& time_raw, const Vector& y);

/// Trains `spec` (initialized from config.seed) on ds. Deterministic in
/// (spec, ds, splits, config).
TrainOutput train(const ModelSpec& spec, const Dataset& ds, const SplitAssignment& splits,
                  const TrainConfig& config);

/// Metrics of a trained model on the given rows of ds (raw features).
EvalMetrics evaluate(const TrainedModel& trained, const Dataset& ds, std::span<const std::size_t> rows);

/// Binary model file: see README for the layout.
void save_model(const TrainedModel& trained, const std::filesystem::path& path);
TrainedModel load_model(const std::filesystem::path& path);

}  // namespace ttm

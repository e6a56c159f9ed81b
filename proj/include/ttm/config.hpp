#pragma once

// JSON run configuration and JSON views of specs and results.
//
// {
//   "data":  {"path": "...", "label_col": "y", "time_col": "t", "categorical_cols": [],
//             "task": "classification",
//             "generator": {"kind": "concept-shift", "n": 10000, "seed": 0, "segments": 5,
//                           "radius": 2.0, "noise": 0.5},
//             "split": {"kind": "temporal", "ratios": [0.7, 0.15, 0.15], "seed": 0}},
//   "model": {"variant": "modulated", "hidden": [256, 256], "d_embedding": 128, "h_mod": 64,
//             "orders": {"year": 128, "month": 128, "day": 128, "hour": 128}, "trend": true,
//             "placements": {"input": true, "representation": false, "output": false,
//                            "representation_layers": [0]}},
//   "train": {"batch_size": 1024, "lr": 0.001, "weight_decay": 0.0, "max_epochs": 1000,
//             "patience": 16, "seed": 0, "shuffle": true}
// }
//
// Exactly one of data.path / data.generator. Every other key is optional and
// unknown keys are rejected.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ttm/dataset.hpp"
#include "ttm/model.hpp"
#include "ttm/train.hpp"

namespace ttm {

enum class SplitKind { Temporal, Random };

struct DataConfig {
  std::optional<std::filesystem::path> path;
  std::optional<ShiftGeneratorSpec> generator;
  CsvOptions csv;
  SplitKind split_kind = SplitKind::Temporal;
  SplitRatios ratios;
  std::uint64_t split_seed = 0;
};

struct RunConfig {
  DataConfig data;
  ModelSpec model;  // backbone.input_width is filled in from the data
  TrainConfig train;
};

/// `source` prefixes error messages (usually the config path). Relative data
/// paths are resolved against `base_dir`.
RunConfig parse_run_config(const nlohmann::json& doc, const std::string& source,
                           const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);
nlohmann::json run_config_to_json(const RunConfig& config);

struct PreparedData {
  Dataset dataset;
  SplitAssignment splits;
};

/// Loads or generates the data and computes the split. Categorical
/// vocabularies come from the training rows.
PreparedData prepare_data(const DataConfig& config);

nlohmann::json model_spec_to_json(const ModelSpec& spec);
ModelSpec model_spec_from_json(const nlohmann::json& j, const std::string& source = "model");

nlohmann::json eval_metrics_to_json(const EvalMetrics& m);
/// Keys: best_epoch, val_metric, best_val_metric, initial_train_loss, history,
/// val_metrics, test_metrics, seed. Wall-clock time is left out so reruns are
/// byte-identical.
nlohmann::json run_result_to_json(const RunResult& r);

std::string to_string(SplitKind k);

}  // namespace ttm

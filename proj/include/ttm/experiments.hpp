#pragma once

// Experiment harnesses: placement ablation, embedding-width sweep and the
// synthetic-shift pilot with decision-boundary grids.

#include <atomic>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "ttm/dataset.hpp"
#include "ttm/model.hpp"
#include "ttm/train.hpp"

namespace ttm {

/// Harness concurrency from TTM_THREADS (default 1, minimum 1).
std::size_t threads_from_env();

/// Runs f(0..count-1) on up to `threads` threads; results keep index order.
/// The first exception (by index) is rethrown.
template <typename F>
auto parallel_map(std::size_t count, std::size_t threads, F&& f) -> std::vector<decltype(f(std::size_t{0}))> {
  using R = decltype(f(std::size_t{0}));
  std::vector<std::optional<R>> slots(count);
  std::vector<std::exception_ptr> errors(count);
  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        slots[i].emplace(f(i));
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t n_threads = std::max<std::size_t>(1, std::min(threads, count));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t k = 0; k < n_threads; ++k) {
      pool.emplace_back(worker);
    }
  }
  std::vector<R> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    if (errors[i]) {
      std::rethrow_exception(errors[i]);
    }
    out.push_back(std::move(*slots[i]));
  }
  return out;
}

// ---- placement ablation ----

struct AblationRow {
  std::uint64_t seed = 0;
  bool input = false;
  bool representation = false;
  bool output = false;
  double metric = 0.0;
  double improvement_pct = 0.0;  // relative to the all-off row, positive = better
  std::size_t rank = 0;          // 1 = best among the 8 rows
  EvalMetrics test;
  std::size_t best_epoch = 0;
};

struct AblationResult {
  std::string metric_name;           // "accuracy" or "rmse"
  std::vector<AblationRow> rows;     // 8 per seed, seeds in the given order
  std::vector<AblationRow> aggregate;  // 8 rows, metrics averaged over seeds
};

/// Placement subsets in the order (in, rep, out) = 000, 001, 010, ..., 111.
std::vector<PlacementSet> placement_grid(const PlacementSet& base);

/// Trains the Modulated variant for all 8 placement subsets per seed. The
/// seed is the model/shuffle seed of every run in that block.
AblationResult ablate_placements(const Dataset& ds, const SplitAssignment& splits, const ModelSpec& base,
                                 const TrainConfig& config, std::span<const std::uint64_t> seeds,
                                 std::size_t threads = 1);

/// Header "in,rep,out,metric,improvement_pct"; one block of 8 rows per seed
/// followed by the 8 aggregate rows.
void write_ablation_csv(const AblationResult& result, const std::filesystem::path& path);
nlohmann::json ablation_to_json(const AblationResult& result);

// ---- embedding width sweep ----

struct SweepRow {
  Variant variant = Variant::Embedding;
  int d_embedding = 0;
  double metric = 0.0;
  EvalMetrics test;
};

/// Embedding and Modulated models for each width, Embedding rows first.
std::vector<SweepRow> sweep_embedding_dim(const Dataset& ds, const SplitAssignment& splits, const ModelSpec& base,
                                          const TrainConfig& config, std::span<const int> dims,
                                          std::size_t threads = 1);
void write_sweep_csv(const std::vector<SweepRow>& rows, const std::string& metric_name,
                     const std::filesystem::path& path);

// ---- pilot ----

struct PilotConfig {
  std::vector<ShiftKind> kinds{ShiftKind::Concept, ShiftKind::Covariate, ShiftKind::Label, ShiftKind::None};
  std::vector<std::uint64_t> seeds{0, 1, 2};
  std::size_t n = 10000;
  int segments = 5;
  double radius = 2.0;
  double noise = 0.5;
  SplitRatios ratios{};
  ModelSpec model{};  // variant and placements are set per run; input width 2
  TrainConfig train{};
  int grid_size = 201;
  double grid_extent = 4.0;
  int hist_bins = 40;
  bool svg = false;
  std::size_t threads = 1;
};

/// Directory name under the pilot output: concept, covariate, label, none.
std::string pilot_dir_name(ShiftKind kind);

struct PilotRun {
  ShiftKind kind = ShiftKind::Concept;
  std::uint64_t seed = 0;
  RunResult static_run;
  RunResult modulated_run;
};

/// Trains Static and input-modulated models per kind and seed and writes
///   out_dir/<kind>/grids/{static,modulated}_segment<k>.csv (+ .svg)
///   out_dir/<kind>/hist/segment<k>.csv
///   out_dir/<kind>/metrics/metrics.json
/// plus out_dir/metrics.json with every kind. Grids and histograms come from
/// the first seed.
std::vector<PilotRun> run_pilot(const PilotConfig& config, const std::filesystem::path& out_dir);

/// Predicted probability on a size x size lattice over [-extent, extent]^2 in
/// raw feature units, at timestamp t. Row-major with x1 as the slow axis.
Vector decision_grid(const TrainedModel& model, double t, int size, double extent);

void write_heatmap_svg(const Vector& grid, int size, double extent, const std::filesystem::path& path);

}  // namespace ttm

#include "ttm/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <numeric>

#include "ttm/config.hpp"

namespace ttm {

using nlohmann::json;

std::size_t threads_from_env() {
  const char* v = std::getenv("TTM_THREADS");
  if (v == nullptr) {
    return 1;
  }
  char* end = nullptr;
  const long n = std::strtol(v, &end, 10);
  return (end != v && n > 0) ? static_cast<std::size_t>(n) : 1;
}

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw IoError("cannot write " + path.string());
  }
  return out;
}

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double ablation_metric(Task task, const EvalMetrics& m) {
  return task == Task::BinaryClassification ? *m.accuracy : *m.rmse;
}

void assign_ranks(std::span<AblationRow> rows, bool higher_is_better) {
  for (auto& r : rows) {
    std::size_t better = 0;
    for (const auto& o : rows) {
      if (higher_is_better ? o.metric > r.metric : o.metric < r.metric) {
        ++better;
      }
    }
    r.rank = better + 1;
  }
}

void assign_improvement(std::span<AblationRow> rows, bool higher_is_better) {
  const double base = rows.front().metric;  // all-off row
  for (auto& r : rows) {
    const double delta = higher_is_better ? r.metric - base : base - r.metric;
    r.improvement_pct = base != 0.0 ? 100.0 * delta / std::abs(base) : 0.0;
  }
}

}  // namespace

std::vector<PlacementSet> placement_grid(const PlacementSet& base) {
  std::vector<PlacementSet> out;
  for (int mask = 0; mask < 8; ++mask) {
    PlacementSet p = base;
    p.input = (mask & 4) != 0;
    p.representation = (mask & 2) != 0;
    p.output = (mask & 1) != 0;
    out.push_back(p);
  }
  return out;
}

AblationResult ablate_placements(const Dataset& ds, const SplitAssignment& splits, const ModelSpec& base,
                                 const TrainConfig& config, std::span<const std::uint64_t> seeds,
                                 std::size_t threads) {
  if (seeds.empty()) {
    throw InputError("ablation: at least one seed required");
  }
  const auto grid = placement_grid(base.placements);
  const bool higher = base.task == Task::BinaryClassification;
  auto rows = parallel_map(seeds.size() * grid.size(), threads, [&](std::size_t k) {
    const std::uint64_t seed = seeds[k / grid.size()];
    ModelSpec spec = base;
    spec.variant = Variant::Modulated;
    spec.placements = grid[k % grid.size()];
    TrainConfig cfg = config;
    cfg.seed = seed;
    const TrainOutput out = train(spec, ds, splits, cfg);
    AblationRow row;
    row.seed = seed;
    row.input = spec.placements.input;
    row.representation = spec.placements.representation;
    row.output = spec.placements.output;
    row.test = out.result.test;
    row.metric = ablation_metric(spec.task, out.result.test);
    row.best_epoch = out.result.best_epoch;
    return row;
  });

  AblationResult result;
  result.metric_name = higher ? "accuracy" : "rmse";
  for (std::size_t s = 0; s < seeds.size(); ++s) {
    std::span<AblationRow> block(rows.data() + s * grid.size(), grid.size());
    assign_improvement(block, higher);
    assign_ranks(block, higher);
  }
  for (std::size_t g = 0; g < grid.size(); ++g) {
    AblationRow agg = rows[g];
    agg.seed = 0;
    double sum = 0.0;
    for (std::size_t s = 0; s < seeds.size(); ++s) {
      sum += rows[s * grid.size() + g].metric;
    }
    agg.metric = sum / static_cast<double>(seeds.size());
    agg.test = {};
    agg.best_epoch = 0;
    result.aggregate.push_back(agg);
  }
  assign_improvement(result.aggregate, higher);
  assign_ranks(result.aggregate, higher);
  result.rows = std::move(rows);
  return result;
}

void write_ablation_csv(const AblationResult& result, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "in,rep,out,metric,improvement_pct\n";
  const auto emit = [&](const AblationRow& r) {
    out << int(r.input) << ',' << int(r.representation) << ',' << int(r.output) << ',' << num(r.metric) << ','
        << num(r.improvement_pct) << '\n';
  };
  for (const auto& r : result.rows) emit(r);
  for (const auto& r : result.aggregate) emit(r);
  if (!out) {
    throw IoError("write failed for " + path.string());
  }
}

json ablation_to_json(const AblationResult& result) {
  const auto row_json = [](const AblationRow& r, bool with_seed) {
    json j = {{"in", r.input},         {"rep", r.representation}, {"out", r.output},
              {"metric", r.metric},    {"improvement_pct", r.improvement_pct}, {"rank", r.rank}};
    if (with_seed) {
      j["seed"] = r.seed;
      j["best_epoch"] = r.best_epoch;
      j["test_metrics"] = eval_metrics_to_json(r.test);
    }
    return j;
  };
  json rows = json::array();
  for (const auto& r : result.rows) rows.push_back(row_json(r, true));
  json agg = json::array();
  for (const auto& r : result.aggregate) agg.push_back(row_json(r, false));
  return {{"metric", result.metric_name}, {"rows", rows}, {"aggregate", agg}};
}

std::vector<SweepRow> sweep_embedding_dim(const Dataset& ds, const SplitAssignment& splits, const ModelSpec& base,
                                          const TrainConfig& config, std::span<const int> dims,
                                          std::size_t threads) {
  if (dims.empty()) {
    throw InputError("sweep: at least one embedding width required");
  }
  const Variant variants[] = {Variant::Embedding, Variant::Modulated};
  return parallel_map(2 * dims.size(), threads, [&](std::size_t k) {
    ModelSpec spec = base;
    spec.variant = variants[k / dims.size()];
    spec.embedding.d_embedding = dims[k % dims.size()];
    if (spec.variant == Variant::Modulated && spec.placements.active().empty()) {
      spec.placements = PlacementSet::input_only();
    }
    const TrainOutput out = train(spec, ds, splits, config);
    SweepRow row;
    row.variant = spec.variant;
    row.d_embedding = spec.embedding.d_embedding;
    row.test = out.result.test;
    row.metric = spec.task == Task::BinaryClassification ? *out.result.test.auc : *out.result.test.rmse;
    return row;
  });
}

void write_sweep_csv(const std::vector<SweepRow>& rows, const std::string& metric_name,
                     const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "variant,d_embedding," << metric_name << '\n';
  for (const auto& r : rows) {
    out << to_string(r.variant) << ',' << r.d_embedding << ',' << num(r.metric) << '\n';
  }
}

// ---- pilot ----

std::string pilot_dir_name(ShiftKind kind) {
  switch (kind) {
    case ShiftKind::Concept: return "concept";
    case ShiftKind::Covariate: return "covariate";
    case ShiftKind::Label: return "label";
    case ShiftKind::None: return "none";
  }
  return "unknown";
}

Vector decision_grid(const TrainedModel& model, double t, int size, double extent) {
  const Eigen::Index n = static_cast<Eigen::Index>(size) * size;
  Matrix X(n, 2);
  const double step = size > 1 ? 2.0 * extent / (size - 1) : 0.0;
  for (int r = 0; r < size; ++r) {
    for (int c = 0; c < size; ++c) {
      X(static_cast<Eigen::Index>(r) * size + c, 0) = -extent + step * c;
      X(static_cast<Eigen::Index>(r) * size + c, 1) = -extent + step * r;
    }
  }
  const std::vector<double> ts(static_cast<std::size_t>(n), t);
  return model.predict(X, ts);
}

void write_heatmap_svg(const Vector& grid, int size, double extent, const std::filesystem::path& path) {
  auto out = open_out(path);
  const int cell = 2;
  const int px = size * cell;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << px << "\" height=\"" << px
      << "\" viewBox=\"0 0 " << px << ' ' << px << "\" shape-rendering=\"crispEdges\">\n";
  out << "<desc>P(y=1) over [-" << extent << ", " << extent << "]^2</desc>\n";
  char buf[96];
  for (int r = 0; r < size; ++r) {
    for (int c = 0; c < size; ++c) {
      const double p = std::clamp(grid(static_cast<Eigen::Index>(r) * size + c), 0.0, 1.0);
      // Blue (p=0) to white to red (p=1).
      const int red = p >= 0.5 ? 255 : static_cast<int>(std::lround(510.0 * p));
      const int blue = p <= 0.5 ? 255 : static_cast<int>(std::lround(510.0 * (1.0 - p)));
      const int green = std::min(red, blue);
      std::snprintf(buf, sizeof buf, "<rect x=\"%d\" y=\"%d\" width=\"%d\" height=\"%d\" fill=\"#%02x%02x%02x\"/>\n",
                    c * cell, (size - 1 - r) * cell, cell, cell, red, green, blue);
      out << buf;
    }
  }
  out << "</svg>\n";
}

namespace {

void write_grid_csv(const Vector& grid, int size, double extent, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "x0,x1,p\n";
  const double step = size > 1 ? 2.0 * extent / (size - 1) : 0.0;
  for (int r = 0; r < size; ++r) {
    for (int c = 0; c < size; ++c) {
      out << num(-extent + step * c) << ',' << num(-extent + step * r) << ','
          << num(grid(static_cast<Eigen::Index>(r) * size + c)) << '\n';
    }
  }
}

/// Standardized inputs and input-modulated features for every row.
std::pair<Matrix, Matrix> modulated_features(const TrainedModel& tm, const Dataset& ds) {
  const Matrix pre = tm.features.apply(ds.X);
  const Model& model = tm.model;
  const Matrix psi = model.psi(ds.t);
  const ModulationParams params = model.modulator(Placement::input()).params(psi);
  return {pre, modulate(pre, params)};
}

void write_histograms(const TrainedModel& tm, const Dataset& ds, int segments, int bins,
                      const std::filesystem::path& dir) {
  const auto [pre, post] = modulated_features(tm, ds);
  for (int s = 0; s < segments; ++s) {
    auto out = open_out(dir / ("segment" + std::to_string(s) + ".csv"));
    out << "feature,stage,bin_lo,bin_hi,count\n";
    for (Eigen::Index j = 0; j < pre.cols(); ++j) {
      const double lo = std::min(pre.col(j).minCoeff(), post.col(j).minCoeff());
      const double hi = std::max(pre.col(j).maxCoeff(), post.col(j).maxCoeff());
      const double width = hi > lo ? (hi - lo) / bins : 1.0;
      for (const auto& [stage, m] : {std::pair<const char*, const Matrix*>{"pre", &pre}, {"post", &post}}) {
        std::vector<std::size_t> counts(static_cast<std::size_t>(bins), 0);
        for (Eigen::Index i = 0; i < m->rows(); ++i) {
          if (segment_of(ds.t[static_cast<std::size_t>(i)], segments) != s) continue;
          const int b = std::clamp(static_cast<int>((( *m)(i, j) - lo) / width), 0, bins - 1);
          ++counts[static_cast<std::size_t>(b)];
        }
        for (int b = 0; b < bins; ++b) {
          out << ds.feature_names[static_cast<std::size_t>(j)] << ',' << stage << ',' << num(lo + b * width) << ','
              << num(lo + (b + 1) * width) << ',' << counts[static_cast<std::size_t>(b)] << '\n';
        }
      }
    }
  }
}

json run_json(const RunResult& r) {
  return {{"best_epoch", r.best_epoch}, {"epochs", r.history.size()}, {"test_metrics", eval_metrics_to_json(r.test)}};
}

}  // namespace

std::vector<PilotRun> run_pilot(const PilotConfig& config, const std::filesystem::path& out_dir) {
  if (config.seeds.empty() || config.kinds.empty()) {
    throw InputError("pilot: need at least one seed and one shift kind");
  }
  std::filesystem::create_directories(out_dir);
  const std::size_t per_kind = config.seeds.size();

  struct Job {
    PilotRun run;
    std::optional<TrainedModel> static_model;
    std::optional<TrainedModel> modulated_model;
    Dataset ds;
  };
  auto jobs = parallel_map(config.kinds.size() * per_kind, config.threads, [&](std::size_t k) {
    Job job;
    job.run.kind = config.kinds[k / per_kind];
    job.run.seed = config.seeds[k % per_kind];
    ShiftGeneratorSpec gen{job.run.kind, config.n, job.run.seed, config.segments, config.radius, config.noise};
    job.ds = generate(gen);
    const SplitAssignment splits = temporal_split(job.ds, config.ratios);
    TrainConfig tc = config.train;
    tc.seed = job.run.seed;
    ModelSpec spec = config.model;
    spec.backbone.input_width = 2;
    spec.task = Task::BinaryClassification;
    spec.variant = Variant::Static;
    auto st = train(spec, job.ds, splits, tc);
    spec.variant = Variant::Modulated;
    spec.placements = PlacementSet::input_only();
    auto mo = train(spec, job.ds, splits, tc);
    job.run.static_run = st.result;
    job.run.modulated_run = mo.result;
    if (k % per_kind == 0) {
      job.static_model = std::move(st.trained);
      job.modulated_model = std::move(mo.trained);
    }
    return job;
  });

  json all = json::object();
  std::vector<PilotRun> runs;
  for (std::size_t ki = 0; ki < config.kinds.size(); ++ki) {
    const ShiftKind kind = config.kinds[ki];
    const auto dir = out_dir / pilot_dir_name(kind);
    const Job& first = jobs[ki * per_kind];
    for (int s = 0; s < config.segments; ++s) {
      const double t = segment_center(s, config.segments);
      for (const auto& [name, tm] : {std::pair<const char*, const TrainedModel*>{"static", &*first.static_model},
                                     {"modulated", &*first.modulated_model}}) {
        const Vector grid = decision_grid(*tm, t, config.grid_size, config.grid_extent);
        const std::string stem = std::string(name) + "_segment" + std::to_string(s);
        write_grid_csv(grid, config.grid_size, config.grid_extent, dir / "grids" / (stem + ".csv"));
        if (config.svg) {
          write_heatmap_svg(grid, config.grid_size, config.grid_extent, dir / "grids" / (stem + ".svg"));
        }
      }
    }
    write_histograms(*first.modulated_model, first.ds, config.segments, config.hist_bins, dir / "hist");

    json seeds = json::array();
    double static_acc = 0.0;
    double mod_acc = 0.0;
    for (std::size_t si = 0; si < per_kind; ++si) {
      const PilotRun& r = jobs[ki * per_kind + si].run;
      seeds.push_back({{"seed", r.seed}, {"static", run_json(r.static_run)}, {"modulated", run_json(r.modulated_run)}});
      static_acc += *r.static_run.test.accuracy;
      mod_acc += *r.modulated_run.test.accuracy;
      runs.push_back(r);
    }
    json kind_json = {{"kind", to_string(kind)},
                      {"segment_timestamps", json::array()},
                      {"runs", seeds},
                      {"mean_test_accuracy",
                       {{"static", static_acc / static_cast<double>(per_kind)},
                        {"modulated", mod_acc / static_cast<double>(per_kind)}}}};
    for (int s = 0; s < config.segments; ++s) {
      kind_json["segment_timestamps"].push_back(segment_center(s, config.segments));
    }
    auto out = open_out(dir / "metrics" / "metrics.json");
    out << kind_json.dump(2) << '\n';
    all[pilot_dir_name(kind)] = kind_json;
  }
  auto out = open_out(out_dir / "metrics.json");
  out << all.dump(2) << '\n';
  return runs;
}

}  // namespace ttm

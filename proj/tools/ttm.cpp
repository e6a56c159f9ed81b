// ttm: generate, train, ablate, sweep, pilot and stats from the command line.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <limits>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "ttm/config.hpp"
#include "ttm/dataset.hpp"
#include "ttm/errors.hpp"
#include "ttm/experiments.hpp"
#include "ttm/train.hpp"

namespace {

using nlohmann::json;
using namespace ttm;

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

void write_json(const json& j, const std::filesystem::path& path) {
  if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw IoError("cannot write " + path.string());
  }
  out << j.dump(2) << '\n';
}

const std::vector<std::string> kKindNames{"concept-shift", "covariate-shift", "label-shift", "no-shift",
                                          "concept",       "covariate",       "label",       "none"};

struct GenerateArgs {
  std::string kind;
  std::size_t n = 10000;
  std::uint64_t seed = 0;
  int segments = 5;
  double radius = 2.0;
  double noise = 0.5;
  std::string out;
};

int cmd_generate(const GenerateArgs& a) {
  ShiftGeneratorSpec spec;
  spec.kind = shift_kind_from_string(a.kind);
  spec.n = a.n;
  spec.seed = a.seed;
  spec.segments = a.segments;
  spec.radius = a.radius;
  spec.noise = a.noise;
  write_csv(generate(spec), a.out);
  return 0;
}

struct TrainArgs {
  std::string config;
  std::string out_dir;
  std::vector<double> lr_grid;
};

bool better(Task task, double a, double b) {
  return primary_metric_direction(task) == MetricDirection::HigherIsBetter ? a > b : a < b;
}

int cmd_train(const TrainArgs& a) {
  RunConfig cfg = load_run_config(a.config);
  const PreparedData data = prepare_data(cfg.data);
  cfg.model.backbone.input_width = data.dataset.cols();
  cfg.model.task = data.dataset.task;

  std::vector<double> lrs = a.lr_grid;
  if (lrs.empty()) {
    lrs.push_back(cfg.train.adamw.lr);
  }
  std::optional<TrainOutput> best;
  double best_lr = lrs.front();
  json grid = json::array();
  for (const double lr : lrs) {
    TrainConfig tc = cfg.train;
    tc.adamw.lr = lr;
    TrainOutput out = train(cfg.model, data.dataset, data.splits, tc);
    grid.push_back({{"lr", lr}, {"best_val_metric", out.result.best_val_metric}});
    if (!best || better(cfg.model.task, out.result.best_val_metric, best->result.best_val_metric)) {
      best_lr = lr;
      best = std::move(out);
    }
  }
  cfg.train.adamw.lr = best_lr;

  const std::filesystem::path dir(a.out_dir);
  std::filesystem::create_directories(dir);
  save_model(best->trained, dir / "model.bin");
  json result = run_result_to_json(best->result);
  result["config"] = run_config_to_json(cfg);
  if (lrs.size() > 1) {
    result["lr_grid"] = grid;
  }
  write_json(result, dir / "result.json");

  const auto& test = best->result.test;
  const std::string name = primary_metric_name(cfg.model.task);
  const double value = cfg.model.task == Task::BinaryClassification ? *test.auc : *test.rmse;
  std::printf("variant=%s metric=%s:%.6f best_epoch=%zu\n", to_string(cfg.model.variant).c_str(), name.c_str(),
              value, best->result.best_epoch);
  return 0;
}

struct AblateArgs {
  std::string config;
  std::vector<std::uint64_t> seeds{0, 1, 2};
  std::string out;
};

ModelSpec spec_for_data(RunConfig& cfg, const PreparedData& data) {
  cfg.model.backbone.input_width = data.dataset.cols();
  cfg.model.task = data.dataset.task;
  return cfg.model;
}

int cmd_ablate(const AblateArgs& a) {
  RunConfig cfg = load_run_config(a.config);
  const PreparedData data = prepare_data(cfg.data);
  const ModelSpec spec = spec_for_data(cfg, data);
  const auto result = ablate_placements(data.dataset, data.splits, spec, cfg.train, a.seeds, threads_from_env());
  const std::filesystem::path out(a.out);
  write_ablation_csv(result, out);
  std::filesystem::path json_path = out;
  json_path.replace_extension(".json");
  write_json(ablation_to_json(result), json_path);
  return 0;
}

struct SweepArgs {
  std::string config;
  std::vector<int> dims{8, 32, 128};
  std::string out;
};

int cmd_sweep(const SweepArgs& a) {
  RunConfig cfg = load_run_config(a.config);
  const PreparedData data = prepare_data(cfg.data);
  const ModelSpec spec = spec_for_data(cfg, data);
  const auto rows = sweep_embedding_dim(data.dataset, data.splits, spec, cfg.train, a.dims, threads_from_env());
  write_sweep_csv(rows, spec.task == Task::BinaryClassification ? "auc" : "rmse", a.out);
  return 0;
}

struct PilotArgs {
  std::string out_dir;
  bool svg = false;
  std::size_t n = 10000;
  std::vector<std::uint64_t> seeds{0, 1, 2};
  std::size_t max_epochs = 0;
};

int cmd_pilot(const PilotArgs& a) {
  PilotConfig cfg;
  cfg.svg = a.svg;
  cfg.n = a.n;
  cfg.seeds = a.seeds;
  if (a.max_epochs > 0) {
    cfg.train.max_epochs = a.max_epochs;
  }
  cfg.threads = threads_from_env();
  const auto runs = run_pilot(cfg, a.out_dir);
  for (const auto& r : runs) {
    std::printf("kind=%s seed=%llu static_acc=%.4f modulated_acc=%.4f\n", to_string(r.kind).c_str(),
                static_cast<unsigned long long>(r.seed), *r.static_run.test.accuracy,
                *r.modulated_run.test.accuracy);
  }
  return 0;
}

struct StatsArgs {
  std::string data;
  std::size_t windows = 12;
  std::string out;
  std::string label_col = "y";
  std::string time_col = "t";
  std::vector<std::string> categorical;
  bool regression = false;
};

int cmd_stats(const StatsArgs& a) {
  CsvOptions opt;
  opt.label_col = a.label_col;
  opt.time_col = a.time_col;
  opt.categorical_cols = a.categorical;
  opt.task = a.regression ? Task::Regression : Task::BinaryClassification;
  const Dataset ds = load_csv(a.data, opt);
  write_stats_csv(temporal_stats(ds, a.windows), a.out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Temporal feature modulation for tabular models"};
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate", "Write a synthetic shift dataset as CSV");
  g->add_option("--kind", gen.kind, "Shift kind")->required()->check(CLI::IsMember(kKindNames));
  g->add_option("--n", gen.n, "Rows")->check(CLI::PositiveNumber);
  g->add_option("--seed", gen.seed, "Seed");
  g->add_option("--segments", gen.segments, "Segments")->check(CLI::PositiveNumber);
  g->add_option("--radius", gen.radius, "Class-mean radius");
  g->add_option("--noise", gen.noise, "Noise std")->check(CLI::PositiveNumber);
  g->add_option("--out", gen.out, "Output CSV")->required();

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train one model from a JSON config");
  t->add_option("--config", tr.config, "Run config")->required();
  t->add_option("--out-dir", tr.out_dir, "Output directory")->required();
  t->add_option("--lr-grid", tr.lr_grid, "Learning rates; the best validation metric wins")
      ->delimiter(',')
      ->check(CLI::PositiveNumber);

  AblateArgs ab;
  auto* a = app.add_subcommand("ablate", "Train all 8 placement subsets");
  a->add_option("--config", ab.config, "Run config")->required();
  a->add_option("--seeds", ab.seeds, "Seeds")->delimiter(',');
  a->add_option("--out", ab.out, "Output CSV (a .json with details is written next to it)")->required();

  SweepArgs sw;
  auto* s = app.add_subcommand("sweep", "Embedding and Modulated models across embedding widths");
  s->add_option("--config", sw.config, "Run config")->required();
  s->add_option("--dims", sw.dims, "Embedding widths")->delimiter(',');
  s->add_option("--out", sw.out, "Output CSV")->required();

  PilotArgs pi;
  auto* p = app.add_subcommand("pilot", "Synthetic shift pilot over all four kinds");
  p->add_option("--out-dir", pi.out_dir, "Output directory")->required();
  p->add_flag("--svg", pi.svg, "Also render grids as SVG");
  p->add_option("--n", pi.n, "Rows per dataset")->check(CLI::PositiveNumber);
  p->add_option("--seeds", pi.seeds, "Seeds")->delimiter(',');
  p->add_option("--max-epochs", pi.max_epochs, "Epoch cap")->check(CLI::PositiveNumber);

  StatsArgs st;
  auto* d = app.add_subcommand("stats", "Per-window feature moments");
  d->add_option("--data", st.data, "Input CSV")->required();
  d->add_option("--windows", st.windows, "Number of windows")->check(CLI::PositiveNumber);
  d->add_option("--out", st.out, "Output CSV")->required();
  d->add_option("--label-col", st.label_col, "Label column");
  d->add_option("--time-col", st.time_col, "Timestamp column");
  d->add_option("--categorical", st.categorical, "Categorical columns")->delimiter(',');
  d->add_flag("--regression", st.regression, "Real-valued target");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n";
    const CLI::App* sub = nullptr;
    for (const auto* s : app.get_subcommands()) sub = s;
    std::cerr << (sub != nullptr ? sub->help() : app.help());
    return kExitUsage;
  }

  try {
    if (*g) return cmd_generate(gen);
    if (*t) return cmd_train(tr);
    if (*a) return cmd_ablate(ab);
    if (*s) return cmd_sweep(sw);
    if (*p) return cmd_pilot(pi);
    if (*d) return cmd_stats(st);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}

#include "ttm/config.hpp"

#include <fstream>
#include <numeric>
#include <set>

namespace ttm {

using nlohmann::json;

std::string to_string(SplitKind k) {
  return k == SplitKind::Temporal ? "temporal" : "random";
}

namespace {

class Reader {
 public:
  Reader(const json& obj, std::string path, std::string source)
      : obj_(obj), path_(std::move(path)), source_(std::move(source)) {
    if (!obj_.is_object()) {
      fail("", "expected an object");
    }
  }

  [[noreturn]] void fail(const std::string& key, const std::string& what) const {
    std::string where = path_;
    if (!key.empty()) {
      where += (where.empty() ? "" : ".") + key;
    }
    throw SchemaError(source_ + ": " + (where.empty() ? "<root>" : where) + ": " + what);
  }

  void allow(std::initializer_list<const char*> keys) const {
    std::set<std::string> ok(keys.begin(), keys.end());
    for (const auto& [k, _] : obj_.items()) {
      if (!ok.count(k)) {
        fail(k, "unknown key");
      }
    }
  }

  bool has(const std::string& key) const { return obj_.contains(key); }

  template <typename T>
  T get(const std::string& key, T fallback) const {
    if (!obj_.contains(key)) {
      return fallback;
    }
    try {
      return obj_.at(key).get<T>();
    } catch (const json::exception& e) {
      fail(key, std::string("wrong type (") + e.what() + ")");
    }
  }

  Reader child(const std::string& key) const {
    const auto& v = obj_.at(key);
    if (!v.is_object()) {
      fail(key, "expected an object");
    }
    return Reader(v, path_.empty() ? key : path_ + "." + key, source_);
  }

  const json& raw(const std::string& key) const { return obj_.at(key); }
  const std::string& source() const { return source_; }

 private:
  const json& obj_;
  std::string path_;
  std::string source_;
};

ShiftGeneratorSpec parse_generator(const Reader& r) {
  r.allow({"kind", "n", "seed", "segments", "radius", "noise"});
  ShiftGeneratorSpec g;
  try {
    g.kind = shift_kind_from_string(r.get<std::string>("kind", to_string(g.kind)));
  } catch (const InputError& e) {
    r.fail("kind", e.what());
  }
  g.n = r.get<std::size_t>("n", g.n);
  g.seed = r.get<std::uint64_t>("seed", g.seed);
  g.segments = r.get<int>("segments", g.segments);
  g.radius = r.get<double>("radius", g.radius);
  g.noise = r.get<double>("noise", g.noise);
  try {
    g.validate();
  } catch (const InputError& e) {
    r.fail("", e.what());
  }
  return g;
}

DataConfig parse_data(const Reader& r, const std::filesystem::path& base_dir) {
  r.allow({"path", "generator", "label_col", "time_col", "categorical_cols", "task", "split"});
  DataConfig d;
  if (r.has("path") == r.has("generator")) {
    r.fail("", "exactly one of 'path' or 'generator' is required");
  }
  if (r.has("path")) {
    std::filesystem::path p = r.get<std::string>("path", "");
    d.path = p.is_relative() && !base_dir.empty() ? base_dir / p : p;
  } else {
    d.generator = parse_generator(r.child("generator"));
  }
  d.csv.label_col = r.get<std::string>("label_col", d.csv.label_col);
  d.csv.time_col = r.get<std::string>("time_col", d.csv.time_col);
  d.csv.categorical_cols = r.get<std::vector<std::string>>("categorical_cols", {});
  try {
    d.csv.task = task_from_string(r.get<std::string>("task", "classification"));
  } catch (const InputError& e) {
    r.fail("task", e.what());
  }
  if (d.generator && d.csv.task != Task::BinaryClassification) {
    r.fail("task", "generated data is binary classification");
  }
  if (r.has("split")) {
    const Reader s = r.child("split");
    s.allow({"kind", "ratios", "seed"});
    const auto kind = s.get<std::string>("kind", "temporal");
    if (kind == "temporal") {
      d.split_kind = SplitKind::Temporal;
    } else if (kind == "random") {
      d.split_kind = SplitKind::Random;
    } else {
      s.fail("kind", "expected 'temporal' or 'random'");
    }
    if (s.has("ratios")) {
      const auto ratios = s.get<std::vector<double>>("ratios", {});
      if (ratios.size() != 3) {
        s.fail("ratios", "expected three values [train, val, test]");
      }
      d.ratios = {ratios[0], ratios[1], ratios[2]};
    }
    try {
      d.ratios.validate();
    } catch (const InputError& e) {
      s.fail("ratios", e.what());
    }
    d.split_seed = s.get<std::uint64_t>("seed", 0);
  }
  return d;
}

ModelSpec parse_model(const Reader& r) {
  r.allow({"variant", "hidden", "d_embedding", "h_mod", "orders", "trend", "placements", "task", "input_width"});
  ModelSpec m;
  try {
    m.variant = variant_from_string(r.get<std::string>("variant", "modulated"));
  } catch (const InputError& e) {
    r.fail("variant", e.what());
  }
  if (r.has("task")) {
    try {
      m.task = task_from_string(r.get<std::string>("task", "classification"));
    } catch (const InputError& e) {
      r.fail("task", e.what());
    }
  }
  m.backbone.input_width = r.get<Eigen::Index>("input_width", 0);
  m.backbone.hidden = r.get<std::vector<Eigen::Index>>("hidden", m.backbone.hidden);
  m.embedding.d_embedding = r.get<int>("d_embedding", m.embedding.d_embedding);
  m.embedding.trend = r.get<bool>("trend", m.embedding.trend);
  m.h_mod = r.get<Eigen::Index>("h_mod", m.h_mod);
  if (r.has("orders")) {
    const Reader o = r.child("orders");
    o.allow({"year", "month", "day", "hour"});
    m.embedding.periods.clear();
    for (const char* name : {"year", "month", "day", "hour"}) {
      const int order = o.get<int>(name, kDefaultOrder);
      m.embedding.periods.push_back(PeriodSpec::make(period_name_from_string(name), order));
    }
  }
  if (r.has("placements")) {
    const Reader p = r.child("placements");
    p.allow({"input", "representation", "output", "representation_layers"});
    m.placements.input = p.get<bool>("input", false);
    m.placements.representation = p.get<bool>("representation", false);
    m.placements.output = p.get<bool>("output", false);
    m.placements.representation_layers =
        p.get<std::vector<std::size_t>>("representation_layers", m.placements.representation_layers);
  } else if (m.variant == Variant::Modulated) {
    m.placements = PlacementSet::input_only();
  }
  try {
    if (m.variant != Variant::Static) {
      m.embedding.validate();
    }
  } catch (const InputError& e) {
    r.fail("", e.what());
  }
  return m;
}

TrainConfig parse_train(const Reader& r) {
  r.allow({"batch_size", "lr", "weight_decay", "max_epochs", "patience", "seed", "shuffle"});
  TrainConfig t;
  t.batch_size = r.get<std::size_t>("batch_size", t.batch_size);
  t.adamw.lr = r.get<double>("lr", t.adamw.lr);
  t.adamw.weight_decay = r.get<double>("weight_decay", t.adamw.weight_decay);
  t.max_epochs = r.get<std::size_t>("max_epochs", t.max_epochs);
  t.patience = r.get<std::size_t>("patience", t.patience);
  t.seed = r.get<std::uint64_t>("seed", t.seed);
  t.shuffle = r.get<bool>("shuffle", t.shuffle);
  try {
    t.validate();
  } catch (const InputError& e) {
    r.fail("", e.what());
  }
  return t;
}

}  // namespace

RunConfig parse_run_config(const json& doc, const std::string& source, const std::filesystem::path& base_dir) {
  const Reader root(doc, "", source);
  root.allow({"data", "model", "train"});
  if (!root.has("data")) {
    root.fail("data", "missing required section");
  }
  RunConfig c;
  c.data = parse_data(root.child("data"), base_dir);
  c.model = root.has("model") ? parse_model(root.child("model")) : parse_model(Reader(json::object(), "model", source));
  c.model.task = c.data.csv.task;
  if (root.has("train")) {
    c.train = parse_train(root.child("train"));
  }
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot open config " + path.string());
  }
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw SchemaError(path.string() + ": invalid JSON (" + e.what() + ")");
  }
  return parse_run_config(doc, path.string(), path.parent_path());
}

json model_spec_to_json(const ModelSpec& spec) {
  json orders = json::object();
  for (const auto& p : spec.embedding.periods) {
    orders[to_string(p.name)] = p.order;
  }
  return {{"variant", to_string(spec.variant)},
          {"task", to_string(spec.task)},
          {"input_width", spec.backbone.input_width},
          {"hidden", spec.backbone.hidden},
          {"d_embedding", spec.embedding.d_embedding},
          {"trend", spec.embedding.trend},
          {"orders", orders},
          {"h_mod", spec.h_mod},
          {"placements",
           {{"input", spec.placements.input},
            {"representation", spec.placements.representation},
            {"output", spec.placements.output},
            {"representation_layers", spec.placements.representation_layers}}}};
}

ModelSpec model_spec_from_json(const json& j, const std::string& source) {
  ModelSpec m = parse_model(Reader(j, "model", source));
  m.placements.input = j.at("placements").value("input", false);
  m.placements.representation = j.at("placements").value("representation", false);
  m.placements.output = j.at("placements").value("output", false);
  return m;
}

json run_config_to_json(const RunConfig& c) {
  json data;
  if (c.data.path) {
    data["path"] = c.data.path->generic_string();
  }
  if (c.data.generator) {
    const auto& g = *c.data.generator;
    data["generator"] = {{"kind", to_string(g.kind)}, {"n", g.n},           {"seed", g.seed},
                         {"segments", g.segments},    {"radius", g.radius}, {"noise", g.noise}};
  }
  data["label_col"] = c.data.csv.label_col;
  data["time_col"] = c.data.csv.time_col;
  data["categorical_cols"] = c.data.csv.categorical_cols;
  data["task"] = to_string(c.data.csv.task);
  data["split"] = {{"kind", to_string(c.data.split_kind)},
                   {"ratios", {c.data.ratios.train, c.data.ratios.val, c.data.ratios.test}},
                   {"seed", c.data.split_seed}};
  json model = model_spec_to_json(c.model);
  json train = {{"batch_size", c.train.batch_size}, {"lr", c.train.adamw.lr},
                {"weight_decay", c.train.adamw.weight_decay}, {"max_epochs", c.train.max_epochs},
                {"patience", c.train.patience}, {"seed", c.train.seed}, {"shuffle", c.train.shuffle}};
  return {{"data", data}, {"model", model}, {"train", train}};
}

PreparedData prepare_data(const DataConfig& config) {
  PreparedData out;
  if (config.generator) {
    out.dataset = generate(*config.generator);
  } else {
    const CsvTable table = read_csv_table(*config.path, config.csv);
    std::vector<std::size_t> all(table.rows());
    std::iota(all.begin(), all.end(), std::size_t{0});
    out.dataset = encode(table, all);
    out.splits = config.split_kind == SplitKind::Temporal ? temporal_split(out.dataset, config.ratios)
                                                          : random_split(out.dataset, config.ratios, config.split_seed);
    if (!table.categorical.empty()) {
      std::vector<std::size_t> vocab = out.splits.train;
      std::sort(vocab.begin(), vocab.end());
      out.dataset = encode(table, vocab);
    }
    return out;
  }
  out.splits = config.split_kind == SplitKind::Temporal ? temporal_split(out.dataset, config.ratios)
                                                        : random_split(out.dataset, config.ratios, config.split_seed);
  return out;
}

json eval_metrics_to_json(const EvalMetrics& m) {
  json j = json::object();
  if (m.auc) j["auc"] = *m.auc;
  if (m.accuracy) j["accuracy"] = *m.accuracy;
  if (m.log_loss) j["log_loss"] = *m.log_loss;
  if (m.rmse) j["rmse"] = *m.rmse;
  return j;
}

json run_result_to_json(const RunResult& r) {
  json history = json::array();
  for (const auto& e : r.history) {
    history.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_metric", e.val_metric}});
  }
  return {{"best_epoch", r.best_epoch},
          {"val_metric", r.val_metric_name},
          {"best_val_metric", r.best_val_metric},
          {"initial_train_loss", r.initial_train_loss},
          {"history", history},
          {"val_metrics", eval_metrics_to_json(r.val)},
          {"test_metrics", eval_metrics_to_json(r.test)},
          {"seed", r.seed}};
}

}  // namespace ttm

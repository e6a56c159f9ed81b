#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "ttm/config.hpp"
#include "ttm/dataset.hpp"
#include "ttm/errors.hpp"
#include "ttm/train.hpp"

namespace ttm {
namespace {

namespace fs = std::filesystem;

ModelSpec tiny_spec(Variant v, Task task = Task::BinaryClassification) {
  ModelSpec s;
  s.backbone.input_width = 2;
  s.backbone.hidden = {16};
  s.variant = v;
  s.embedding.periods = EmbeddingConfig::default_periods(2);
  s.embedding.d_embedding = 8;
  s.placements = v == Variant::Modulated ? PlacementSet::all() : PlacementSet::none();
  s.h_mod = 8;
  s.task = task;
  return s;
}

TrainConfig quick(std::size_t epochs = 5) {
  TrainConfig c;
  c.batch_size = 64;
  c.max_epochs = epochs;
  c.patience = 3;
  c.adamw.lr = 3e-3;
  return c;
}

Dataset shifted(ShiftKind kind, std::size_t n = 600) {
  ShiftGeneratorSpec g;
  g.kind = kind;
  g.n = n;
  return generate(g);
}

Dataset regression_data(std::size_t n = 400) {
  Dataset ds = shifted(ShiftKind::None, n);
  ds.task = Task::Regression;
  for (Eigen::Index i = 0; i < ds.rows(); ++i) ds.y(i) = 10.0 + 3.0 * ds.X(i, 0) - ds.X(i, 1);
  return ds;
}

TEST(EarlyStopping, StrictImprovementRunsToEnd) {
  EarlyStopping es(3, MetricDirection::HigherIsBetter);
  for (int e = 1; e <= 10; ++e) {
    EXPECT_TRUE(es.update(0.1 * e));
    EXPECT_FALSE(es.should_stop());
  }
  EXPECT_EQ(es.best_epoch(), 10u);
}

TEST(EarlyStopping, FrozenMetricStopsAfterPatience) {
  EarlyStopping es(4, MetricDirection::LowerIsBetter);
  std::size_t epochs = 0;
  while (!es.should_stop()) {
    es.update(1.0);
    ++epochs;
  }
  EXPECT_EQ(es.best_epoch(), 1u);
  EXPECT_EQ(epochs, 5u);
}

TEST(EarlyStopping, ToleranceRequiresStrictGain) {
  EarlyStopping es(2, MetricDirection::HigherIsBetter);
  es.update(0.5);
  EXPECT_FALSE(es.update(0.5 + 1e-13));
  EXPECT_TRUE(es.update(0.5 + 1e-11));
  EXPECT_THROW(EarlyStopping(0, MetricDirection::HigherIsBetter), InputError);
}

TEST(Train, DeterministicForSeed) {
  const Dataset ds = shifted(ShiftKind::Concept);
  const auto split = temporal_split(ds);
  const auto a = train(tiny_spec(Variant::Modulated), ds, split, quick());
  const auto b = train(tiny_spec(Variant::Modulated), ds, split, quick());
  Model ma = a.trained.model, mb = b.trained.model;
  const auto pa = ma.parameters(), pb = mb.parameters();
  for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_EQ(pa[i]->value, pb[i]->value);
  EXPECT_EQ(run_result_to_json(a.result).dump(), run_result_to_json(b.result).dump());
  TrainConfig other = quick();
  other.seed = 1;
  const auto c = train(tiny_spec(Variant::Modulated), ds, split, other);
  EXPECT_NE(c.trained.model.output_layer().weight.value, a.trained.model.output_layer().weight.value);
}

TEST(Train, HistoryAndBestEpoch) {
  const Dataset ds = shifted(ShiftKind::None);
  const auto split = temporal_split(ds);
  TrainConfig cfg = quick(200);
  cfg.patience = 2;
  const auto out = train(tiny_spec(Variant::Static), ds, split, cfg);
  const auto& r = out.result;
  ASSERT_FALSE(r.history.empty());
  EXPECT_LE(r.history.size(), r.best_epoch + cfg.patience);
  double best = -1;
  for (const auto& h : r.history) best = std::max(best, h.val_metric);
  EXPECT_EQ(best, r.best_val_metric);
  EXPECT_EQ(r.history[r.best_epoch - 1].val_metric, r.best_val_metric);
  EXPECT_EQ(r.val_metric_name, "auc");
  // Restored parameters reproduce the best validation AUC.
  EXPECT_EQ(*evaluate(out.trained, ds, split.val).auc, r.best_val_metric);
  EXPECT_GT(r.best_val_metric, 0.99);
  EXPECT_GT(*r.test.auc, 0.99);
}

TEST(Train, InitialLossSharedBetweenStaticAndModulated) {
  const Dataset ds = shifted(ShiftKind::Concept);
  const auto split = temporal_split(ds);
  const auto s = train(tiny_spec(Variant::Static), ds, split, quick(1));
  const auto m = train(tiny_spec(Variant::Modulated), ds, split, quick(1));
  EXPECT_NEAR(s.result.initial_train_loss, m.result.initial_train_loss, 1e-12);
}

TEST(Train, RegressionReportsOriginalUnits) {
  const Dataset ds = regression_data();
  const auto split = random_split(ds, {}, 0);
  TrainConfig cfg = quick(60);
  cfg.patience = 10;
  const auto out = train(tiny_spec(Variant::Static, Task::Regression), ds, split, cfg);
  EXPECT_EQ(out.result.val_metric_name, "rmse");
  ASSERT_TRUE(out.trained.target.has_value());
  // Target std is about 6.7; a fitted model does much better in original units.
  EXPECT_LT(*out.result.test.rmse, 1.0);
  const Dataset test = ds.subset(split.test);
  const Vector pred = out.trained.predict(test.X, test.t);
  EXPECT_NEAR(std::sqrt((pred - test.y).squaredNorm() / double(test.rows())), *out.result.test.rmse, 1e-12);
}

TEST(Train, NonFiniteLossNamesBatch) {
  const Dataset ds = regression_data();
  const auto split = random_split(ds, {}, 0);
  TrainConfig cfg = quick(3);
  cfg.adamw.lr = 1e200;
  try {
    train(tiny_spec(Variant::Static, Task::Regression), ds, split, cfg);
    FAIL() << "expected a training error";
  } catch (const TrainingError& e) {
    EXPECT_NE(std::string(e.what()).find("batch"), std::string::npos) << e.what();
  }
}

TEST(Train, RejectsMismatchedSpec) {
  const Dataset ds = shifted(ShiftKind::None, 100);
  ModelSpec s = tiny_spec(Variant::Static);
  s.backbone.input_width = 3;
  EXPECT_THROW(train(s, ds, temporal_split(ds), quick()), InputError);
  TrainConfig bad = quick();
  bad.batch_size = 0;
  EXPECT_THROW(train(tiny_spec(Variant::Static), ds, temporal_split(ds), bad), InputError);
}

TEST(Train, EmbeddingVariantTrains) {
  const Dataset ds = shifted(ShiftKind::Concept);
  const auto out = train(tiny_spec(Variant::Embedding), ds, temporal_split(ds), quick(3));
  EXPECT_TRUE(out.trained.model.has_embedding());
  EXPECT_EQ(out.result.history.size(), 3u);
}

TEST(ModelFile, RoundTripIsBitwise) {
  const Dataset ds = shifted(ShiftKind::Concept);
  const auto split = temporal_split(ds);
  const auto out = train(tiny_spec(Variant::Modulated), ds, split, quick(2));
  const fs::path p = fs::temp_directory_path() / "ttm_model_roundtrip.bin";
  save_model(out.trained, p);
  const TrainedModel back = load_model(p);
  EXPECT_EQ(back.logits(ds.X, ds.t), out.trained.logits(ds.X, ds.t));
  EXPECT_EQ(back.model.parameter_count(), out.trained.model.parameter_count());
  EXPECT_EQ(back.model.embedding().normalizer().t_min, out.trained.model.embedding().normalizer().t_min);

  const fs::path p2 = fs::temp_directory_path() / "ttm_model_roundtrip2.bin";
  save_model(back, p2);
  std::ifstream a(p, std::ios::binary), b(p2, std::ios::binary);
  EXPECT_TRUE(std::equal(std::istreambuf_iterator<char>(a), {}, std::istreambuf_iterator<char>(b), {}));
}

TEST(ModelFile, RegressionRoundTrip) {
  const Dataset ds = regression_data(200);
  const auto out = train(tiny_spec(Variant::Static, Task::Regression), ds, random_split(ds, {}, 1), quick(2));
  const fs::path p = fs::temp_directory_path() / "ttm_model_regression.bin";
  save_model(out.trained, p);
  const TrainedModel back = load_model(p);
  EXPECT_EQ(back.predict(ds.X, ds.t), out.trained.predict(ds.X, ds.t));
}

TEST(ModelFile, RejectsGarbage) {
  const fs::path p = fs::temp_directory_path() / "ttm_model_garbage.bin";
  std::ofstream(p, std::ios::binary) << "not a model";
  EXPECT_THROW(load_model(p), SchemaError);
  EXPECT_THROW(load_model("/nonexistent/model.bin"), IoError);
}

}  // namespace
}  // namespace ttm

#pragma once

// The three comparable architectures over one ReLU MLP backbone:
//   Static     - f(x), timestamps ignored
//   Embedding  - f([x, psi(t)])
//   Modulated  - feature-wise temporal modulation at the configured placements
//
// Initialization is a pure function of (spec, seed); see rng.hpp for the
// seed-splitting tags. Backbone layers use the same streams in every variant,
// so a Static and a Modulated model built from one seed share backbone weights.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ttm/modulation.hpp"
#include "ttm/numeric.hpp"
#include "ttm/temporal_embedding.hpp"

namespace ttm {

enum class Variant { Static, Embedding, Modulated };
enum class Task { BinaryClassification, Regression };

std::string to_string(Variant v);
std::string to_string(Task t);
Variant variant_from_string(const std::string& s);
Task task_from_string(const std::string& s);

struct BackboneSpec {
  Eigen::Index input_width = 0;
  std::vector<Eigen::Index> hidden{256, 256};
};

/// Which stages are modulated. Representation layers are hidden-layer
/// indices; modulation there acts on the linear output before the ReLU.
struct PlacementSet {
  bool input = false;
  bool representation = false;
  std::vector<std::size_t> representation_layers{0};
  bool output = false;

  static PlacementSet none() { return {}; }
  static PlacementSet input_only() { return {true, false, {0}, false}; }
  static PlacementSet all() { return {true, true, {0}, true}; }

  /// Canonical order: input, representation layers ascending, output.
  std::vector<Placement> active() const;
};

struct ModelSpec {
  BackboneSpec backbone;
  Variant variant = Variant::Static;
  EmbeddingConfig embedding;
  PlacementSet placements;
  Eigen::Index h_mod = 64;
  Task task = Task::BinaryClassification;

  void validate() const;
  bool uses_time() const;
};

struct NamedParameter {
  std::string name;
  Parameter<double>* param;
};

struct ForwardCache {
  EmbeddingCache embedding;
  std::vector<Modulator::Cache> modulators;
  std::vector<ModulateCache> modulates;
  Matrix backbone_input;
  std::vector<Matrix> layer_inputs;
  std::vector<Matrix> pre_activations;
  Matrix last_hidden;
  bool valid = false;
};

/// Sign (z > 0) of every ReLU pre-activation recorded in a forward pass.
std::vector<bool> relu_pattern(const ForwardCache& cache);

Linear<double> uniform_linear(Eigen::Index in, Eigen::Index out, std::uint64_t key);

class Model {
 public:
  Model() = default;
  Model(ModelSpec spec, std::uint64_t seed);

  const ModelSpec& spec() const { return spec_; }
  std::size_t hidden_count() const { return hidden_.size(); }
  Linear<double>& hidden_layer(std::size_t i) { return hidden_.at(i); }
  const Linear<double>& hidden_layer(std::size_t i) const { return hidden_.at(i); }
  Linear<double>& output_layer() { return output_; }
  const Linear<double>& output_layer() const { return output_; }

  bool has_embedding() const { return embedding_.has_value(); }
  TemporalEmbedding& embedding() { return embedding_.value(); }
  const TemporalEmbedding& embedding() const { return embedding_.value(); }
  /// Trend range comes from the training split; no-op for models without psi.
  void set_trend_normalizer(TrendNormalizer n);

  const std::vector<Placement>& placements() const { return placements_; }
  std::vector<Modulator>& modulators() { return modulators_; }
  Modulator& modulator(const Placement& p);
  const Modulator& modulator(const Placement& p) const;

  /// Raw timestamp features (rows x raw width), or an empty n x 0 matrix when the
  /// model does not consume psi.
  Matrix time_features(std::span<const double> t) const;
  /// d_embedding-wide psi(t) for each row, n x 0 without embedding.
  Matrix psi(std::span<const double> t) const;

  /// Logits (or regression outputs), n x 1.
  Matrix forward(const Matrix& x, std::span<const double> t) const;
  Matrix forward_raw(const Matrix& x, const Matrix& time_raw, ForwardCache* cache = nullptr) const;
  /// Accumulates gradients of every trainable parameter.
  void backward(const ForwardCache& cache, const Matrix& grad_out);

  /// Fixed order: hidden layers, output layer, projection, modulators.
  std::vector<NamedParameter> named_parameters();
  std::vector<Parameter<double>*> parameters();
  Eigen::Index parameter_count() const;
  void zero_grad();

 private:
  std::optional<std::size_t> placement_index(Placement::Kind kind, std::size_t layer = 0) const;

  ModelSpec spec_;
  std::vector<Linear<double>> hidden_;
  Linear<double> output_;
  std::optional<TemporalEmbedding> embedding_;
  std::vector<Placement> placements_;
  std::vector<Modulator> modulators_;
};

/// Runs the modulated backbone: input placement, hidden layers with optional
/// pre-activation modulation, output placement.
Matrix apply_placements(const Model& model, const Matrix& x, std::span<const double> t);

Vector predict_proba(const Model& model, const Matrix& x, std::span<const double> t);
Vector predict(const Model& model, const Matrix& x, std::span<const double> t);

}  // namespace ttm

#include "ttm/model.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "ttm/rng.hpp"

namespace ttm {

std::string to_string(Variant v) {
  switch (v) {
    case Variant::Static: return "static";
    case Variant::Embedding: return "embedding";
    case Variant::Modulated: return "modulated";
  }
  return "?";
}

std::string to_string(Task t) {
  return t == Task::BinaryClassification ? "classification" : "regression";
}

Variant variant_from_string(const std::string& s) {
  if (s == "static") return Variant::Static;
  if (s == "embedding") return Variant::Embedding;
  if (s == "modulated") return Variant::Modulated;
  throw InputError("unknown variant '" + s + "' (expected static, embedding or modulated)");
}

Task task_from_string(const std::string& s) {
  if (s == "classification") return Task::BinaryClassification;
  if (s == "regression") return Task::Regression;
  throw InputError("unknown task '" + s + "' (expected classification or regression)");
}

std::vector<Placement> PlacementSet::active() const {
  std::vector<Placement> out;
  if (input) {
    out.push_back(Placement::input());
  }
  if (representation) {
    std::set<std::size_t> layers(representation_layers.begin(), representation_layers.end());
    for (std::size_t l : layers) {
      out.push_back(Placement::representation(l));
    }
  }
  if (output) {
    out.push_back(Placement::output());
  }
  return out;
}

void ModelSpec::validate() const {
  if (backbone.input_width <= 0) {
    throw InputError("model: input width must be positive");
  }
  if (backbone.hidden.empty()) {
    throw InputError("model: at least one hidden layer required");
  }
  for (auto w : backbone.hidden) {
    if (w <= 0) {
      throw InputError("model: hidden widths must be positive");
    }
  }
  if (variant != Variant::Static) {
    embedding.validate();
  }
  if (variant == Variant::Modulated) {
    if (h_mod <= 0) {
      throw InputError("model: h_mod must be positive");
    }
    if (placements.representation) {
      if (placements.representation_layers.empty()) {
        throw InputError("model: representation placement needs at least one layer index");
      }
      for (auto l : placements.representation_layers) {
        if (l >= backbone.hidden.size()) {
          throw InputError("model: representation layer " + std::to_string(l) + " out of range (" +
                           std::to_string(backbone.hidden.size()) + " hidden layers)");
        }
      }
    }
  }
}

bool ModelSpec::uses_time() const {
  if (!embedding.enabled()) {
    return false;
  }
  switch (variant) {
    case Variant::Static: return false;
    case Variant::Embedding: return true;
    case Variant::Modulated: return !placements.active().empty();
  }
  return false;
}

Linear<double> uniform_linear(Eigen::Index in, Eigen::Index out, std::uint64_t key) {
  Linear<double> layer(in, out);
  CounterRng rng(key);
  const double bound = in > 0 ? 1.0 / std::sqrt(static_cast<double>(in)) : 1.0;
  for (Eigen::Index i = 0; i < layer.weight.value.size(); ++i) {
    layer.weight.value.data()[i] = rng.uniform(-bound, bound);
  }
  for (Eigen::Index i = 0; i < layer.bias.value.size(); ++i) {
    layer.bias.value.data()[i] = rng.uniform(-bound, bound);
  }
  return layer;
}

namespace {

std::uint64_t placement_stream(const Placement& p) {
  return static_cast<std::uint64_t>(p.kind);
}

}  // namespace

Model::Model(ModelSpec spec, std::uint64_t seed) : spec_(std::move(spec)) {
  spec_.validate();
  const bool psi_consumer =
      spec_.embedding.enabled() &&
      (spec_.variant == Variant::Embedding ||
       (spec_.variant == Variant::Modulated && !spec_.placements.active().empty()));
  const Eigen::Index d_e = psi_consumer ? spec_.embedding.d_embedding : 0;

  Eigen::Index in = spec_.backbone.input_width;
  if (spec_.variant == Variant::Embedding) {
    in += d_e;
  }
  for (std::size_t i = 0; i < spec_.backbone.hidden.size(); ++i) {
    hidden_.push_back(uniform_linear(in, spec_.backbone.hidden[i], derive_seed(seed, "backbone", i)));
    in = spec_.backbone.hidden[i];
  }
  output_ = uniform_linear(in, 1, derive_seed(seed, "backbone", spec_.backbone.hidden.size()));

  if (psi_consumer) {
    embedding_.emplace(spec_.embedding, TrendNormalizer{},
                       uniform_linear(spec_.embedding.raw_width(), d_e, derive_seed(seed, "projection")));
  }
  if (spec_.variant == Variant::Modulated) {
    placements_ = spec_.placements.active();
    for (const auto& p : placements_) {
      Eigen::Index width = 1;
      if (p.kind == Placement::Kind::Input) {
        width = spec_.backbone.input_width;
      } else if (p.kind == Placement::Kind::Representation) {
        width = spec_.backbone.hidden[p.layer];
      }
      Modulator mod(d_e, spec_.h_mod, width);
      mod.hidden() = uniform_linear(d_e, spec_.h_mod,
                                    derive_seed(seed, "modulator", placement_stream(p), p.layer));
      modulators_.push_back(std::move(mod));
    }
  }
}

void Model::set_trend_normalizer(TrendNormalizer n) {
  if (embedding_) {
    embedding_->set_normalizer(n);
  }
}

std::optional<std::size_t> Model::placement_index(Placement::Kind kind, std::size_t layer) const {
  for (std::size_t i = 0; i < placements_.size(); ++i) {
    if (placements_[i].kind == kind && (kind != Placement::Kind::Representation || placements_[i].layer == layer)) {
      return i;
    }
  }
  return std::nullopt;
}

Modulator& Model::modulator(const Placement& p) {
  const auto idx = placement_index(p.kind, p.layer);
  if (!idx) {
    throw InputError("model: placement " + p.label() + " is not active");
  }
  return modulators_[*idx];
}

const Modulator& Model::modulator(const Placement& p) const {
  return const_cast<Model*>(this)->modulator(p);
}

Matrix Model::time_features(std::span<const double> t) const {
  if (!embedding_) {
    return Matrix(static_cast<Eigen::Index>(t.size()), 0);
  }
  return embedding_->raw(t);
}

Matrix Model::psi(std::span<const double> t) const {
  if (!embedding_) {
    return Matrix(static_cast<Eigen::Index>(t.size()), 0);
  }
  return embedding_->embed(t);
}

Matrix Model::forward(const Matrix& x, std::span<const double> t) const {
  if (spec_.uses_time() && static_cast<Eigen::Index>(t.size()) != x.rows()) {
    throw InputError("model forward: " + to_string(spec_.variant) + " model needs one timestamp per row (" +
                     std::to_string(x.rows()) + " rows, " + std::to_string(t.size()) + " timestamps)");
  }
  const Matrix raw = embedding_ ? embedding_->raw(t) : Matrix(x.rows(), 0);
  return forward_raw(x, raw);
}

std::vector<bool> relu_pattern(const ForwardCache& cache) {
  std::vector<bool> out;
  const auto append = [&](const Matrix& z) {
    for (Eigen::Index k = 0; k < z.size(); ++k) out.push_back(z.data()[k] > 0.0);
  };
  for (const auto& m : cache.modulators) append(m.pre_hidden);
  for (const auto& z : cache.pre_activations) append(z);
  return out;
}

Matrix Model::forward_raw(const Matrix& x, const Matrix& time_raw, ForwardCache* cache) const {
  if (x.cols() != spec_.backbone.input_width) {
    throw DimensionError("model forward: input has " + std::to_string(x.cols()) + " columns, model expects " +
                         std::to_string(spec_.backbone.input_width));
  }
  const Eigen::Index n = x.rows();
  ForwardCache local;
  ForwardCache& c = cache != nullptr ? *cache : local;
  c = ForwardCache{};

  Matrix psi(n, 0);
  if (embedding_) {
    if (time_raw.rows() != n) {
      throw InputError("model forward: time features have " + std::to_string(time_raw.rows()) +
                       " rows for " + std::to_string(n) + " samples");
    }
    c.embedding = embedding_->forward(time_raw);
    psi = c.embedding.psi;
  }

  c.modulators.reserve(modulators_.size());
  for (const auto& mod : modulators_) {
    c.modulators.push_back(mod.forward(psi));
  }
  c.modulates.resize(modulators_.size());

  Matrix a;
  if (spec_.variant == Variant::Embedding && psi.cols() > 0) {
    a.resize(n, x.cols() + psi.cols());
    a << x, psi;
  } else if (const auto idx = placement_index(Placement::Kind::Input)) {
    a = modulate(x, c.modulators[*idx].params, &c.modulates[*idx]);
  } else {
    a = x;
  }
  c.backbone_input = a;

  for (std::size_t i = 0; i < hidden_.size(); ++i) {
    Matrix z = linear_forward(hidden_[i], a);
    if (const auto idx = placement_index(Placement::Kind::Representation, i)) {
      z = modulate(z, c.modulators[*idx].params, &c.modulates[*idx]);
    }
    c.layer_inputs.push_back(std::move(a));
    a = relu_forward(z);
    c.pre_activations.push_back(std::move(z));
  }
  Matrix out = linear_forward(output_, a);
  c.last_hidden = std::move(a);
  if (const auto idx = placement_index(Placement::Kind::Output)) {
    out = modulate(out, c.modulators[*idx].params, &c.modulates[*idx]);
  }
  c.valid = true;
  return out;
}

void Model::backward(const ForwardCache& c, const Matrix& grad_out) {
  if (!c.valid) {
    throw InputError("model backward: no forward cache");
  }
  const Eigen::Index n = grad_out.rows();
  std::vector<std::optional<ModulateGrads>> mod_grads(modulators_.size());

  Matrix g = grad_out;
  if (const auto idx = placement_index(Placement::Kind::Output)) {
    mod_grads[*idx] = modulate_backward(c.modulates[*idx], g);
    g = mod_grads[*idx]->x;
  }
  g = linear_backward(output_, c.last_hidden, g);
  for (std::size_t k = hidden_.size(); k-- > 0;) {
    g = relu_backward(c.pre_activations[k], g);
    if (const auto idx = placement_index(Placement::Kind::Representation, k)) {
      mod_grads[*idx] = modulate_backward(c.modulates[*idx], g);
      g = mod_grads[*idx]->x;
    }
    if (k > 0 || spec_.variant == Variant::Embedding || placement_index(Placement::Kind::Input)) {
      g = linear_backward(hidden_[k], c.layer_inputs[k], g);
    } else {
      linear_backward_params(hidden_[k], c.layer_inputs[k], g);
    }
  }

  Matrix grad_psi = Matrix::Zero(n, embedding_ ? embedding_->width() : 0);
  if (spec_.variant == Variant::Embedding && grad_psi.cols() > 0) {
    grad_psi += g.rightCols(grad_psi.cols());
  } else if (const auto idx = placement_index(Placement::Kind::Input)) {
    mod_grads[*idx] = modulate_backward(c.modulates[*idx], g);
  }

  for (std::size_t i = 0; i < modulators_.size(); ++i) {
    const ModulateGrads& mg = *mod_grads[i];
    Matrix gp = modulators_[i].backward(c.modulators[i], mg.gamma, mg.beta, mg.lambda);
    if (grad_psi.cols() > 0) {
      grad_psi += gp;
    }
  }
  if (embedding_) {
    embedding_->backward(c.embedding, grad_psi);
  }
}

std::vector<NamedParameter> Model::named_parameters() {
  std::vector<NamedParameter> out;
  for (std::size_t i = 0; i < hidden_.size(); ++i) {
    out.push_back({"hidden" + std::to_string(i) + ".weight", &hidden_[i].weight});
    out.push_back({"hidden" + std::to_string(i) + ".bias", &hidden_[i].bias});
  }
  out.push_back({"output.weight", &output_.weight});
  out.push_back({"output.bias", &output_.bias});
  if (embedding_) {
    out.push_back({"projection.weight", &embedding_->projection().weight});
    out.push_back({"projection.bias", &embedding_->projection().bias});
  }
  for (std::size_t i = 0; i < modulators_.size(); ++i) {
    const std::string prefix = "modulator." + placements_[i].label();
    out.push_back({prefix + ".hidden.weight", &modulators_[i].hidden().weight});
    out.push_back({prefix + ".hidden.bias", &modulators_[i].hidden().bias});
    out.push_back({prefix + ".head.weight", &modulators_[i].head().weight});
    out.push_back({prefix + ".head.bias", &modulators_[i].head().bias});
  }
  return out;
}

std::vector<Parameter<double>*> Model::parameters() {
  std::vector<Parameter<double>*> out;
  for (auto& np : named_parameters()) {
    out.push_back(np.param);
  }
  return out;
}

Eigen::Index Model::parameter_count() const {
  Eigen::Index total = output_.parameter_count();
  for (const auto& l : hidden_) {
    total += l.parameter_count();
  }
  if (embedding_) {
    total += embedding_->projection().parameter_count();
  }
  for (const auto& m : modulators_) {
    total += m.parameter_count();
  }
  return total;
}

void Model::zero_grad() {
  for (auto* p : parameters()) {
    p->zero_grad();
  }
}

Matrix apply_placements(const Model& model, const Matrix& x, std::span<const double> t) {
  return model.forward(x, t);
}

Vector predict_proba(const Model& model, const Matrix& x, std::span<const double> t) {
  if (model.spec().task != Task::BinaryClassification) {
    throw InputError("predict_proba: model is a regression model");
  }
  const Matrix logits = model.forward(x, t);
  Vector p(logits.rows());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    p(i) = sigmoid(logits(i, 0));
  }
  return p;
}

Vector predict(const Model& model, const Matrix& x, std::span<const double> t) {
  if (model.spec().task != Task::Regression) {
    throw InputError("predict: model is a classification model; use predict_proba");
  }
  return model.forward(x, t).col(0);
}

}  // namespace ttm

#pragma once

// Dense building blocks for the models: matrices, affine layers, ReLU,
// losses, AdamW and a central-difference gradient checker.
//
// Layout is row-major and batch-first: a batch of n samples with k features
// is an n x k matrix. Every backward function accumulates into Parameter::grad;
// callers reset with zero_grad().

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ttm/errors.hpp"

namespace ttm {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Matrix = MatrixX<double>;
using Vector = VectorX<double>;

inline std::string shape_string(Eigen::Index rows, Eigen::Index cols) {
  return std::to_string(rows) + "x" + std::to_string(cols);
}

template <typename Derived>
void require_finite(const Eigen::DenseBase<Derived>& m, std::string_view what) {
  if (!m.allFinite()) {
    throw InputError(std::string(what) + ": non-finite entry");
  }
}

template <typename DerivedA, typename DerivedB>
void require_same_shape(const Eigen::DenseBase<DerivedA>& a, const Eigen::DenseBase<DerivedB>& b,
                        std::string_view what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(what) + ": shape " + shape_string(a.rows(), a.cols()) +
                         " vs " + shape_string(b.rows(), b.cols()));
  }
}

/// Builds a matrix from external row-major data, rejecting NaN/Inf.
template <typename Scalar = double>
MatrixX<Scalar> matrix_from(Eigen::Index rows, Eigen::Index cols, std::span<const Scalar> data) {
  if (static_cast<std::size_t>(rows * cols) != data.size()) {
    throw DimensionError("matrix_from: " + std::to_string(data.size()) + " values for shape " +
                         shape_string(rows, cols));
  }
  MatrixX<Scalar> m = Eigen::Map<const MatrixX<Scalar>>(data.data(), rows, cols);
  require_finite(m, "matrix_from");
  return m;
}

template <typename Scalar>
struct Parameter {
  MatrixX<Scalar> value;
  MatrixX<Scalar> grad;

  Parameter() = default;
  explicit Parameter(MatrixX<Scalar> v) : value(std::move(v)), grad(MatrixX<Scalar>::Zero(value.rows(), value.cols())) {}
  Parameter(Eigen::Index rows, Eigen::Index cols)
      : value(MatrixX<Scalar>::Zero(rows, cols)), grad(MatrixX<Scalar>::Zero(rows, cols)) {}

  void zero_grad() { grad.setZero(); }
  Eigen::Index size() const { return value.size(); }
};

/// y = x W^T + b, weight is out x in, bias is out x 1.
template <typename Scalar>
struct Linear {
  Parameter<Scalar> weight;
  Parameter<Scalar> bias;

  Linear() = default;
  Linear(Eigen::Index in, Eigen::Index out) : weight(out, in), bias(out, 1) {}

  Eigen::Index in() const { return weight.value.cols(); }
  Eigen::Index out() const { return weight.value.rows(); }
  Eigen::Index parameter_count() const { return weight.size() + bias.size(); }

  void zero_grad() {
    weight.zero_grad();
    bias.zero_grad();
  }
};

template <typename Scalar>
MatrixX<Scalar> linear_forward(const Linear<Scalar>& layer, const MatrixX<Scalar>& x) {
  if (x.cols() != layer.in()) {
    throw DimensionError("linear_forward: input has " + std::to_string(x.cols()) +
                         " columns, layer expects " + std::to_string(layer.in()));
  }
  MatrixX<Scalar> y = x * layer.weight.value.transpose();
  y.rowwise() += layer.bias.value.col(0).transpose();
  return y;
}

/// Accumulates weight/bias gradients and returns the gradient w.r.t. x.
template <typename Scalar>
MatrixX<Scalar> linear_backward(Linear<Scalar>& layer, const MatrixX<Scalar>& x,
                                const MatrixX<Scalar>& upstream) {
  if (x.cols() != layer.in() || upstream.cols() != layer.out() || x.rows() != upstream.rows()) {
    throw DimensionError("linear_backward: x " + shape_string(x.rows(), x.cols()) + ", upstream " +
                         shape_string(upstream.rows(), upstream.cols()) + ", layer " +
                         shape_string(layer.out(), layer.in()));
  }
  layer.weight.grad.noalias() += upstream.transpose() * x;
  layer.bias.grad.col(0) += upstream.colwise().sum().transpose();
  return upstream * layer.weight.value;
}

/// Same as linear_backward but skips the input gradient (first layer of a branch).
template <typename Scalar>
void linear_backward_params(Linear<Scalar>& layer, const MatrixX<Scalar>& x,
                            const MatrixX<Scalar>& upstream) {
  if (x.cols() != layer.in() || upstream.cols() != layer.out() || x.rows() != upstream.rows()) {
    throw DimensionError("linear_backward: shape mismatch");
  }
  layer.weight.grad.noalias() += upstream.transpose() * x;
  layer.bias.grad.col(0) += upstream.colwise().sum().transpose();
}

template <typename Scalar>
MatrixX<Scalar> relu_forward(const MatrixX<Scalar>& x) {
  return x.cwiseMax(Scalar(0));
}

/// Gate is x > 0, so the subgradient at exactly 0 is 0.
template <typename Scalar>
MatrixX<Scalar> relu_backward(const MatrixX<Scalar>& x, const MatrixX<Scalar>& upstream) {
  require_same_shape(x, upstream, "relu_backward");
  return (x.array() > Scalar(0)).select(upstream, Scalar(0));
}

template <typename Scalar>
Scalar sigmoid(Scalar z) {
  if (z >= 0) {
    return Scalar(1) / (Scalar(1) + std::exp(-z));
  }
  const Scalar e = std::exp(z);
  return e / (Scalar(1) + e);
}

/// log(1 + exp(a)) without overflow.
template <typename Scalar>
Scalar softplus(Scalar a) {
  return std::max(a, Scalar(0)) + std::log1p(std::exp(-std::abs(a)));
}

template <typename Scalar>
struct LossResult {
  Scalar loss;
  MatrixX<Scalar> grad;
};

/// Mean binary cross-entropy on logits; labels must be exactly 0 or 1.
template <typename Scalar>
LossResult<Scalar> bce_with_logits(const MatrixX<Scalar>& logits, const MatrixX<Scalar>& labels) {
  require_same_shape(logits, labels, "bce_with_logits");
  if (logits.size() == 0) {
    throw InputError("bce_with_logits: empty batch");
  }
  const auto n = static_cast<Scalar>(logits.size());
  LossResult<Scalar> out{Scalar(0), MatrixX<Scalar>(logits.rows(), logits.cols())};
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    const Scalar y = labels.data()[i];
    if (y != Scalar(0) && y != Scalar(1)) {
      throw InputError("bce_with_logits: label " + std::to_string(static_cast<double>(y)) +
                       " at index " + std::to_string(i) + " is not binary");
    }
    const Scalar z = logits.data()[i];
    const Scalar sign = Scalar(2) * y - Scalar(1);
    out.loss += softplus(-sign * z);
    out.grad.data()[i] = (sigmoid(z) - y) / n;
  }
  out.loss /= n;
  return out;
}

template <typename Scalar>
LossResult<Scalar> mse_loss(const MatrixX<Scalar>& pred, const MatrixX<Scalar>& target) {
  require_same_shape(pred, target, "mse_loss");
  if (pred.size() == 0) {
    throw InputError("mse_loss: empty batch");
  }
  const auto n = static_cast<Scalar>(pred.size());
  MatrixX<Scalar> diff = pred - target;
  return {diff.squaredNorm() / n, (Scalar(2) / n) * diff};
}

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;

  void validate() const {
    if (!(lr > 0) || !(beta1 > 0 && beta1 < 1) || !(beta2 > 0 && beta2 < 1) || !(eps > 0) ||
        !(weight_decay >= 0)) {
      throw InputError("AdamWConfig: lr>0, beta in (0,1), eps>0, weight_decay>=0 required");
    }
  }
};

template <typename Scalar>
struct AdamWState {
  MatrixX<Scalar> m;
  MatrixX<Scalar> v;
  std::int64_t step = 0;

  AdamWState() = default;
  AdamWState(Eigen::Index rows, Eigen::Index cols)
      : m(MatrixX<Scalar>::Zero(rows, cols)), v(MatrixX<Scalar>::Zero(rows, cols)) {}
  explicit AdamWState(const Parameter<Scalar>& p) : AdamWState(p.value.rows(), p.value.cols()) {}
};

/// One AdamW update. Weight decay is decoupled: theta *= (1 - lr*wd) before the
/// bias-corrected adaptive step.
template <typename Scalar>
void adamw_step(Parameter<Scalar>& param, AdamWState<Scalar>& state, const AdamWConfig& cfg) {
  require_same_shape(param.value, state.m, "adamw_step");
  require_same_shape(param.value, param.grad, "adamw_step");
  state.step += 1;
  const auto lr = static_cast<Scalar>(cfg.lr);
  const auto b1 = static_cast<Scalar>(cfg.beta1);
  const auto b2 = static_cast<Scalar>(cfg.beta2);
  const auto eps = static_cast<Scalar>(cfg.eps);
  if (cfg.weight_decay != 0.0) {
    param.value *= Scalar(1) - lr * static_cast<Scalar>(cfg.weight_decay);
  }
  state.m = b1 * state.m + (Scalar(1) - b1) * param.grad;
  state.v = b2 * state.v + (Scalar(1) - b2) * param.grad.cwiseAbs2();
  const Scalar c1 = Scalar(1) - std::pow(b1, static_cast<Scalar>(state.step));
  const Scalar c2 = Scalar(1) - std::pow(b2, static_cast<Scalar>(state.step));
  param.value.array() -=
      lr * (state.m.array() / c1) / ((state.v.array() / c2).sqrt() + eps);
}

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_param = 0;
  Eigen::Index worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;
  /// Coordinates whose gradient is below what central differences resolve at
  /// this h; compared in absolute terms against the round-off bound instead.
  std::size_t below_resolution = 0;
  double max_excess_over_noise = 0.0;
  bool passed = true;
};

/// |a - n| / max(1e-12, |a| + |n|)
inline double gradient_rel_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1e-12, std::abs(analytic) + std::abs(numeric));
}

/// Compares the gradients already stored in each Parameter::grad against central
/// differences of `loss`. `loss` must be a deterministic function of the values.
/// `pattern` returns the on/off state of every piecewise-linear unit; coordinates
/// whose +h and -h evaluations see different patterns straddle a kink and are
/// counted in `skipped` instead of being compared. When |g_a| + |g_n| is so small
/// that the round-off of the loss difference, 32 eps |L| / (2h), exceeds tol of it,
/// the coordinate passes iff |g_a - g_n| is within that round-off bound.
template <typename Scalar, typename LossFn, typename PatternFn>
GradCheckReport finite_diff_check(LossFn&& loss, std::span<Parameter<Scalar>* const> params, Scalar h,
                                  double tol, PatternFn&& pattern) {
  GradCheckReport report;
  for (std::size_t p = 0; p < params.size(); ++p) {
    Parameter<Scalar>& param = *params[p];
    for (Eigen::Index i = 0; i < param.value.size(); ++i) {
      Scalar& slot = param.value.data()[i];
      const Scalar saved = slot;
      slot = saved + h;
      const Scalar plus = loss();
      const auto pattern_plus = pattern();
      slot = saved - h;
      const Scalar minus = loss();
      const auto pattern_minus = pattern();
      slot = saved;
      if (pattern_plus != pattern_minus) {
        ++report.skipped;
        continue;
      }
      const double numeric = static_cast<double>((plus - minus) / (Scalar(2) * h));
      const double analytic = static_cast<double>(param.grad.data()[i]);
      ++report.checked;
      const double noise = 32.0 * static_cast<double>(std::numeric_limits<Scalar>::epsilon()) *
                           std::max(std::abs(double(plus)), std::abs(double(minus))) / (2.0 * double(h));
      if (std::abs(analytic) + std::abs(numeric) < noise / tol) {
        ++report.below_resolution;
        report.max_excess_over_noise = std::max(report.max_excess_over_noise, std::abs(analytic - numeric) / noise);
        continue;
      }
      const double err = gradient_rel_error(analytic, numeric);
      if (err > report.max_rel_error) {
        report.max_rel_error = err;
        report.worst_param = p;
        report.worst_index = i;
        report.worst_analytic = analytic;
        report.worst_numeric = numeric;
      }
    }
  }
  report.passed = report.max_rel_error < tol && report.max_excess_over_noise <= 1.0;
  return report;
}

template <typename Scalar, typename LossFn>
GradCheckReport finite_diff_check(LossFn&& loss, std::span<Parameter<Scalar>* const> params,
                                  Scalar h = Scalar(1e-5), double tol = 1e-6) {
  return finite_diff_check(std::forward<LossFn>(loss), params, h, tol, [] { return 0; });
}

}  // namespace ttm

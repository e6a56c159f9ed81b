#pragma once

// Feature-wise temporal modulation:
//
//   x~_i = gamma_i(psi) * YJ(x_i; lambda_i(psi)) + beta_i(psi)
//
// A Modulator maps psi to (gamma, beta, lambda) through one ReLU hidden layer
// and a linear head of width 3m. Parameterization of the head output
// (g, b, l blocks of width m):
//
//   gamma  = 1 + g
//   beta   = b
//   lambda = 1 + 3 tanh(l / 3)
//
// The head starts at zero, so a fresh modulator is the identity map.

#include <string>
#include <vector>

#include "ttm/numeric.hpp"
#include "ttm/yeo_johnson.hpp"

namespace ttm {

inline constexpr double kLambdaRawBound = 3.0;

struct Placement {
  enum class Kind { Input, Representation, Output };
  Kind kind = Kind::Input;
  std::size_t layer = 0;  // hidden layer index, Representation only

  static Placement input() { return {Kind::Input, 0}; }
  static Placement representation(std::size_t layer) { return {Kind::Representation, layer}; }
  static Placement output() { return {Kind::Output, 0}; }

  std::string label() const;
  friend bool operator==(const Placement&, const Placement&) = default;
};

/// Rows are either 1 (shared by the whole batch) or one per sample.
struct ModulationParams {
  Matrix gamma;
  Matrix beta;
  Matrix lambda;

  static ModulationParams identity(Eigen::Index width, Eigen::Index rows = 1);
  Eigen::Index width() const { return gamma.cols(); }
};

struct ModulateCache {
  Matrix x;
  YjBatch<double> yj;
  ModulationParams params;
  bool valid() const { return x.size() > 0 || yj.values.rows() > 0; }
};

struct ModulateGrads {
  Matrix x;
  Matrix gamma;
  Matrix beta;
  Matrix lambda;
};

/// Elementwise gamma * YJ(x; lambda) + beta. Fills `cache` when given.
Matrix modulate(const Matrix& x, const ModulationParams& params, ModulateCache* cache = nullptr);

/// Gradients of modulate. Parameter gradients have the row count of the
/// params used in forward: shared params get batch sums.
ModulateGrads modulate_backward(const ModulateCache& cache, const Matrix& upstream);

class Modulator {
 public:
  struct Cache {
    Matrix psi;
    Matrix pre_hidden;
    Matrix hidden;
    Matrix lambda_slope;  // d lambda / d l
    ModulationParams params;
    bool valid() const { return pre_hidden.rows() > 0; }
  };

  Modulator() = default;
  /// All weights start at zero; Model fills the hidden layer from its seed.
  Modulator(Eigen::Index psi_width, Eigen::Index hidden_width, Eigen::Index width);

  Linear<double>& hidden() { return hidden_; }
  const Linear<double>& hidden() const { return hidden_; }
  Linear<double>& head() { return head_; }
  const Linear<double>& head() const { return head_; }

  Eigen::Index psi_width() const { return hidden_.in(); }
  Eigen::Index width() const { return width_; }
  Eigen::Index parameter_count() const { return hidden_.parameter_count() + head_.parameter_count(); }

  /// One params row per psi row.
  Cache forward(const Matrix& psi) const;
  ModulationParams params(const Matrix& psi) const { return forward(psi).params; }

  /// Backpropagates parameter gradients, accumulating into hidden/head and
  /// returning d loss / d psi.
  Matrix backward(const Cache& cache, const Matrix& grad_gamma, const Matrix& grad_beta,
                  const Matrix& grad_lambda);

  void zero_grad() {
    hidden_.zero_grad();
    head_.zero_grad();
  }

 private:
  Linear<double> hidden_;
  Linear<double> head_;
  Eigen::Index width_ = 0;
};

}  // namespace ttm

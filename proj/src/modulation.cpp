#include "ttm/modulation.hpp"

#include <cmath>

namespace ttm {

std::string Placement::label() const {
  switch (kind) {
    case Kind::Input: return "input";
    case Kind::Representation: return "representation" + std::to_string(layer);
    case Kind::Output: return "output";
  }
  return "?";
}

ModulationParams ModulationParams::identity(Eigen::Index width, Eigen::Index rows) {
  return {Matrix::Ones(rows, width), Matrix::Zero(rows, width), Matrix::Ones(rows, width)};
}

namespace {

void check_params(const Matrix& x, const ModulationParams& p) {
  const auto ok = [&](const Matrix& m) {
    return m.cols() == x.cols() && (m.rows() == 1 || m.rows() == x.rows());
  };
  if (!ok(p.gamma) || !ok(p.beta) || !ok(p.lambda) || p.gamma.rows() != p.beta.rows() ||
      p.gamma.rows() != p.lambda.rows()) {
    throw DimensionError("modulate: params " + shape_string(p.gamma.rows(), p.gamma.cols()) +
                         " do not match input " + shape_string(x.rows(), x.cols()));
  }
}

}  // namespace

Matrix modulate(const Matrix& x, const ModulationParams& params, ModulateCache* cache) {
  check_params(x, params);
  YjBatch<double> yj = yj_batch(x, params.lambda);
  Matrix out(x.rows(), x.cols());
  const bool shared = params.gamma.rows() == 1;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const Eigen::Index pi = shared ? 0 : i;
    out.row(i) = params.gamma.row(pi).cwiseProduct(yj.values.row(i)) + params.beta.row(pi);
  }
  if (cache != nullptr) {
    cache->x = x;
    cache->yj = std::move(yj);
    cache->params = params;
  }
  return out;
}

ModulateGrads modulate_backward(const ModulateCache& cache, const Matrix& upstream) {
  if (!cache.valid()) {
    throw InputError("modulate_backward: no forward cache");
  }
  require_same_shape(cache.x, upstream, "modulate_backward");
  const ModulationParams& p = cache.params;
  const bool shared = p.gamma.rows() == 1;
  const Eigen::Index prow = p.gamma.rows();
  ModulateGrads g{Matrix(upstream.rows(), upstream.cols()), Matrix::Zero(prow, upstream.cols()),
                  Matrix::Zero(prow, upstream.cols()), Matrix::Zero(prow, upstream.cols())};
  for (Eigen::Index i = 0; i < upstream.rows(); ++i) {
    const Eigen::Index pi = shared ? 0 : i;
    const auto up = upstream.row(i);
    g.x.row(i) = up.cwiseProduct(p.gamma.row(pi)).cwiseProduct(cache.yj.dx.row(i));
    g.gamma.row(pi) += up.cwiseProduct(cache.yj.values.row(i));
    g.beta.row(pi) += up;
    g.lambda.row(pi) += up.cwiseProduct(p.gamma.row(pi)).cwiseProduct(cache.yj.dlambda.row(i));
  }
  return g;
}

Modulator::Modulator(Eigen::Index psi_width, Eigen::Index hidden_width, Eigen::Index width)
    : hidden_(psi_width, hidden_width), head_(hidden_width, 3 * width), width_(width) {
  if (hidden_width <= 0 || width <= 0) {
    throw InputError("modulator: hidden width and modulated width must be positive");
  }
}

Modulator::Cache Modulator::forward(const Matrix& psi) const {
  Cache c;
  c.psi = psi;
  c.pre_hidden = linear_forward(hidden_, psi);
  c.hidden = relu_forward(c.pre_hidden);
  const Matrix head = linear_forward(head_, c.hidden);
  const Eigen::Index m = width_;
  c.params.gamma = head.leftCols(m).array() + 1.0;
  c.params.beta = head.middleCols(m, m);
  const Matrix squashed = (head.rightCols(m) / kLambdaRawBound).array().tanh().matrix();
  c.params.lambda = (kLambdaRawBound * squashed).array() + 1.0;
  c.lambda_slope = 1.0 - squashed.array().square();
  return c;
}

Matrix Modulator::backward(const Cache& cache, const Matrix& grad_gamma, const Matrix& grad_beta,
                           const Matrix& grad_lambda) {
  if (!cache.valid()) {
    throw InputError("modulator backward: no forward cache");
  }
  require_same_shape(cache.params.gamma, grad_gamma, "modulator backward (gamma)");
  require_same_shape(cache.params.beta, grad_beta, "modulator backward (beta)");
  require_same_shape(cache.params.lambda, grad_lambda, "modulator backward (lambda)");
  const Eigen::Index m = width_;
  Matrix grad_head(grad_gamma.rows(), 3 * m);
  grad_head.leftCols(m) = grad_gamma;
  grad_head.middleCols(m, m) = grad_beta;
  grad_head.rightCols(m) = grad_lambda.cwiseProduct(cache.lambda_slope);
  const Matrix grad_hidden = linear_backward(head_, cache.hidden, grad_head);
  const Matrix grad_pre = relu_backward(cache.pre_hidden, grad_hidden);
  return linear_backward(hidden_, cache.psi, grad_pre);
}

}  // namespace ttm

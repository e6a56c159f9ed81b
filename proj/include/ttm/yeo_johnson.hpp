#pragma once

// Yeo-Johnson power transform with partial derivatives in x and lambda.
//
//   x >= 0:  ((1 + x)^l - 1) / l
//   x <  0:  -((1 - x)^(2 - l) - 1) / (2 - l)
//
// Evaluated through log1p/expm1. At l == 0 (x >= 0) and l == 2 (x < 0) the
// quotient has a removable singularity; within eps of it a second-order series
// in the small exponent is used instead. lambda == 1 returns x exactly.

#include <cmath>
#include <limits>
#include <string>

#include "ttm/errors.hpp"
#include "ttm/numeric.hpp"

namespace ttm {

struct YjEpsilon {
  double eps = 1e-6;
};

template <typename Scalar>
struct YjValue {
  Scalar value;
  Scalar dx;
  Scalar dlambda;
};

namespace detail {

// expm1(a u) / a, with series u + a u^2/2 + a^2 u^3/6 for |a| < eps.
template <typename Scalar>
Scalar yj_core(Scalar a, Scalar u, Scalar eps) {
  if (std::abs(a) < eps) {
    return u + a * u * u / Scalar(2) + a * a * u * u * u / Scalar(6);
  }
  return std::expm1(a * u) / a;
}

// expm1(z) - z without cancellation for small |z|; em = expm1(z).
template <typename Scalar>
Scalar expm1_minus_x(Scalar z, Scalar em) {
  if (std::abs(z) >= Scalar(0.5)) {
    return em - z;
  }
  Scalar term = z * z / Scalar(2);
  Scalar sum = term;
  for (int k = 3; k < 30 && std::abs(term) > std::abs(sum) * std::numeric_limits<Scalar>::epsilon(); ++k) {
    term *= z / Scalar(k);
    sum += term;
  }
  return sum;
}

// d/da [expm1(a u) / a] = (e^{au}(au - 1) + 1) / a^2
//                       = (au expm1(au) - (expm1(au) - au)) / a^2
// Series u^2/2 + a u^3/3 + a^2 u^4/8 for |a| < eps.
template <typename Scalar>
Scalar yj_core_da(Scalar a, Scalar u, Scalar eps) {
  if (std::abs(a) < eps) {
    const Scalar u2 = u * u;
    return u2 / Scalar(2) + a * u2 * u / Scalar(3) + a * a * u2 * u2 / Scalar(8);
  }
  const Scalar au = a * u;
  const Scalar em = std::expm1(au);
  return (au * em - expm1_minus_x(au, em)) / (a * a);
}

template <typename Scalar>
void yj_check(Scalar x, Scalar lambda) {
  if (!std::isfinite(x) || !std::isfinite(lambda)) {
    throw InputError("yeo_johnson: non-finite input (x=" + std::to_string(static_cast<double>(x)) +
                     ", lambda=" + std::to_string(static_cast<double>(lambda)) + ")");
  }
}

}  // namespace detail

template <typename Scalar>
Scalar yj_forward(Scalar x, Scalar lambda, YjEpsilon eps = {}) {
  detail::yj_check(x, lambda);
  const auto e = static_cast<Scalar>(eps.eps);
  if (lambda == Scalar(1)) {
    return x;
  }
  if (x >= 0) {
    return detail::yj_core(lambda, std::log1p(x), e);
  }
  return -detail::yj_core(Scalar(2) - lambda, std::log1p(-x), e);
}

template <typename Scalar>
Scalar yj_dx(Scalar x, Scalar lambda, YjEpsilon = {}) {
  detail::yj_check(x, lambda);
  if (lambda == Scalar(1)) {
    return Scalar(1);
  }
  if (x >= 0) {
    return std::exp((lambda - Scalar(1)) * std::log1p(x));
  }
  return std::exp((Scalar(1) - lambda) * std::log1p(-x));
}

template <typename Scalar>
Scalar yj_dlambda(Scalar x, Scalar lambda, YjEpsilon eps = {}) {
  detail::yj_check(x, lambda);
  const auto e = static_cast<Scalar>(eps.eps);
  if (x >= 0) {
    return detail::yj_core_da(lambda, std::log1p(x), e);
  }
  // Mirror branch: -g(2 - lambda), and d(2 - lambda)/dlambda = -1.
  return detail::yj_core_da(Scalar(2) - lambda, std::log1p(-x), e);
}

/// Value and both partials in one pass (shares the log1p).
template <typename Scalar>
YjValue<Scalar> yj_eval(Scalar x, Scalar lambda, YjEpsilon eps = {}) {
  detail::yj_check(x, lambda);
  const auto e = static_cast<Scalar>(eps.eps);
  if (x >= 0) {
    const Scalar u = std::log1p(x);
    if (lambda == Scalar(1)) {
      return {x, Scalar(1), detail::yj_core_da(lambda, u, e)};
    }
    return {detail::yj_core(lambda, u, e), std::exp((lambda - Scalar(1)) * u),
            detail::yj_core_da(lambda, u, e)};
  }
  const Scalar w = std::log1p(-x);
  const Scalar mu = Scalar(2) - lambda;
  if (lambda == Scalar(1)) {
    return {x, Scalar(1), detail::yj_core_da(mu, w, e)};
  }
  return {-detail::yj_core(mu, w, e), std::exp((Scalar(1) - lambda) * w),
          detail::yj_core_da(mu, w, e)};
}

template <typename Scalar>
struct YjBatch {
  MatrixX<Scalar> values;
  MatrixX<Scalar> dx;
  MatrixX<Scalar> dlambda;
};

/// Elementwise transform. `lambda` is either a single row (one lambda per
/// column, shared by all rows) or has one row per row of x.
template <typename Scalar>
YjBatch<Scalar> yj_batch(const MatrixX<Scalar>& x, const MatrixX<Scalar>& lambda, YjEpsilon eps = {}) {
  if (lambda.cols() != x.cols() || (lambda.rows() != 1 && lambda.rows() != x.rows())) {
    throw DimensionError("yj_batch: lambda " + shape_string(lambda.rows(), lambda.cols()) +
                         " does not match x " + shape_string(x.rows(), x.cols()));
  }
  YjBatch<Scalar> out{MatrixX<Scalar>(x.rows(), x.cols()), MatrixX<Scalar>(x.rows(), x.cols()),
                      MatrixX<Scalar>(x.rows(), x.cols())};
  const bool shared = lambda.rows() == 1;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const Eigen::Index li = shared ? 0 : i;
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      const YjValue<Scalar> r = yj_eval(x(i, j), lambda(li, j), eps);
      out.values(i, j) = r.value;
      out.dx(i, j) = r.dx;
      out.dlambda(i, j) = r.dlambda;
    }
  }
  return out;
}

/// Per-column lambda given as a vector.
template <typename Scalar>
YjBatch<Scalar> yj_batch(const MatrixX<Scalar>& x, const VectorX<Scalar>& lambda, YjEpsilon eps = {}) {
  if (lambda.size() != x.cols()) {
    throw DimensionError("yj_batch: " + std::to_string(lambda.size()) + " lambdas for " +
                         std::to_string(x.cols()) + " columns");
  }
  const MatrixX<Scalar> row = lambda.transpose();
  return yj_batch(x, row, eps);
}

}  // namespace ttm

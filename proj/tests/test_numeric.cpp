#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "ttm/errors.hpp"
#include "ttm/numeric.hpp"
#include "ttm/rng.hpp"

namespace ttm {
namespace {

Matrix random_matrix(Eigen::Index r, Eigen::Index c, std::uint64_t key, double lo = -1.0, double hi = 1.0) {
  CounterRng rng(key);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(lo, hi);
  return m;
}

Linear<double> make_linear(const Matrix& w, const Matrix& b) {
  Linear<double> l(w.cols(), w.rows());
  l.weight.value = w;
  l.bias.value = b;
  return l;
}

TEST(Linear, ForwardIdentity) {
  auto l = make_linear(Matrix::Identity(2, 2), Matrix(Matrix::Zero(2, 1)));
  Matrix x(1, 2);
  x << 1, 2;
  EXPECT_EQ(linear_forward(l, x), x);
}

TEST(Linear, ForwardWithBias) {
  Matrix b(2, 1);
  b << 0.5, -0.5;
  auto l = make_linear(Matrix::Identity(2, 2), b);
  Matrix x(1, 2);
  x << 1, 2;
  const Matrix y = linear_forward(l, x);
  EXPECT_DOUBLE_EQ(y(0, 0), 1.5);
  EXPECT_DOUBLE_EQ(y(0, 1), 1.5);
}

TEST(Linear, ForwardRowVector) {
  Matrix w(1, 2);
  w << 2, 3;
  auto l = make_linear(w, Matrix(Matrix::Ones(1, 1)));
  const Matrix y = linear_forward(l, Matrix(Matrix::Ones(1, 2)));
  EXPECT_DOUBLE_EQ(y(0, 0), 6.0);
}

TEST(Linear, ForwardShapeMismatchThrows) {
  Linear<double> l(3, 2);
  EXPECT_THROW(linear_forward(l, Matrix(Matrix::Zero(1, 2))), DimensionError);
}

TEST(Linear, BackwardZeroUpstream) {
  auto l = make_linear(random_matrix(4, 3, 1), random_matrix(4, 1, 2));
  const Matrix dx = linear_backward(l, random_matrix(2, 3, 3), Matrix(Matrix::Zero(2, 4)));
  EXPECT_TRUE(dx.isZero(0));
  EXPECT_TRUE(l.weight.grad.isZero(0));
  EXPECT_TRUE(l.bias.grad.isZero(0));
}

TEST(Linear, BackwardIdentityPassesUpstream) {
  auto l = make_linear(Matrix::Identity(3, 3), Matrix(Matrix::Zero(3, 1)));
  const Matrix g = random_matrix(2, 3, 4);
  EXPECT_EQ(linear_backward(l, random_matrix(2, 3, 5), g), g);
}

TEST(Linear, BackwardMatchesFiniteDifferences) {
  auto l = make_linear(random_matrix(4, 3, 6), random_matrix(4, 1, 7));
  Matrix x = random_matrix(2, 3, 8);
  const Matrix probe = random_matrix(2, 4, 9);
  const auto loss = [&] { return (linear_forward(l, x).array() * probe.array()).sum(); };
  l.zero_grad();
  const Matrix dx = linear_backward(l, x, probe);
  std::vector<Parameter<double>*> params{&l.weight, &l.bias};
  const auto report = finite_diff_check<double>(loss, params, 1e-5, 1e-6);
  EXPECT_TRUE(report.passed) << report.max_rel_error;

  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double saved = x.data()[i];
    x.data()[i] = saved + 1e-5;
    const double plus = loss();
    x.data()[i] = saved - 1e-5;
    const double minus = loss();
    x.data()[i] = saved;
    EXPECT_LT(gradient_rel_error(dx.data()[i], (plus - minus) / 2e-5), 1e-6);
  }
}

TEST(Linear, BackwardAccumulates) {
  auto l = make_linear(random_matrix(4, 3, 10), random_matrix(4, 1, 11));
  const Matrix x1 = random_matrix(2, 3, 12), g1 = random_matrix(2, 4, 13);
  const Matrix x2 = random_matrix(5, 3, 14), g2 = random_matrix(5, 4, 15);
  linear_backward(l, x1, g1);
  const Matrix w1 = l.weight.grad, b1 = l.bias.grad;
  l.zero_grad();
  linear_backward(l, x2, g2);
  const Matrix w2 = l.weight.grad, b2 = l.bias.grad;
  l.zero_grad();
  linear_backward(l, x1, g1);
  linear_backward(l, x2, g2);
  EXPECT_EQ(l.weight.grad, Matrix(w1 + w2));
  EXPECT_EQ(l.bias.grad, Matrix(b1 + b2));
  l.zero_grad();
  EXPECT_TRUE(l.weight.grad.isZero(0));
}

TEST(Relu, ForwardSignCases) {
  Matrix x(1, 3);
  x << -1, 0, 2;
  Matrix expected(1, 3);
  expected << 0, 0, 2;
  EXPECT_EQ(relu_forward(x), expected);
}

TEST(Relu, BackwardZeroAtKink) {
  Matrix x(1, 3);
  x << -1, 0, 2;
  const Matrix g = relu_backward(x, Matrix(Matrix::Ones(1, 3)));
  EXPECT_EQ(g(0, 0), 0.0);
  EXPECT_EQ(g(0, 1), 0.0);
  EXPECT_EQ(g(0, 2), 1.0);
}

TEST(Relu, BackwardMatchesFiniteDifferences) {
  Matrix x = random_matrix(3, 4, 16);
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (std::abs(x.data()[i]) < 0.01) x.data()[i] = 0.5;
  }
  const Matrix probe = random_matrix(3, 4, 17);
  const Matrix dx = relu_backward(x, probe);
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Matrix xp = x, xm = x;
    xp.data()[i] += 1e-5;
    xm.data()[i] -= 1e-5;
    const double num =
        ((relu_forward(xp).array() * probe.array()).sum() - (relu_forward(xm).array() * probe.array()).sum()) / 2e-5;
    EXPECT_LT(gradient_rel_error(dx.data()[i], num), 1e-6);
  }
}

TEST(Bce, ZeroLogitPositiveLabel) {
  const auto r = bce_with_logits(Matrix(Matrix::Zero(1, 1)), Matrix(Matrix::Ones(1, 1)));
  EXPECT_NEAR(r.loss, std::log(2.0), 1e-15);
  EXPECT_DOUBLE_EQ(r.grad(0, 0), -0.5);
}

TEST(Bce, SaturatedLogitNoOverflow) {
  const auto r = bce_with_logits(Matrix(Matrix::Constant(1, 1, 50.0)), Matrix(Matrix::Ones(1, 1)));
  EXPECT_TRUE(std::isfinite(r.loss));
  EXPECT_LT(r.loss, 1e-20);
  const auto r2 = bce_with_logits(Matrix(Matrix::Constant(1, 1, -800.0)), Matrix(Matrix::Ones(1, 1)));
  EXPECT_NEAR(r2.loss, 800.0, 1e-9);
}

TEST(Bce, GradientMatchesFiniteDifferences) {
  Matrix z(2, 1);
  z << 0.3, -1.7;
  Matrix y(2, 1);
  y << 1, 0;
  const auto r = bce_with_logits(z, y);
  for (Eigen::Index i = 0; i < 2; ++i) {
    Matrix zp = z, zm = z;
    zp(i, 0) += 1e-5;
    zm(i, 0) -= 1e-5;
    const double num = (bce_with_logits(zp, y).loss - bce_with_logits(zm, y).loss) / 2e-5;
    EXPECT_LT(gradient_rel_error(r.grad(i, 0), num), 1e-8);
  }
}

TEST(Bce, NonBinaryLabelThrows) {
  EXPECT_THROW(bce_with_logits(Matrix(Matrix::Zero(1, 1)), Matrix(Matrix::Constant(1, 1, 0.5))), InputError);
}

TEST(Mse, PerfectPrediction) {
  const Matrix p = random_matrix(3, 1, 18);
  const auto r = mse_loss(p, p);
  EXPECT_EQ(r.loss, 0.0);
  EXPECT_TRUE(r.grad.isZero(0));
}

TEST(Mse, HandExample) {
  const auto r = mse_loss(Matrix(Matrix::Constant(1, 1, 2.0)), Matrix(Matrix::Zero(1, 1)));
  EXPECT_DOUBLE_EQ(r.loss, 4.0);
  EXPECT_DOUBLE_EQ(r.grad(0, 0), 4.0);
}

TEST(Mse, GradientMatchesFiniteDifferences) {
  const Matrix p = random_matrix(3, 1, 19), t = random_matrix(3, 1, 20);
  const auto r = mse_loss(p, t);
  for (Eigen::Index i = 0; i < 3; ++i) {
    Matrix pp = p, pm = p;
    pp(i, 0) += 1e-5;
    pm(i, 0) -= 1e-5;
    const double num = (mse_loss(pp, t).loss - mse_loss(pm, t).loss) / 2e-5;
    EXPECT_LT(gradient_rel_error(r.grad(i, 0), num), 1e-8);
  }
}

TEST(Mse, ShapeMismatchThrows) {
  EXPECT_THROW(mse_loss(Matrix(Matrix::Zero(2, 1)), Matrix(Matrix::Zero(3, 1))), DimensionError);
}

// Independent scalar AdamW recursion.
double adamw_oracle(double theta, const std::vector<double>& grads, const AdamWConfig& c) {
  double m = 0, v = 0;
  for (std::size_t k = 1; k <= grads.size(); ++k) {
    const double g = grads[k - 1];
    theta -= c.lr * c.weight_decay * theta;
    m = c.beta1 * m + (1 - c.beta1) * g;
    v = c.beta2 * v + (1 - c.beta2) * g * g;
    const double mh = m / (1 - std::pow(c.beta1, double(k)));
    const double vh = v / (1 - std::pow(c.beta2, double(k)));
    theta -= c.lr * mh / (std::sqrt(vh) + c.eps);
  }
  return theta;
}

double one_step(double theta, double g, double lr, double wd) {
  Parameter<double> p(Matrix(Matrix::Constant(1, 1, theta)));
  p.grad(0, 0) = g;
  AdamWState<double> s(p);
  AdamWConfig c;
  c.lr = lr;
  c.weight_decay = wd;
  adamw_step(p, s, c);
  EXPECT_EQ(s.step, 1);
  return p.value(0, 0);
}

TEST(AdamW, FirstStepHandExample) {
  EXPECT_NEAR(one_step(1.0, 1.0, 0.1, 0.0), 0.9, 1e-9);
}

TEST(AdamW, DecoupledWeightDecayHandExample) {
  // 1 - 0.1*0.01*1 - 0.1 * 1/(1+1e-8)
  const double v = one_step(1.0, 1.0, 0.1, 0.01);
  EXPECT_NEAR(v, 0.899, 1e-9);
  EXPECT_NEAR(v, 0.999 - 0.1 / (1 + 1e-8), 1e-15);
}

TEST(AdamW, ZeroGradientNoDecayIsNoOp) {
  EXPECT_EQ(one_step(1.0, 0.0, 0.1, 0.0), 1.0);
}

TEST(AdamW, MatchesScalarRecursionOverManySteps) {
  AdamWConfig c;
  c.lr = 0.01;
  c.weight_decay = 0.05;
  std::vector<double> grads;
  CounterRng rng(21);
  for (int i = 0; i < 50; ++i) grads.push_back(rng.uniform(-2, 2));
  Parameter<double> p(Matrix(Matrix::Constant(1, 1, 0.7)));
  AdamWState<double> s(p);
  for (double g : grads) {
    p.grad(0, 0) = g;
    adamw_step(p, s, c);
  }
  EXPECT_NEAR(p.value(0, 0), adamw_oracle(0.7, grads, c), 1e-14);
}

TEST(AdamW, ConfigValidation) {
  AdamWConfig c;
  c.lr = 0;
  EXPECT_THROW(c.validate(), InputError);
  c = {};
  c.beta2 = 1.0;
  EXPECT_THROW(c.validate(), InputError);
  c = {};
  c.weight_decay = -1;
  EXPECT_THROW(c.validate(), InputError);
}

TEST(GradCheck, QuadraticExact) {
  Parameter<double> p(random_matrix(3, 2, 22));
  const auto loss = [&] { return 0.5 * p.value.squaredNorm(); };
  p.grad = p.value;
  std::vector<Parameter<double>*> params{&p};
  const auto report = finite_diff_check<double>(loss, params, 1e-5, 1e-9);
  EXPECT_TRUE(report.passed) << report.max_rel_error;
  EXPECT_EQ(report.checked, 6u);
}

TEST(GradCheck, ConstantLoss) {
  Parameter<double> p(random_matrix(2, 2, 23));
  const auto loss = [] { return 3.0; };
  std::vector<Parameter<double>*> params{&p};
  const auto report = finite_diff_check<double>(loss, params);
  EXPECT_EQ(report.max_rel_error, 0.0);
}

TEST(GradCheck, DetectsWrongGradient) {
  Parameter<double> p(Matrix(Matrix::Constant(1, 1, 2.0)));
  const auto loss = [&] { return p.value(0, 0) * p.value(0, 0); };
  p.grad(0, 0) = 1.0;
  std::vector<Parameter<double>*> params{&p};
  EXPECT_FALSE(finite_diff_check<double>(loss, params).passed);
}

TEST(MatrixFrom, RejectsNonFinite) {
  const std::vector<double> d{1.0, std::nan("")};
  EXPECT_THROW(matrix_from<double>(1, 2, d), InputError);
  const std::vector<double> ok{1, 2, 3, 4, 5, 6};
  const Matrix m = matrix_from<double>(2, 3, ok);
  EXPECT_EQ(m(1, 0), 4.0);
  EXPECT_THROW(matrix_from<double>(2, 2, ok), DimensionError);
}

TEST(NumericCore, FloatInstantiation) {
  Linear<float> l(2, 1);
  l.weight.value << 1.0f, 2.0f;
  MatrixX<float> x(1, 2);
  x << 3.0f, 4.0f;
  EXPECT_FLOAT_EQ(linear_forward(l, x)(0, 0), 11.0f);
}

TEST(Rng, CounterStreamsAreReproducible) {
  CounterRng a(derive_seed(7, "shuffle", 3)), b(derive_seed(7, "shuffle", 3)), c(derive_seed(7, "shuffle", 4));
  for (int i = 0; i < 10; ++i) {
    const auto va = a.next_u64();
    EXPECT_EQ(va, b.next_u64());
    EXPECT_NE(va, c.next_u64());
  }
  CounterRng u(1);
  double mean = 0;
  for (int i = 0; i < 20000; ++i) {
    const double x = u.uniform();
    ASSERT_GE(x, 0.0);
    ASSERT_LT(x, 1.0);
    mean += x / 20000;
  }
  EXPECT_NEAR(mean, 0.5, 0.01);
  for (int i = 0; i < 1000; ++i) ASSERT_LT(u.index(7), 7u);
}

TEST(Rng, NormalMoments) {
  CounterRng r(5);
  double s = 0, s2 = 0;
  const int n = 50000;
  for (int i = 0; i < n / 2; ++i) {
    const auto [a, b] = r.normal_pair();
    s += a + b;
    s2 += a * a + b * b;
  }
  EXPECT_NEAR(s / n, 0.0, 0.02);
  EXPECT_NEAR(s2 / n, 1.0, 0.03);
}

}  // namespace
}  // namespace ttm

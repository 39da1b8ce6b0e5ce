#include "acdiff/errors.hpp"
#include "acdiff/numerics.hpp"
#include "acdiff/rng.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

using namespace acdiff;

namespace {

Matrix mat(std::initializer_list<std::initializer_list<double>> rows) {
  Matrix m(static_cast<Index>(rows.size()), static_cast<Index>(rows.begin()->size()));
  Index i = 0;
  for (const auto& r : rows) {
    Index j = 0;
    for (double v : r) m(i, j++) = v;
    ++i;
  }
  return m;
}

Tensor random_tensor(Index r, Index c, Rng& rng, double scale = 1.0) {
  Matrix m(r, c);
  for (Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
  return Tensor(m, true);
}

}  // namespace

TEST(Numerics, MatmulHandValues) {
  Tape tape;
  Var c = matmul(tape.constant(mat({{1, 2}, {3, 4}})), tape.constant(mat({{1}, {1}})));
  EXPECT_EQ(c.value(), mat({{3}, {7}}));
}

TEST(Numerics, SigmoidOfZero) {
  Tape tape;
  EXPECT_EQ(sigmoid(tape.constant(0.0)).item(), 0.5);
}

TEST(Numerics, PerfectPredictionLossIsZero) {
  Tape tape;
  Var a = tape.constant(mat({{1, 2, 3}}));
  Var b = tape.constant(mat({{1, 2, 3}}));
  EXPECT_EQ(mean(square(a - b)).item(), 0.0);
}

TEST(Numerics, ShapeMismatchNamesBothShapes) {
  Tape tape;
  Var a = tape.constant(Matrix::Zero(2, 3));
  Var b = tape.constant(Matrix::Zero(3, 2));
  try {
    add(a, b);
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("2x3"), std::string::npos) << msg;
    EXPECT_NE(msg.find("3x2"), std::string::npos) << msg;
  }
  EXPECT_THROW(matmul(a, a), DimensionError);
  EXPECT_THROW(concat(a, b), DimensionError);
  EXPECT_THROW(add_bias(a, tape.constant(Matrix::Zero(1, 2))), DimensionError);
}

TEST(Numerics, NonFiniteInputIsNumericError) {
  Tape tape;
  Matrix bad = Matrix::Zero(1, 2);
  bad(0, 1) = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(tape.constant(bad), NumericError);
  Tensor inf(Matrix::Constant(1, 1, std::numeric_limits<double>::infinity()), true);
  EXPECT_THROW(tape.param(inf), NumericError);
  EXPECT_THROW(sqrt(tape.constant(-1.0)), NumericError);
}

TEST(Numerics, BackwardOfMeanSquare) {
  Tensor w(mat({{3}}), true);
  Tape tape;
  tape.backward(mean(square(tape.param(w))));
  EXPECT_EQ(w.grad()(0, 0), 6.0);
}

TEST(Numerics, SigmoidDerivativeAtZero) {
  Tensor x(mat({{0}}), true);
  Tape tape;
  tape.backward(sigmoid(tape.param(x)));
  EXPECT_EQ(x.grad()(0, 0), 0.25);
}

TEST(Numerics, RepeatedBackwardAccumulates) {
  Tensor w(mat({{1.5, -2}}), true);
  Tape tape;
  Var loss = sum(square(tape.param(w)));
  tape.backward(loss);
  const Matrix once = w.grad();
  tape.backward(loss);
  EXPECT_EQ(w.grad(), 2.0 * once);
  w.zero_grad();
  EXPECT_EQ(w.grad(), Matrix::Zero(1, 2));
}

TEST(Numerics, BackwardRequiresScalarAttachedLoss) {
  Tensor w(mat({{1, 2}}), true);
  Tape tape;
  Var v = square(tape.param(w));
  EXPECT_THROW(tape.backward(v), ContractError);
  Var detached = sum(tape.constant(mat({{1, 2}})));
  EXPECT_THROW(tape.backward(detached), ContractError);
}

TEST(Numerics, FrozenParamsReceiveNoGradient) {
  Tensor w(mat({{1, 2}}), true);
  const Tensor& frozen = w;
  Tensor x(mat({{0.5, 0.25}}), true);
  Tape tape;
  tape.backward(sum(mul(tape.param(frozen), tape.param(x))));
  EXPECT_FALSE(w.has_grad());
  EXPECT_EQ(x.grad(), mat({{1, 2}}));
}

TEST(Numerics, MatmulWithIdentityIsExact) {
  Rng rng(3);
  Tensor a = random_tensor(4, 5, rng);
  Tape tape;
  Var r = matmul(tape.param(a), tape.constant(Matrix::Identity(5, 5)));
  EXPECT_EQ(r.value(), a.value());
}

TEST(Numerics, ForwardIsBitwiseDeterministic) {
  Rng rng(11);
  Tensor a = random_tensor(3, 4, rng), b = random_tensor(4, 2, rng);
  auto run = [&] {
    Tape tape;
    return mean(square(silu(matmul(tape.param(a), tape.param(b))))).item();
  };
  EXPECT_EQ(run(), run());
}

TEST(GradCheck, SumOfSquares) {
  Rng rng(5);
  Tensor p = random_tensor(3, 3, rng);
  Tensor* params[] = {&p};
  const double err = grad_check([&](Tape& t) { return sum(square(t.param(p))); }, params);
  EXPECT_LT(err, 1e-6);
}

TEST(GradCheck, ConstantFunctionHasZeroError) {
  Rng rng(5);
  Tensor p = random_tensor(2, 2, rng);
  Tensor* params[] = {&p};
  EXPECT_EQ(grad_check([&](Tape& t) { return t.constant(4.0); }, params), 0.0);
}

TEST(GradCheck, RejectsNonDeterministicFunction) {
  Rng rng(5);
  Tensor p = random_tensor(2, 2, rng);
  Tensor* params[] = {&p};
  Rng noise(9);
  auto f = [&](Tape& t) { return add(sum(t.param(p)), t.constant(noise.normal())); };
  EXPECT_THROW(grad_check(f, params), ContractError);
}

TEST(GradCheck, RejectsStepOutsideRange) {
  Tensor p(mat({{1}}), true);
  Tensor* params[] = {&p};
  auto f = [&](Tape& t) { return sum(t.param(p)); };
  EXPECT_THROW(grad_check(f, params, 1e-9), ContractError);
  EXPECT_THROW(grad_check(f, params, 1e-2), ContractError);
}

// Every differentiable op, 100 random trials each.
TEST(GradCheck, EveryOpOverRandomTrials) {
  Rng rng(2024);
  const std::vector<int> picks = {0, 2, 1};
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    Tensor a = random_tensor(3, 4, rng), b = random_tensor(3, 4, rng);
    Tensor w = random_tensor(4, 2, rng), bias = random_tensor(1, 4, rng);
    Tensor s = random_tensor(3, 1, rng);
    Tensor pos(random_tensor(3, 4, rng).value().array().abs() + 0.5, true);
    Tensor table = random_tensor(4, 4, rng);
    Tensor* params[] = {&a, &b, &w, &bias, &s, &pos, &table};
    auto f = [&](Tape& t) {
      Var va = t.param(a), vb = t.param(b);
      Var e = add(va, vb) - mul(va, vb);
      e = add_bias(e, t.param(bias)) + sigmoid(va) + silu(vb) + sqrt(t.param(pos));
      e = scale_rows(e, t.param(s)) + gather_rows(t.param(table), picks);
      Var m = matmul(affine(scale(e, 0.7), 0.5, -0.1), t.param(w));
      Var c = concat(m, square(m));
      const Matrix v = c.value().array().tanh();
      const Matrix d = 1.0 - v.array().square();
      return add(mean(map(c, v, d)), sum(square(va)));
    };
    worst = std::max(worst, grad_check(f, params));
  }
  EXPECT_LT(worst, 1e-4);
}

TEST(Tensor, GradHasValueShape) {
  Tensor t = Tensor::zeros(2, 3, true);
  t.accumulate_grad(Matrix::Ones(2, 3));
  EXPECT_EQ(t.grad().rows(), 2);
  EXPECT_EQ(t.grad().cols(), 3);
  EXPECT_THROW(t.accumulate_grad(Matrix::Ones(3, 2)), DimensionError);
  EXPECT_EQ(t.shape(), (std::vector<Index>{2, 3}));
}

// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <random>

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include "taylorgan/ops.hpp"
#include "taylorgan/optim.hpp"
#include "taylorgan/spectral_norm.hpp"
#include "taylorgan/verification.hpp"

using namespace taylorgan;

namespace {

Tensor random_tensor(Shape shape, std::mt19937_64 &rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> d(0.0, scale);
  for (auto &x : t.storage())
    x = d(rng);
  return t;
}

} // namespace

TEST(Tensor, ShapeAndScalar) {
  EXPECT_EQ(shape_size({}), 1u);
  EXPECT_EQ(shape_size({2, 3, 4}), 24u);
  Tensor s = Tensor::scalar(2.5);
  EXPECT_EQ(s.rank(), 0u);
  EXPECT_DOUBLE_EQ(s.item(), 2.5);
  EXPECT_THROW(Tensor(Shape{2, 2}, std::vector<double>{1, 2, 3}), ShapeError);
  EXPECT_THROW(Tensor(Shape{2}).item(), ShapeError);
}

TEST(Autodiff, ConstantOnlyGraphHasNoGradients) {
  Graph g;
  Var c = g.constant(Tensor(Shape{3}, 1.0));
  Var y = ops::sum(ops::scale(c, 2.0));
  EXPECT_DOUBLE_EQ(y.value().item(), 6.0);
  GradientMap grads = g.backward(y);
  EXPECT_TRUE(grads.params().empty());
}

TEST(Autodiff, SigmoidAtZero) {
  Graph g;
  Var x = g.leaf(Tensor::scalar(0.0));
  Var y = ops::sigmoid(x);
  EXPECT_DOUBLE_EQ(y.value().item(), 0.5);
  const Var taps[] = {x};
  GradientMap grads = g.backward(y, taps);
  EXPECT_DOUBLE_EQ(grads.tap(x).item(), 0.25);
}

TEST(Autodiff, EluNegativeBranch) {
  Graph g;
  Var x = g.leaf(Tensor::scalar(-1.0));
  Var y = ops::elu(x);
  EXPECT_NEAR(y.value().item(), std::exp(-1.0) - 1.0, 1e-15);
  const Var taps[] = {x};
  EXPECT_NEAR(g.backward(y, taps).tap(x).item(), std::exp(-1.0), 1e-15);
}

TEST(Autodiff, SquareGradient) {
  Parameter p{"x", Tensor::scalar(3.0)};
  Graph g;
  Var x = g.param(p);
  Var y = ops::mul(x, x);
  EXPECT_DOUBLE_EQ(g.backward(y).param(p).item(), 6.0);
}

TEST(Autodiff, RepeatedParameterAccumulates) {
  Parameter p{"w", Tensor(Shape{2}, 1.0)};
  Graph g;
  Var y = ops::add(ops::sum(g.param(p)), ops::sum(ops::scale(g.param(p), 3.0)));
  Tensor grad = g.backward(y).param(p);
  EXPECT_DOUBLE_EQ(grad[0], 4.0);
  EXPECT_DOUBLE_EQ(grad[1], 4.0);
}

TEST(Autodiff, TapOnIntermediateNode) {
  Graph g;
  Var x = g.leaf(Tensor(Shape{3}, std::vector<double>{1, 2, 3}));
  Var h = ops::scale(x, 2.0);
  Var y = ops::sum(ops::mul(h, h));
  const Var taps[] = {h};
  const GradientMap grads = g.backward(y, taps);
  const Tensor &gh = grads.tap(h);
  for (std::size_t i = 0; i < 3; ++i)
    EXPECT_DOUBLE_EQ(gh[i], 2.0 * h.value()[i]);
}

TEST(Autodiff, BackwardIsLinearInTheOutput) {
  std::mt19937_64 rng(3);
  const Tensor a = random_tensor({4, 3}, rng);
  Parameter p{"w", random_tensor({3, 2}, rng)};
  auto grad_of = [&](double c1, double c2) {
    Graph g;
    Var x = g.constant(a);
    Var h = ops::matmul(x, g.param(p));
    Var f1 = ops::sum(ops::tanh(h));
    Var f2 = ops::sum(ops::mul(h, h));
    return g.backward(ops::add(ops::scale(f1, c1), ops::scale(f2, c2))).param(p);
  };
  const Tensor g1 = grad_of(1, 0), g2 = grad_of(0, 1), g12 = grad_of(2, -3);
  for (std::size_t i = 0; i < g12.size(); ++i)
    EXPECT_NEAR(g12[i], 2 * g1[i] - 3 * g2[i], 1e-12);
}

TEST(Autodiff, StopGradientBlocksFlow) {
  Parameter p{"x", Tensor::scalar(1.5)};
  Graph g;
  Var x = g.param(p);
  Var y = ops::mul(ops::stop_gradient(x), x);
  EXPECT_DOUBLE_EQ(g.backward(y).param(p).item(), 1.5);
}

TEST(Autodiff, DisabledModeRecordsNoGradients) {
  Parameter p{"x", Tensor::scalar(2.0)};
  Graph g(GradMode::kDisabled);
  Var y = ops::mul(g.param(p), g.param(p));
  EXPECT_DOUBLE_EQ(y.value().item(), 4.0);
  EXPECT_FALSE(g.requires_grad(y.id()));
}

TEST(Autodiff, ErrorsAreReported) {
  Graph g;
  Var v = g.leaf(Tensor(Shape{2}, 1.0));
  EXPECT_THROW(g.backward(v), ShapeError);
  Var m = g.leaf(Tensor(Shape{2, 3}, 1.0));
  EXPECT_THROW(ops::matmul(m, m), ShapeError);
  EXPECT_THROW(ops::add(v, m), ShapeError);
  Var z = g.leaf(Tensor::scalar(0.0));
  EXPECT_THROW(ops::log(z), NumericError);
}

TEST(Ops, SoftmaxRowsSumToOneAndFlattenWithTemperature) {
  std::mt19937_64 rng(5);
  Graph g;
  Var x = g.constant(random_tensor({4, 7}, rng, 3.0));
  for (double tau : {0.3, 1.0, 1e12}) {
    const Tensor p = ops::softmax(x, tau).value();
    for (std::size_t r = 0; r < 4; ++r) {
      double s = 0;
      for (std::size_t c = 0; c < 7; ++c)
        s += p.at(r, c);
      EXPECT_NEAR(s, 1.0, 1e-12);
      if (tau > 1e6) {
        for (std::size_t c = 0; c < 7; ++c)
          EXPECT_NEAR(p.at(r, c), 1.0 / 7.0, 1e-9);
      }
    }
  }
}

TEST(Ops, SoftmaxMaskGivesExactZeros) {
  Graph g;
  Var x = g.constant(Tensor(Shape{1, 3}, std::vector<double>{1, 2, 3}));
  TokenMask mask = {true, false, true};
  const Tensor p = ops::softmax(x, 1.0, &mask).value();
  EXPECT_EQ(p[1], 0.0);
  EXPECT_NEAR(p[0] + p[2], 1.0, 1e-15);
}

TEST(Ops, LogSigmoidIsStableAtLargeMagnitude) {
  Graph g;
  Var x = g.constant(Tensor(Shape{2}, std::vector<double>{-800.0, 800.0}));
  const Tensor y = ops::log_sigmoid(x).value();
  EXPECT_NEAR(y[0], -800.0, 1e-9);
  EXPECT_NEAR(y[1], 0.0, 1e-12);
}

TEST(Ops, ConvAllOnesCountsTaps) {
  // width 3, one channel: interior outputs see 3 inputs, edges see 2
  Graph g;
  Var x = g.constant(Tensor(Shape{1, 5, 1}, 1.0));
  Var k = g.constant(Tensor(Shape{1, 3}, 1.0));
  Var b = g.constant(Tensor(Shape{1}, 0.0));
  const Tensor y = ops::conv1d_same(x, k, b, 3).value();
  const double expected[] = {2, 3, 3, 3, 2};
  for (std::size_t t = 0; t < 5; ++t)
    EXPECT_DOUBLE_EQ(y[t], expected[t]);
}

TEST(Ops, MeanPoolUsesValidLengthOnly) {
  Graph g;
  Var x = g.constant(Tensor(Shape{1, 4, 1}, std::vector<double>{1, 2, 3, 100}));
  const std::size_t len[] = {3};
  const Tensor y = ops::mean_pool(x, len).value();
  EXPECT_DOUBLE_EQ(y[0], 1.5);
  EXPECT_DOUBLE_EQ(y[1], 3.0);
}

TEST(Ops, MaskStepsZeroesPadding) {
  Graph g;
  Var x = g.constant(Tensor(Shape{2, 3, 1}, 1.0));
  const std::size_t len[] = {1, 3};
  const Tensor y = ops::mask_steps(x, len).value();
  const double expected[] = {1, 0, 0, 1, 1, 1};
  for (std::size_t i = 0; i < 6; ++i)
    EXPECT_DOUBLE_EQ(y[i], expected[i]);
}

TEST(Ops, GruCellMatchesFiniteDifferences) {
  std::mt19937_64 rng(11);
  std::vector<Tensor> in;
  in.push_back(random_tensor({2, 3}, rng));
  in.push_back(random_tensor({2, 4}, rng));
  for (int i = 0; i < 3; ++i) {
    in.push_back(random_tensor({3, 4}, rng, 0.5));
    in.push_back(random_tensor({4, 4}, rng, 0.5));
    in.push_back(random_tensor({4}, rng, 0.5));
  }
  const FdErrors e = finite_difference_inputs(
      [](Graph &, std::span<const Var> v) {
        ops::GruWeights w{v[2], v[3], v[4], v[5], v[6], v[7], v[8], v[9], v[10]};
        Var h = ops::gru_cell(v[0], v[1], w);
        return ops::sum(ops::mul(h, h));
      },
      in);
  EXPECT_LT(e.max_rel, kFiniteDifferenceTol);
}

TEST(Ops, SoftmaxMatchesFiniteDifferences) {
  std::mt19937_64 rng(12);
  const Tensor w = random_tensor({3, 5}, rng);
  const FdErrors e = finite_difference_inputs(
      [&](Graph &g, std::span<const Var> v) {
        return ops::sum(ops::mul(ops::softmax(v[0], 0.7), g.constant(w)));
      },
      {random_tensor({3, 5}, rng)});
  EXPECT_LT(e.max_rel, 1e-6);
}

TEST(SpectralNorm, DiagonalMatrix) {
  PowerIterState s;
  s.init(2, 2, 1);
  const Tensor w(Shape{2, 2}, std::vector<double>{3, 0, 0, 1});
  EXPECT_NEAR(spectral_norm_value(w, s, 50), 3.0, 1e-9);
}

TEST(SpectralNorm, IdentityIsOneAndVectorsAreUnit) {
  PowerIterState s;
  s.init(4, 4, 2);
  Tensor w(Shape{4, 4}, 0.0);
  for (std::size_t i = 0; i < 4; ++i)
    w.at(i, i) = 1.0;
  EXPECT_NEAR(spectral_norm_value(w, s, 1), 1.0, 1e-12);
  EXPECT_NEAR(s.u.squared_norm(), 1.0, 1e-12);
  EXPECT_NEAR(s.v.squared_norm(), 1.0, 1e-12);
}

TEST(SpectralNorm, MatchesSvdAndIncreasesMonotonically) {
  std::mt19937_64 rng(7);
  const Tensor w = random_tensor({8, 6}, rng);
  Eigen::Map<const Eigen::Matrix<double, -1, -1, Eigen::RowMajor>> m(w.storage().data(), 8, 6);
  const double sigma = Eigen::JacobiSVD<Eigen::MatrixXd>(m).singularValues()(0);
  PowerIterState s;
  s.init(8, 6, 3);
  double prev = 0.0;
  for (int i = 0; i < 50; ++i) {
    const double cur = spectral_norm_value(w, s, 1);
    EXPECT_GE(cur, prev - 1e-12);
    prev = cur;
  }
  EXPECT_LT(std::abs(prev - sigma) / sigma, 1e-3);
}

TEST(SpectralNorm, ZeroMatrixHasZeroSigmaAndGradient) {
  Parameter p{"w", Tensor(Shape{3, 2}, 0.0)};
  PowerIterState s;
  Graph g;
  Var sigma = spectral_norm(g.param(p), s, 5);
  EXPECT_EQ(sigma.value().item(), 0.0);
  EXPECT_EQ(g.backward(sigma).param(p).max_abs(), 0.0);
}

TEST(SpectralNorm, GradientIsOuterProduct) {
  std::mt19937_64 rng(9);
  Parameter p{"w", random_tensor({3, 4}, rng)};
  PowerIterState s;
  s.init(3, 4, 4);
  Graph g;
  Var sigma = spectral_norm(g.param(p), s, 200);
  const Tensor grad = g.backward(sigma).param(p);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 4; ++j)
      EXPECT_NEAR(grad.at(i, j), s.u[i] * s.v[j], 1e-12);
}

TEST(Optim, AdamFirstStepMovesByLearningRate) {
  Parameter p{"w", Tensor(Shape{2}, std::vector<double>{1.0, -1.0})};
  AdamConfig cfg;
  cfg.learning_rate = 0.01;
  cfg.clip_norm = 0.0;
  Adam adam(cfg, {&p});
  adam.step({Tensor(Shape{2}, std::vector<double>{0.5, -2.0})});
  // bias-corrected first step is lr * g / (|g| + eps)
  EXPECT_NEAR(p.value[0], 1.0 - 0.01 * 0.5 / (0.5 + 1e-8), 1e-12);
  EXPECT_NEAR(p.value[1], -1.0 + 0.01 * 2.0 / (2.0 + 1e-8), 1e-12);
}

TEST(Optim, ClippingCapsGlobalNorm) {
  std::vector<Tensor> grads = {Tensor(Shape{2}, std::vector<double>{30, 0}),
                               Tensor(Shape{1}, std::vector<double>{40})};
  EXPECT_DOUBLE_EQ(clip_by_global_norm(grads, 10.0), 50.0);
  EXPECT_NEAR(global_norm(grads), 10.0, 1e-12);
  std::vector<Tensor> small = {Tensor(Shape{1}, std::vector<double>{3})};
  clip_by_global_norm(small, 10.0);
  EXPECT_DOUBLE_EQ(small[0][0], 3.0);
}

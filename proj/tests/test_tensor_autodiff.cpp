#include <gtest/gtest.h>

#include <cmath>

#include "eblab/autodiff.hpp"
#include "eblab/rng.hpp"

using namespace eblab;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

double check(const ScalarFunction& f, std::vector<Tensor> params, double kink_tol = 0.0) {
  GradCheckOptions opt;
  opt.kink_tol = kink_tol;
  const auto r = grad_check(f, std::move(params), opt);
  EXPECT_GT(r.checked, 0u);
  return r.max_rel_error;
}

/// Weighted sum so every output entry gets a distinct upstream gradient.
Var probe(Var y) {
  Tensor w(y.value().shape());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = 0.3 + 0.1 * static_cast<double>(i % 7);
  return sum(mul(y, y.graph()->constant(w)));
}

}  // namespace

TEST(Tensor, ShapesAndAccess) {
  Tensor t = Tensor::matrix({{1, 2, 3}, {4, 5, 6}});
  EXPECT_EQ(t.rows(), 2u);
  EXPECT_EQ(t.cols(), 3u);
  EXPECT_EQ(t.at(1, 2), 6.0);
  EXPECT_EQ(t.row(1)[0], 4.0);
  EXPECT_THROW(Tensor({0, 3}), ShapeError);
  EXPECT_THROW(t.reshaped({4}), ShapeError);
  EXPECT_EQ(t.reshaped({3, 2}).at(2, 1), 6.0);
  EXPECT_EQ(slice_rows(t, 1, 1).at(0, 0), 4.0);
}

TEST(Tensor, FiniteCheck) {
  Tensor t = Tensor::vector({1.0, NAN});
  EXPECT_FALSE(t.all_finite());
  EXPECT_THROW(require_finite(t, "test"), NonFiniteError);
}

TEST(Rng, SeedDeterminesStream) {
  Rng a(42), b(42), c(43);
  for (int i = 0; i < 100; ++i) {
    const double x = a.normal();
    EXPECT_EQ(x, b.normal());
    (void)c.normal();
  }
  EXPECT_NE(Rng(42).next_u64(), Rng(43).next_u64());
}

TEST(Rng, NormalMoments) {
  Rng r(5);
  double s = 0, s2 = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double x = r.normal();
    s += x;
    s2 += x * x;
  }
  EXPECT_NEAR(s / n, 0.0, 0.01);
  EXPECT_NEAR(s2 / n, 1.0, 0.01);
}

TEST(Rng, SplitStreamsDiffer) {
  Rng root(9);
  Rng a = root.split(), b = root.split();
  EXPECT_NE(a.next_u64(), b.next_u64());
}

TEST(Autodiff, MatmulForwardMatchesHandProduct) {
  Graph g;
  Var a = g.constant(Tensor::matrix({{1, 2}, {3, 4}}));
  Var b = g.constant(Tensor::matrix({{5, 6}, {7, 8}}));
  const Tensor c = matmul(a, b).value();
  EXPECT_EQ(c, Tensor::matrix({{19, 22}, {43, 50}}));
}

TEST(Autodiff, BackwardAccumulatesSharedLeaf) {
  Graph g;
  Var x = g.leaf(Tensor::vector({3.0}), true);
  Var y = add(mul(x, x), x);  // x^2 + x
  g.backward(sum(y));
  EXPECT_DOUBLE_EQ(g.grad(x)[0], 7.0);
}

TEST(Autodiff, BackwardErrors) {
  Graph g;
  Var x = g.leaf(Tensor::vector({1.0, 2.0}), true);
  EXPECT_THROW(g.backward(x), ShapeError);
  Var c = g.constant(Tensor::scalar(1.0));
  EXPECT_THROW(g.backward(c), std::invalid_argument);
  Graph other;
  Var y = other.leaf(Tensor::scalar(1.0), true);
  EXPECT_THROW(g.backward(y), std::invalid_argument);
  EXPECT_THROW(add(x, y), std::invalid_argument);
}

TEST(Autodiff, NonFiniteForwardAborts) {
  Graph g;
  Var x = g.constant(Tensor::vector({-1.0}));
  EXPECT_THROW(log(x), NonFiniteError);
}

TEST(Autodiff, ReluSubgradientAtZeroIsZero) {
  Graph g;
  Var x = g.leaf(Tensor::vector({0.0, 1.0, -1.0}), true);
  g.backward(sum(relu(x)));
  EXPECT_EQ(g.grad(x), Tensor::vector({0.0, 1.0, 0.0}));
}

TEST(Autodiff, EuclideanNormZeroRowHasZeroGradient) {
  Graph g;
  Var x = g.leaf(Tensor::matrix({{0.0, 0.0}, {3.0, 4.0}}), true);
  Var n = euclidean_norm_rowwise(x);
  EXPECT_EQ(n.value(), Tensor::vector({0.0, 5.0}));
  g.backward(sum(n));
  const Tensor& dx = g.grad(x);
  EXPECT_EQ(dx.at(0, 0), 0.0);
  EXPECT_EQ(dx.at(0, 1), 0.0);
  EXPECT_NEAR(dx.at(1, 0), 0.6, 1e-15);
  EXPECT_NEAR(dx.at(1, 1), 0.8, 1e-15);
}

TEST(Autodiff, DropoutInvertedScaling) {
  Rng rng(3);
  Graph g;
  Var x = g.constant(Tensor({200, 50}, 1.0));
  const Tensor y = dropout(x, 0.5, true, rng).value();
  double s = 0;
  for (double v : y.values()) {
    EXPECT_TRUE(v == 0.0 || v == 2.0);
    s += v;
  }
  EXPECT_NEAR(s / static_cast<double>(y.size()), 1.0, 0.03);
  EXPECT_EQ(dropout(x, 0.5, false, rng).value(), x.value());
}

TEST(Autodiff, BatchnormTrainingNormalizesColumns) {
  Rng rng(1);
  Graph g;
  Var x = g.constant(random_tensor({32, 3}, rng, -5, 5));
  Var beta = g.constant(Tensor({3}, 0.0));
  BatchNormStats stats{Tensor({3}, 0.0), Tensor({3}, 1.0)};
  BatchNormOptions opt;
  opt.running = &stats;
  const Tensor y = batchnorm(x, beta, std::nullopt, opt).value();
  for (std::size_t c = 0; c < 3; ++c) {
    double m = 0, v = 0;
    for (std::size_t r = 0; r < 32; ++r) m += y.at(r, c);
    m /= 32;
    for (std::size_t r = 0; r < 32; ++r) v += (y.at(r, c) - m) * (y.at(r, c) - m);
    EXPECT_NEAR(m, 0.0, 1e-12);
    EXPECT_NEAR(v / 32, 1.0, 1e-3);
  }
  // running = 0.9 * running + 0.1 * batch
  double batch_mean0 = 0;
  for (std::size_t r = 0; r < 32; ++r) batch_mean0 += x.value().at(r, 0);
  EXPECT_NEAR(stats.mean[0], 0.1 * batch_mean0 / 32, 1e-12);
}

// --- gradient checks, one per primitive --------------------------------------

class PrimitiveGrad : public ::testing::Test {
 protected:
  Rng rng{17};
};

TEST_F(PrimitiveGrad, Matmul) {
  EXPECT_LT(check([](Graph&, std::span<const Var> p) { return probe(matmul(p[0], p[1])); },
                  {random_tensor({3, 4}, rng), random_tensor({4, 2}, rng)}),
            1e-5);
}

TEST_F(PrimitiveGrad, AddBiasAddSubMul) {
  auto a = random_tensor({3, 4}, rng), b = random_tensor({3, 4}, rng), bias = random_tensor({4}, rng);
  EXPECT_LT(check([](Graph&, std::span<const Var> p) { return probe(add_bias(p[0], p[1])); }, {a, bias}), 1e-5);
  EXPECT_LT(check([](Graph&, std::span<const Var> p) { return probe(add(p[0], p[1])); }, {a, b}), 1e-5);
  EXPECT_LT(check([](Graph&, std::span<const Var> p) { return probe(sub(p[0], p[1])); }, {a, b}), 1e-5);
  EXPECT_LT(check([](Graph&, std::span<const Var> p) { return probe(mul(p[0], p[1])); }, {a, b}), 1e-5);
}

TEST_F(PrimitiveGrad, ScaleAndScalars) {
  auto a = random_tensor({5}, rng);
  EXPECT_LT(check([](Graph&, std::span<const Var> p) { return probe(scale(p[0], -2.5)); }, {a}), 1e-5);
  EXPECT_LT(check([](Graph&, std::span<const Var> p) { return probe(add_scalar(p[0], 3.0)); }, {a}), 1e-5);
  EXPECT_LT(check([](Graph&, std::span<const Var> p) { return probe(square(p[0])); }, {a}), 1e-5);
}

TEST_F(PrimitiveGrad, Activations) {
  auto a = random_tensor({4, 3}, rng, -2, 2);
  EXPECT_LT(check([](Graph&, std::span<const Var> p) { return probe(relu(p[0])); }, {a}, 1e-3), 1e-5);
  EXPECT_LT(check([](Graph&, std::span<const Var> p) { return probe(tanh(p[0])); }, {a}), 1e-5);
  EXPECT_LT(check([](Graph&, std::span<const Var> p) { return probe(sigmoid(p[0])); }, {a}), 1e-5);
  auto pos = random_tensor({6}, rng, 0.1, 3.0);
  EXPECT_LT(check([](Graph&, std::span<const Var> p) { return probe(log(p[0])); }, {pos}), 1e-5);
  EXPECT_LT(check([](Graph&, std::span<const Var> p) { return probe(clamp(p[0], -0.5, 0.5)); }, {a}, 1e-3), 1e-5);
}

TEST_F(PrimitiveGrad, Dropout) {
  auto a = random_tensor({4, 5}, rng);
  // A fixed seed per evaluation keeps the mask identical across differences.
  EXPECT_LT(check(
                [](Graph&, std::span<const Var> p) {
                  Rng r(99);
                  return probe(dropout(p[0], 0.5, true, r));
                },
                {a}),
            1e-5);
}

TEST_F(PrimitiveGrad, BatchnormWithAndWithoutScale) {
  auto x = random_tensor({6, 3}, rng, -2, 2), beta = random_tensor({3}, rng), gamma = random_tensor({3}, rng, 0.5, 1.5);
  EXPECT_LT(check(
                [](Graph&, std::span<const Var> p) {
                  BatchNormOptions o;
                  return probe(batchnorm(p[0], p[1], p[2], o));
                },
                {x, beta, gamma}),
            1e-5);
  EXPECT_LT(check(
                [](Graph&, std::span<const Var> p) {
                  BatchNormOptions o;
                  return probe(batchnorm(p[0], p[1], std::nullopt, o));
                },
                {x, beta}),
            1e-5);
  BatchNormStats stats{random_tensor({3}, rng), random_tensor({3}, rng, 0.5, 2.0)};
  EXPECT_LT(check(
                [&stats](Graph&, std::span<const Var> p) {
                  BatchNormOptions o;
                  o.training = false;
                  o.running = &stats;
                  return probe(batchnorm(p[0], p[1], p[2], o));
                },
                {x, beta, gamma}),
            1e-5);
}

TEST_F(PrimitiveGrad, Reductions) {
  auto a = random_tensor({4, 3}, rng);
  EXPECT_LT(check([](Graph&, std::span<const Var> p) { return mean(p[0]); }, {a}), 1e-5);
  EXPECT_LT(check([](Graph&, std::span<const Var> p) { return probe(squared_l2_rowwise(p[0])); }, {a}), 1e-5);
  EXPECT_LT(check([](Graph&, std::span<const Var> p) { return probe(euclidean_norm_rowwise(p[0])); }, {a}), 1e-5);
  EXPECT_LT(check([](Graph&, std::span<const Var> p) { return probe(log_softmax(p[0])); }, {a}), 1e-5);
}

TEST_F(PrimitiveGrad, ConcatReshape) {
  auto a = random_tensor({2, 3}, rng), b = random_tensor({4, 3}, rng);
  EXPECT_LT(check([](Graph&, std::span<const Var> p) { return probe(concat({p[0], p[1]})); }, {a, b}), 1e-5);
  EXPECT_LT(check([](Graph&, std::span<const Var> p) { return probe(reshape(p[0], {3, 2})); }, {a}), 1e-5);
}

TEST(GradCheck, DetectsAWrongGradient) {
  // A primitive whose backward is deliberately off by a factor of two.
  ScalarFunction f = [](Graph& g, std::span<const Var> p) {
    Tensor v = p[0].value();
    for (double& x : v.values()) x = x * x;
    Var y = g.record(std::move(v), {p[0]},
                     [xv = p[0].value()](const Tensor& dy, std::span<Tensor* const> d) {
                       for (std::size_t i = 0; i < dy.size(); ++i) (*d[0])[i] += dy[i] * 4.0 * xv[i];
                     },
                     "bad_square");
    return sum(y);
  };
  EXPECT_GT(grad_check(f, {Tensor::vector({0.5, 1.5})}).max_rel_error, 0.1);
}

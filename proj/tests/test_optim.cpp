#include <gtest/gtest.h>

#include <cmath>

#include "eblab/optim.hpp"

using namespace eblab;

namespace {

void step(Optimizer& opt, Tensor& p, const Tensor& g) {
  Tensor* ps[] = {&p};
  const Tensor gs[] = {g};
  opt.step(ps, gs);
}

}  // namespace

TEST(Optimizer, ZeroGradientLeavesParameters) {
  for (auto kind : {OptimizerKind::kSgd, OptimizerKind::kAdam}) {
    Optimizer opt({kind, 0.01});
    Tensor p = Tensor::vector({1.0, -2.0});
    step(opt, p, Tensor::vector({0.0, 0.0}));
    EXPECT_EQ(p, Tensor::vector({1.0, -2.0}));
    EXPECT_EQ(opt.steps(), 1);
  }
}

TEST(Optimizer, SgdStep) {
  Optimizer opt({OptimizerKind::kSgd, 0.01});
  Tensor p = Tensor::vector({1.0});
  step(opt, p, Tensor::vector({2.0}));
  EXPECT_DOUBLE_EQ(p[0], 0.98);
}

TEST(Optimizer, AdamFirstStepMovesByLearningRate) {
  for (double g : {1e-3, 0.5, -3.0, 250.0}) {
    Optimizer opt({OptimizerKind::kAdam, 0.001, 0.5, 0.999, 1e-8});
    Tensor p = Tensor::vector({0.0});
    step(opt, p, Tensor::vector({g}));
    EXPECT_NEAR(std::abs(p[0]), 0.001, 1e-6) << g;
    EXPECT_EQ(std::signbit(p[0]), !std::signbit(g));
  }
}

TEST(Optimizer, AdamMatchesClosedFormOverSteps) {
  const double lr = 0.01, b1 = 0.5, b2 = 0.999, eps = 1e-8;
  Optimizer opt({OptimizerKind::kAdam, lr, b1, b2, eps});
  Tensor p = Tensor::vector({1.0});
  double x = 1.0, m = 0.0, v = 0.0;
  for (int t = 1; t <= 20; ++t) {
    const double g = 2.0 * x;  // gradient of x^2
    step(opt, p, Tensor::vector({2.0 * p[0]}));
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    x -= lr * (m / (1 - std::pow(b1, t))) / (std::sqrt(v / (1 - std::pow(b2, t))) + eps);
    EXPECT_NEAR(p[0], x, 1e-15);
  }
  EXPECT_EQ(opt.steps(), 20);
  EXPECT_EQ(opt.first_moments()[0].shape(), p.shape());
}

TEST(Optimizer, RejectsBadInput) {
  Optimizer opt({OptimizerKind::kAdam, 0.01});
  Tensor p = Tensor::vector({1.0, 2.0});
  EXPECT_THROW(step(opt, p, Tensor::vector({1.0})), ShapeError);
  EXPECT_THROW(step(opt, p, Tensor::vector({NAN, 1.0})), NonFiniteError);
  EXPECT_EQ(p, Tensor::vector({1.0, 2.0}));
  EXPECT_THROW(Optimizer({OptimizerKind::kSgd, -1.0}), std::invalid_argument);
}

TEST(Optimizer, NonFiniteUpdateLeavesParametersIntact) {
  Optimizer opt({OptimizerKind::kSgd, 1e308});
  Tensor p = Tensor::vector({1.0});
  EXPECT_THROW(step(opt, p, Tensor::vector({1e308})), NonFiniteError);
  EXPECT_EQ(p[0], 1.0);
}

TEST(LrSchedule, ConstantAndLinearDecay) {
  LrSchedule c{0.001, 1.0, 1000};
  EXPECT_EQ(c.at(0), 0.001);
  EXPECT_EQ(c.at(999), 0.001);
  LrSchedule d{0.001, 0.5, 1000};
  EXPECT_EQ(d.at(0), 0.001);
  EXPECT_EQ(d.at(500), 0.001);
  EXPECT_NEAR(d.at(750), 0.0005, 1e-15);
  EXPECT_EQ(d.at(1000), 0.0);
  double prev = d.at(500);
  for (int t = 500; t <= 1200; t += 13) {
    EXPECT_LE(d.at(t), prev);
    EXPECT_GE(d.at(t), 0.0);
    prev = d.at(t);
  }
}

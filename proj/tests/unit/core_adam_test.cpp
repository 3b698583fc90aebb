#include <cmath>

#include "gtest/gtest.h"
#include "rarelab/core/adam.hpp"
#include "rarelab/core/ops.hpp"

namespace rarelab::core {
namespace {

TEST(Adam, ZeroGradientLeavesParameterUnchanged) {
  Parameter<float> p("p", Tensor<float>::vector({1.5f, -2.0f}));
  Adam<float> adam({}, {&p});
  backward(scale(sum(p.var()), 0.0f));
  adam.step();
  EXPECT_EQ(p.value().values(), (std::vector<float>{1.5f, -2.0f}));
}

TEST(Adam, FirstStepMovesByLearningRateAgainstGradientSign) {
  Parameter<double> p("p", Tensor<double>::vector({0.0, 0.0}));
  AdamConfig config;
  config.learning_rate = 0.01;
  Adam<double> adam(config, {&p});
  auto c = Var<double>::constant(Tensor<double>::vector({3.0, -0.5}));
  backward(dot(p.var(), c));
  adam.step();
  // bias-corrected first step: lr * g / (|g| + eps)
  EXPECT_NEAR(p.value()[0], -0.01 * 3.0 / (3.0 + 1e-8), 1e-12);
  EXPECT_NEAR(p.value()[1], 0.01 * 0.5 / (0.5 + 1e-8), 1e-12);
}

TEST(Adam, FrozenParameterIsBitIdentical) {
  Parameter<float> live("live", Tensor<float>::vector({1, 2}));
  Parameter<float> frozen("frozen", Tensor<float>::vector({3, 4}), true);
  Adam<float> adam({}, {&live, &frozen});
  for (int i = 0; i < 5; ++i) {
    backward(dot(live.var(), frozen.var()));
    adam.step();
  }
  EXPECT_EQ(frozen.value().values(), (std::vector<float>{3, 4}));
  EXPECT_NE(live.value().values(), (std::vector<float>{1, 2}));
}

TEST(Adam, GradientsClearedAfterStep) {
  Parameter<float> p("p", Tensor<float>::vector({1, 2}));
  Adam<float> adam({}, {&p});
  backward(sum(p.var()));
  adam.step();
  for (float g : p.grad()) EXPECT_EQ(g, 0.0f);
}

TEST(Adam, MatchesScalarReferenceOnQuadratic) {
  // f(x) = (x - 2)^2 with warmup and linear decay over 10 steps.
  AdamConfig config;
  config.learning_rate = 0.1;
  config.schedule = {0.2, 10, true};
  Parameter<double> p("x", Tensor<double>::scalar(-1.0));
  Adam<double> adam(config, {&p});
  auto two = Var<double>::constant(Tensor<double>::scalar(2.0));

  double x = -1.0, m = 0, v = 0;
  for (int t = 1; t <= 10; ++t) {
    backward(squared_distance(p.var(), two));
    adam.step();

    const double g = 2 * (x - 2);
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    const double warm = 2.0;  // floor(0.2 * 10)
    const double s = t - 1;
    const double factor = s < warm ? (s + 1) / warm : (10 - s) / (10 - warm);
    const double lr = 0.1 * factor;
    x -= lr * (m / (1 - std::pow(0.9, t))) / (std::sqrt(v / (1 - std::pow(0.999, t))) + 1e-8);
    EXPECT_NEAR(p.value()[0], x, 1e-6) << "step " << t;
  }
  EXPECT_EQ(adam.step_count(), 10u);
}

TEST(Schedule, WarmupThenDecay) {
  Schedule s{0.1, 100, true};
  EXPECT_NEAR(s.factor(1), 0.1, 1e-12);
  EXPECT_NEAR(s.factor(10), 1.0, 1e-12);
  EXPECT_NEAR(s.factor(11), 1.0, 1e-12);
  EXPECT_GT(s.factor(50), s.factor(90));
  EXPECT_GE(s.factor(100), 0.0);
  Schedule constant;
  EXPECT_EQ(constant.factor(7), 1.0);
}

}  // namespace
}  // namespace rarelab::core

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "gradcheck.hpp"
#include "lvsa/error.hpp"
#include "lvsa/nn.hpp"
#include "lvsa/optim.hpp"
#include "lvsa/rng.hpp"

namespace lvsa {
namespace {

using testing::random_tensor;

TEST(BatchNorm, TrainingNormalizesOverAllLeadingAxes) {
  BatchNormState bn(3);
  const Tensor x = random_tensor({4, 5, 3}, 1, -3.0, 5.0, false);
  const Tensor y = batch_norm(x, bn, true);
  for (std::size_t c = 0; c < 3; ++c) {
    double m = 0.0, v = 0.0, xm = 0.0, xv = 0.0;
    for (std::size_t r = 0; r < 20; ++r) {
      m += y.value(r * 3 + c);
      xm += x.value(r * 3 + c);
    }
    m /= 20.0;
    xm /= 20.0;
    for (std::size_t r = 0; r < 20; ++r) {
      v += (y.value(r * 3 + c) - m) * (y.value(r * 3 + c) - m);
      xv += (x.value(r * 3 + c) - xm) * (x.value(r * 3 + c) - xm);
    }
    v /= 20.0;
    xv /= 20.0;
    EXPECT_NEAR(m, 0.0, 1e-12);
    EXPECT_NEAR(v, xv / (xv + 1e-5), 1e-12);
    EXPECT_NEAR(bn.running_mean[c], 0.01 * xm, 1e-12);
    EXPECT_NEAR(bn.running_var[c], 0.99 + 0.01 * xv, 1e-12);
  }
}

TEST(BatchNorm, EvaluationUsesRunningStatistics) {
  BatchNormState bn(2);
  bn.running_mean = {1.0, -2.0};
  bn.running_var = {4.0, 0.25};
  const Tensor x({1, 2}, {3.0, -1.0});
  const Tensor y = batch_norm(x, bn, false);
  EXPECT_NEAR(y.value(0), 2.0 / std::sqrt(4.0 + 1e-5), 1e-12);
  EXPECT_NEAR(y.value(1), 1.0 / std::sqrt(0.25 + 1e-5), 1e-12);
  EXPECT_EQ(bn.running_mean[0], 1.0);
  EXPECT_THROW((void)batch_norm(random_tensor({2, 3}, 2), bn, true), UsageError);
}

TEST(LayerNormModule, RowsHaveZeroMeanUnitVariance) {
  CounterRng rng(3);
  LayerNorm ln(6);
  const Tensor y = ln.forward(random_tensor({3, 6}, 4, -5.0, 5.0, false));
  for (std::size_t r = 0; r < 3; ++r) {
    double m = 0.0, v = 0.0;
    for (std::size_t c = 0; c < 6; ++c) m += y.value(r * 6 + c);
    m /= 6.0;
    for (std::size_t c = 0; c < 6; ++c) v += std::pow(y.value(r * 6 + c) - m, 2);
    EXPECT_NEAR(m, 0.0, 1e-12);
    EXPECT_NEAR(v / 6.0, 1.0, 1e-4);
  }
}

TEST(Init, FanInBounds) {
  CounterRng rng(5);
  const Tensor u = init_uniform_fan_in({100, 50}, 25, rng);
  for (double x : u.values()) EXPECT_LE(std::abs(x), 0.2);
  const Tensor n = init_normal_fan_in({200, 100}, 100, rng);
  double v = 0.0;
  for (double x : n.values()) v += x * x;
  EXPECT_NEAR(v / n.size(), 0.01, 0.0005);
}

TEST(LinearModule, AffineForward) {
  CounterRng rng(6);
  Linear lin(3, 2, true, rng);
  const Tensor x({1, 3}, {1.0, 2.0, 3.0});
  const Tensor y = lin.forward(x);
  for (std::size_t o = 0; o < 2; ++o) {
    double expect = lin.bias().value(o);
    for (std::size_t i = 0; i < 3; ++i) expect += x.value(i) * lin.weight().value(i * 2 + o);
    EXPECT_NEAR(y.value(o), expect, 1e-15);
  }
  ParameterList params;
  lin.collect("lin", params);
  EXPECT_EQ(parameter_count(params), 8u);
}

// Scalar oracle of the update rule.
TEST(AdamWUpdate, MatchesScalarOracle) {
  const AdamWConfig cfg{1e-2, 0.9, 0.999, 1e-7, 0.1};
  std::vector<double> p{0.5, -1.0};
  std::vector<double> m(2, 0.0), v(2, 0.0);
  const std::vector<std::vector<double>> grads{{0.3, -0.2}, {-0.1, 0.4}, {0.05, 0.0}};
  double op = 0.5, om = 0.0, ov = 0.0;
  for (std::size_t t = 1; t <= grads.size(); ++t) {
    adamw_update(p, grads[t - 1], m, v, t, cfg);
    const double g = grads[t - 1][0];
    om = 0.9 * om + 0.1 * g;
    ov = 0.999 * ov + 0.001 * g * g;
    const double mh = om / (1.0 - std::pow(0.9, double(t)));
    const double vh = ov / (1.0 - std::pow(0.999, double(t)));
    op = op - 1e-2 * 0.1 * op;
    op = op - 1e-2 * mh / (std::sqrt(vh) + 1e-7);
    EXPECT_NEAR(p[0], op, 1e-15);
  }
  // First step of Adam moves each weight by about lr against its gradient.
  std::vector<double> q{0.0}, qm{0.0}, qv{0.0};
  adamw_update(q, std::vector<double>{5.0}, qm, qv, 1, AdamWConfig{1e-3, 0.9, 0.999, 1e-7, 0.0});
  EXPECT_NEAR(q[0], -1e-3, 1e-10);
}

TEST(AdamWOptimizer, NonFiniteGradientLeavesParametersUntouched) {
  Tensor a({2}, {1.0, 2.0}, true);
  Tensor b({1}, {3.0}, true);
  AdamW opt({{"a", a, false}, {"b", b, false}}, AdamWConfig{});
  a.mutable_grad()[0] = 0.5;
  b.mutable_grad()[0] = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(opt.step(), NumericalError);
  EXPECT_EQ(a.value(0), 1.0);
  EXPECT_EQ(b.value(0), 3.0);
  EXPECT_EQ(opt.step_count(), 0u);
  opt.zero_grad();
  a.mutable_grad()[0] = 0.5;
  opt.step();
  EXPECT_EQ(opt.step_count(), 1u);
  EXPECT_LT(a.value(0), 1.0);
  EXPECT_EQ(b.value(0), 3.0);
}

}  // namespace
}  // namespace lvsa

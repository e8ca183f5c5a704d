#include <gtest/gtest.h>

#include <cmath>

#include "gradcheck.hpp"
#include "lvsa/error.hpp"
#include "lvsa/nn.hpp"
#include "lvsa/ops.hpp"

namespace lvsa {
namespace {

using testing::grad_check;
using testing::random_tensor;
using testing::weighted_sum;
using Inputs = std::vector<Tensor>;

constexpr double kTol = 1e-4;

TEST(GradCheck, Matmul) {
  auto r = grad_check([](const Inputs& in) { return weighted_sum(matmul(in[0], in[1])); },
                      {random_tensor({2, 3, 4}, 1), random_tensor({4, 5}, 2)});
  EXPECT_LT(r.rel_error, kTol);
}

TEST(GradCheck, BatchedMatmul) {
  auto r = grad_check([](const Inputs& in) { return weighted_sum(bmm(in[0], in[1])); },
                      {random_tensor({2, 3, 4}, 3), random_tensor({2, 4, 2}, 4)});
  EXPECT_LT(r.rel_error, kTol);
  auto rt = grad_check([](const Inputs& in) { return weighted_sum(bmm_nt(in[0], in[1])); },
                       {random_tensor({2, 3, 4}, 5), random_tensor({2, 5, 4}, 6)});
  EXPECT_LT(rt.rel_error, kTol);
}

TEST(GradCheck, ElementwiseWithBroadcast) {
  for (auto op : {&add, &sub, &mul}) {
    auto r = grad_check([op](const Inputs& in) { return weighted_sum(op(in[0], in[1])); },
                        {random_tensor({3, 4}, 7), random_tensor({4}, 8)});
    EXPECT_LT(r.rel_error, kTol);
    auto same = grad_check([op](const Inputs& in) { return weighted_sum(op(in[0], in[1])); },
                           {random_tensor({2, 3}, 9), random_tensor({2, 3}, 10)});
    EXPECT_LT(same.rel_error, kTol);
  }
  auto s = grad_check([](const Inputs& in) { return weighted_sum(scale(in[0], -2.5)); },
                      {random_tensor({5}, 11)});
  EXPECT_LT(s.rel_error, kTol);
}

TEST(GradCheck, ShapeOps) {
  auto c = grad_check(
      [](const Inputs& in) {
        const std::vector<Tensor> parts{in[0], in[1]};
        return weighted_sum(concat(parts));
      },
      {random_tensor({2, 3}, 12), random_tensor({2, 2}, 13)});
  EXPECT_LT(c.rel_error, kTol);
  auto t = grad_check([](const Inputs& in) { return weighted_sum(transpose(in[0])); },
                      {random_tensor({2, 3, 4}, 14)});
  EXPECT_LT(t.rel_error, kTol);
  auto r = grad_check([](const Inputs& in) { return weighted_sum(reshape(in[0], {6, 2})); },
                      {random_tensor({3, 4}, 15)});
  EXPECT_LT(r.rel_error, kTol);
  auto sl = grad_check([](const Inputs& in) { return weighted_sum(slice_rows(in[0], 2)); },
                       {random_tensor({4, 3}, 16)});
  EXPECT_LT(sl.rel_error, kTol);
}

TEST(GradCheck, Activations) {
  // Keep relu inputs away from the kink.
  Tensor x = random_tensor({4, 5}, 17, 0.1, 1.0);
  for (std::size_t i = 0; i < x.size(); i += 2) x.mutable_values()[i] *= -1.0;
  auto r = grad_check([](const Inputs& in) { return weighted_sum(relu(in[0])); }, {x});
  EXPECT_LT(r.rel_error, kTol);
  auto s = grad_check([](const Inputs& in) { return weighted_sum(sigmoid(in[0])); },
                      {random_tensor({4, 5}, 18, -3.0, 3.0)});
  EXPECT_LT(s.rel_error, kTol);
  auto sm = grad_check([](const Inputs& in) { return weighted_sum(softmax_rows(in[0])); },
                       {random_tensor({3, 6}, 19, -2.0, 2.0)});
  EXPECT_LT(sm.rel_error, kTol);
}

TEST(GradCheck, Normalization) {
  auto ln = grad_check(
      [](const Inputs& in) { return weighted_sum(layer_norm(in[0], in[1], in[2])); },
      {random_tensor({3, 5}, 20), random_tensor({5}, 21, 0.5, 1.5), random_tensor({5}, 22)});
  EXPECT_LT(ln.rel_error, kTol);

  BatchNormState state(4);
  state.gamma = random_tensor({4}, 23, 0.5, 1.5);
  state.beta = random_tensor({4}, 24);
  auto bn = grad_check(
      [&state](const Inputs& in) {
        BatchNormState s = state;
        s.gamma = in[1];
        s.beta = in[2];
        return weighted_sum(batch_norm(in[0], s, true));
      },
      {random_tensor({3, 2, 4}, 25), state.gamma, state.beta});
  EXPECT_LT(bn.rel_error, kTol);
  auto bn_eval = grad_check(
      [&state](const Inputs& in) {
        BatchNormState s = state;
        s.running_mean = {0.1, -0.2, 0.3, 0.0};
        s.running_var = {1.5, 0.5, 2.0, 1.0};
        s.gamma = in[1];
        return weighted_sum(batch_norm(in[0], s, false));
      },
      {random_tensor({3, 4}, 26), state.gamma});
  EXPECT_LT(bn_eval.rel_error, kTol);
}

TEST(GradCheck, PoolingAndReductions) {
  auto p = grad_check([](const Inputs& in) { return weighted_sum(global_avg_pool(in[0], 3)); },
                      {random_tensor({2, 2, 10}, 27)});
  EXPECT_LT(p.rel_error, kTol);
  auto m = grad_check([](const Inputs& in) { return mean(mul(in[0], in[0])); },
                      {random_tensor({3, 3}, 28)});
  EXPECT_LT(m.rel_error, kTol);
}

TEST(GradCheck, Embedding) {
  const std::vector<std::int32_t> idx{0, 2, 2, 1, 3, 0};
  auto e = grad_check(
      [&idx](const Inputs& in) { return weighted_sum(embedding(in[0], idx, {2, 3})); },
      {random_tensor({4, 5}, 29)});
  EXPECT_LT(e.rel_error, kTol);
}

TEST(GradCheck, Losses) {
  const std::vector<std::int32_t> targets{2, 0, 1};
  auto ce = grad_check([&](const Inputs& in) { return cross_entropy(in[0], targets); },
                       {random_tensor({3, 4}, 30, -2.0, 2.0)});
  EXPECT_LT(ce.rel_error, kTol);
  const std::vector<double> labels{1.0, 0.0, 1.0, 0.0};
  auto bce = grad_check([&](const Inputs& in) { return binary_cross_entropy(in[0], labels); },
                        {random_tensor({4}, 31, 0.1, 0.9)});
  EXPECT_LT(bce.rel_error, kTol);
  auto composed = grad_check(
      [&](const Inputs& in) { return binary_cross_entropy(sigmoid(in[0]), labels); },
      {random_tensor({4}, 32, -3.0, 3.0)});
  EXPECT_LT(composed.rel_error, kTol);
}

TEST(GradCheck, DropoutMaskIsFixedPerCall) {
  CounterRng rng(5);
  const Tensor x = random_tensor({20}, 33);
  Tensor y;
  {
    GradTape tape;
    y = dropout(x, 0.5, true, rng);
    tape.backward(sum(y));
  }
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double g = x.grad()[i];
    EXPECT_TRUE(g == 0.0 || g == 2.0);
    EXPECT_DOUBLE_EQ(y.value(i), x.value(i) * g);
  }
}

TEST(StraightThrough, ForwardTiesToPlusOneBackwardClipped) {
  const Tensor x({6}, {-2.0, -1.0, -0.5, 0.0, 0.5, 1.5}, true);
  Tensor y;
  {
    GradTape tape;
    y = sign_ste(x);
    tape.backward(weighted_sum(y));
  }
  const std::vector<double> expect_y{-1, -1, -1, 1, 1, 1};
  for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(y.value(i), expect_y[i]);
  // Weighted-sum upstream gradients are nonzero; the STE passes them only
  // where |x| <= 1.
  EXPECT_EQ(x.grad()[0], 0.0);
  EXPECT_NE(x.grad()[1], 0.0);
  EXPECT_NE(x.grad()[2], 0.0);
  EXPECT_NE(x.grad()[3], 0.0);
  EXPECT_NE(x.grad()[4], 0.0);
  EXPECT_EQ(x.grad()[5], 0.0);
}

TEST(Softmax, RowsSumToOneAndSurviveLargeInputs) {
  const Tensor x({2, 3}, {1000.0, 1001.0, 1002.0, -5.0, 0.0, 5.0});
  const Tensor y = softmax_rows(x);
  for (std::size_t r = 0; r < 2; ++r) {
    double s = 0.0;
    for (std::size_t c = 0; c < 3; ++c) {
      EXPECT_TRUE(std::isfinite(y.value(r * 3 + c)));
      s += y.value(r * 3 + c);
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(Pooling, AveragesFloorWindows) {
  // D = 7, F = 3: window 2, trailing entry ignored.
  const Tensor x({1, 7}, {1, 3, 5, 7, 9, 11, 100});
  const Tensor y = global_avg_pool(x, 3);
  ASSERT_EQ(y.shape(), (Shape{1, 3}));
  EXPECT_DOUBLE_EQ(y.value(0), 2.0);
  EXPECT_DOUBLE_EQ(y.value(1), 6.0);
  EXPECT_DOUBLE_EQ(y.value(2), 10.0);
}

TEST(Losses, BinaryCrossEntropyClampsProbabilities) {
  const Tensor p({2}, {0.0, 1.0});
  const double loss = binary_cross_entropy(p, std::vector<double>{1.0, 0.0}).item();
  EXPECT_NEAR(loss, -std::log(kProbClamp), 1e-9);
}

TEST(Tape, NoGradGuardRecordsNothing) {
  const Tensor a = random_tensor({2, 2}, 34);
  GradTape tape;
  {
    NoGradGuard guard;
    const Tensor y = matmul(a, a);
    EXPECT_FALSE(y.requires_grad());
  }
  EXPECT_EQ(tape.size(), 0u);
  const Tensor z = matmul(a, a);
  EXPECT_TRUE(z.requires_grad());
  EXPECT_EQ(tape.size(), 1u);
}

TEST(Tape, GradientsAccumulateAcrossUses) {
  const Tensor x({1}, {3.0}, true);
  GradTape tape;
  tape.backward(add(mul(x, x), x));  // d/dx (x^2 + x) = 7
  EXPECT_DOUBLE_EQ(x.grad()[0], 7.0);
  EXPECT_EQ(tape.size(), 0u);
}

TEST(Shapes, MismatchesAreUsageErrors) {
  const Tensor a = random_tensor({2, 3}, 35);
  const Tensor b = random_tensor({2, 3}, 36);
  EXPECT_THROW((void)matmul(a, b), UsageError);
  EXPECT_THROW((void)add(a, random_tensor({2}, 37)), UsageError);
  EXPECT_THROW((void)reshape(a, {4}), UsageError);
  EXPECT_THROW(Tensor({2, 0}, {}), UsageError);
}

}  // namespace
}  // namespace lvsa

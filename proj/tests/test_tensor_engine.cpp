#include <gtest/gtest.h>

#include <cmath>

#include "hsid/optim.hpp"
#include "hsid/rng.hpp"
#include "hsid/tape.hpp"
#include "hsid/tensor.hpp"

using namespace hsid;

namespace {

Tensor make(Shape s, std::vector<double> d) { return Tensor(std::move(s), std::move(d)); }

Tensor random_tensor(Shape s, Rng& rng, double lo = -2.0, double hi = 2.0) {
  Tensor t(std::move(s));
  for (double& v : t.data) v = rng.next_uniform(lo, hi);
  return t;
}

}  // namespace

TEST(Tensor, InvariantShapeMatchesData) {
  EXPECT_THROW(make({2, 3}, {1.0, 2.0}), ShapeError);
  EXPECT_THROW(Tensor({0, 3}), ShapeError);
  Tensor t({2, 3});
  EXPECT_EQ(t.size(), 6u);
}

TEST(Matmul, IdentityAndZero) {
  Tape tape;
  Var a = tape.constant(make({3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9}));
  Var eye = tape.constant(make({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1}));
  Var zero = tape.constant(Tensor({3, 3}));
  EXPECT_EQ(matmul(a, eye).val().data, a.val().data);
  for (double v : matmul(a, zero).val().data) EXPECT_EQ(v, 0.0);
}

TEST(Matmul, HandComputedProduct) {
  Tape tape;
  Var a = tape.constant(make({2, 2}, {1, 2, 3, 4}));
  Var b = tape.constant(make({2, 2}, {5, 6, 7, 8}));
  Tensor c = matmul(a, b).val();
  // Oracle: dot products by hand.
  std::vector<double> expect = {19, 22, 43, 50};
  EXPECT_EQ(c.data, expect);
}

TEST(Matmul, ShapeMismatchNamesBothShapes) {
  Tape tape;
  Var a = tape.constant(Tensor({2, 3}));
  Var b = tape.constant(Tensor({2, 2}));
  try {
    matmul(a, b);
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    std::string msg = e.what();
    EXPECT_NE(msg.find("[2x3]"), std::string::npos) << msg;
    EXPECT_NE(msg.find("[2x2]"), std::string::npos) << msg;
  }
}

TEST(Conv2d, OneByOneIdentityKernel) {
  Tape tape;
  Rng rng = Rng::stream(7, "conv_identity", 0);
  Tensor x = random_tensor({2, 4, 4}, rng);
  Var vx = tape.constant(x);
  Tensor k({2, 2, 1, 1});
  k.at(0 * 2 + 0) = 1.0;  // out0 <- in0
  k.at(1 * 2 + 1) = 1.0;  // out1 <- in1
  Var vk = tape.constant(k);
  Tensor y = conv2d(vx, vk, 1, 0).val();
  EXPECT_EQ(y.data, x.data);
}

TEST(Conv2d, DeltaKernelShiftsImage) {
  // 3x3 kernel with a single 1 at top-left, pad 1: shifts input down-right.
  Tape tape;
  Tensor x = make({1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  Tensor k({1, 1, 3, 3});
  k.at(0) = 1.0;
  Tensor y = conv2d(tape.constant(x), tape.constant(k), 1, 1).val();
  std::vector<double> expect = {0, 0, 0, 0, 1, 2, 0, 4, 5};
  EXPECT_EQ(y.data, expect);
}

TEST(Conv2d, AllOnesCrossCorrelationSumsWindow) {
  Tape tape;
  Tensor x({1, 3, 3}, std::vector<double>(9, 1.0));
  Tensor k({1, 1, 3, 3}, std::vector<double>(9, 1.0));
  Tensor y = conv2d(tape.constant(x), tape.constant(k), 1, 0).val();
  ASSERT_EQ(y.size(), 1u);
  EXPECT_DOUBLE_EQ(y.data[0], 9.0);  // direct summation oracle
}

TEST(Conv2d, NonIntegralOutputExtentRejected) {
  Tape tape;
  Var x = tape.constant(Tensor({1, 6, 6}));
  Var k = tape.constant(Tensor({1, 1, 3, 3}));
  EXPECT_THROW(conv2d(x, k, 2, 1), ShapeError);  // (6+2-3)/2 not integral
}

TEST(Conv2d, GroupedDepthwise) {
  Tape tape;
  Rng rng = Rng::stream(7, "conv_depthwise", 0);
  Tensor x = random_tensor({3, 4, 4}, rng);
  Tensor k({3, 1, 1, 1});
  k.at(0) = 2.0;
  k.at(1) = -1.0;
  k.at(2) = 0.5;
  Tensor y = conv2d(tape.constant(x), tape.constant(k), 1, 0, 3).val();
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = 0; i < 16; ++i)
      EXPECT_DOUBLE_EQ(y.data[c * 16 + i], x.data[c * 16 + i] * k.at(c));
}

TEST(Softmax, SymmetryAndShiftInvariance) {
  Tape tape;
  Tensor y = softmax(tape.constant(make({2}, {0, 0})), 0).val();
  EXPECT_DOUBLE_EQ(y.data[0], 0.5);
  EXPECT_DOUBLE_EQ(y.data[1], 0.5);

  Tensor a = softmax(tape.constant(make({2}, {0.3, 1.1})), 0).val();
  Tensor b = softmax(tape.constant(make({2}, {0.3 + 5.0, 1.1 + 5.0})), 0).val();
  EXPECT_NEAR(a.data[0], b.data[0], 1e-12);
  EXPECT_NEAR(a.data[1], b.data[1], 1e-12);
}

TEST(Softmax, DirectExponentialOracle) {
  Tape tape;
  Tensor y = softmax(tape.constant(make({3}, {1, 2, 3})), 0).val();
  EXPECT_NEAR(y.data[0], 0.09003, 1e-5);
  EXPECT_NEAR(y.data[1], 0.24473, 1e-5);
  EXPECT_NEAR(y.data[2], 0.66524, 1e-5);
}

TEST(Softmax, RowsSumToOne) {
  Tape tape;
  Rng rng = Rng::stream(11, "softmax_rows", 0);
  Tensor x = random_tensor({5, 7}, rng, -30.0, 30.0);
  for (std::size_t axis = 0; axis < 2; ++axis) {
    Tensor y = softmax(tape.constant(x), axis).val();
    std::size_t outer = axis == 0 ? 7 : 5;
    for (std::size_t o = 0; o < outer; ++o) {
      double s = 0.0;
      for (std::size_t j = 0; j < y.shape[axis]; ++j)
        s += axis == 0 ? y.at2(j, o) : y.at2(o, j);
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
  }
}

TEST(Backward, SumGivesOnes) {
  Tape tape;
  Tensor x({3, 2}, {1, 2, 3, 4, 5, 6});
  x.requires_grad = true;
  Var vx = tape.leaf(x);
  Var loss = sum(vx);
  Gradients g = tape.backward(loss);
  EXPECT_EQ(g.at(loss).data[0], 1.0);  // d(loss)/d(loss) == 1
  for (double v : g.at(vx).data) EXPECT_DOUBLE_EQ(v, 1.0);
}

TEST(Backward, HalfSquareGivesX) {
  Tape tape;
  Tensor x({4}, {0.5, -1.5, 2.0, 3.25});
  x.requires_grad = true;
  Var vx = tape.leaf(x);
  Var loss = mul_const(sum(mul(vx, vx)), 0.5);
  Gradients g = tape.backward(loss);
  EXPECT_EQ(g.at(vx).data, x.data);
}

TEST(Backward, SharedSubexpressionAccumulates) {
  // y = sum(x) + sum(x): gradient is 2 everywhere.
  Tape tape;
  Tensor x({3}, {1, 2, 3});
  x.requires_grad = true;
  Var vx = tape.leaf(x);
  Var loss = add(sum(vx), sum(vx));
  Gradients g = tape.backward(loss);
  for (double v : g.at(vx).data) EXPECT_DOUBLE_EQ(v, 2.0);
}

TEST(Backward, NonScalarRootRejected) {
  Tape tape;
  Tensor x({3}, {1, 2, 3});
  x.requires_grad = true;
  Var vx = tape.leaf(x);
  EXPECT_THROW(tape.backward(vx), ContractError);
}

TEST(GradCheck, SumIsExact) {
  Rng rng = Rng::stream(3, "gc_sum", 0);
  double err = grad_check([](Tape&, const std::vector<Var>& v) { return sum(v[0]); },
                          {random_tensor({4, 3}, rng)});
  EXPECT_LE(err, 1e-9);
}

TEST(GradCheck, SoftmaxSumIsConstant) {
  Rng rng = Rng::stream(3, "gc_softmax_const", 0);
  double err = grad_check(
      [](Tape&, const std::vector<Var>& v) { return sum(softmax(v[0], 0)); },
      {random_tensor({6}, rng)});
  EXPECT_LE(err, 1e-6);
}

TEST(GradCheck, EpsOutOfRangeRejected) {
  Rng rng = Rng::stream(3, "gc_eps", 0);
  auto f = [](Tape&, const std::vector<Var>& v) { return sum(v[0]); };
  EXPECT_THROW(grad_check(f, {random_tensor({2}, rng)}, 1e-2), ContractError);
  EXPECT_THROW(grad_check(f, {random_tensor({2}, rng)}, 1e-8), ContractError);
}

TEST(Adam, ZeroGradLeavesParamsUnchanged) {
  ParamStore params{{"w", make({2}, {1.5, -0.5})}};
  GradStore grads{{"w", Tensor({2})}};
  AdamState st;
  adam_step(params, grads, st);
  EXPECT_EQ(params["w"].data[0], 1.5);
  EXPECT_EQ(params["w"].data[1], -0.5);
  EXPECT_EQ(st.t, 1);
}

TEST(Adam, FirstStepMatchesBiasCorrectedFormula) {
  // g=1, lr=0.1: mhat=vhat=1 at t=1, so the update is -0.1/(1+1e-8).
  ParamStore params{{"w", Tensor::scalar(0.0)}};
  GradStore grads{{"w", Tensor::scalar(1.0)}};
  AdamState st;
  st.hyper.lr = 0.1;
  adam_step(params, grads, st);
  EXPECT_NEAR(params["w"].data[0], -0.1, 1e-7);
}

TEST(Adam, RepeatedUnitGradientDecreasesTwice) {
  ParamStore params{{"w", Tensor::scalar(1.0)}};
  GradStore grads{{"w", Tensor::scalar(1.0)}};
  AdamState st;
  double p0 = params["w"].data[0];
  adam_step(params, grads, st);
  double p1 = params["w"].data[0];
  adam_step(params, grads, st);
  double p2 = params["w"].data[0];
  EXPECT_LT(p1, p0);
  EXPECT_LT(p2, p1);
}

TEST(Adam, NanGradientRefusesStep) {
  ParamStore params{{"w", Tensor::scalar(1.0)}};
  GradStore grads{{"w", Tensor::scalar(std::nan(""))}};
  AdamState st;
  EXPECT_THROW(adam_step(params, grads, st), TrainingError);
  EXPECT_EQ(params["w"].data[0], 1.0);
  EXPECT_EQ(st.t, 0);
}

TEST(Adam, Deterministic) {
  auto run = [] {
    ParamStore params{{"w", make({3}, {0.2, -0.7, 1.1})}};
    AdamState st;
    Rng rng = Rng::stream(5, "adam_det", 0);
    for (int i = 0; i < 10; ++i) {
      GradStore grads{{"w", random_tensor({3}, rng)}};
      adam_step(params, grads, st);
    }
    return params["w"].data;
  };
  auto a = run();
  auto b = run();
  EXPECT_EQ(a, b);  // bit-identical
}

TEST(Elementwise, ReluAndConstStats) {
  Tape tape;
  Tensor y = relu(tape.constant(make({2}, {-1, 2}))).val();
  EXPECT_EQ(y.data[0], 0.0);
  EXPECT_EQ(y.data[1], 2.0);

  Var c = tape.constant(Tensor({4, 4}, 3.7));
  EXPECT_DOUBLE_EQ(mean(c).val().scalar_value(), 3.7);
  EXPECT_NEAR(variance(c).val().scalar_value(), 0.0, 1e-12);
}

TEST(Elementwise, NearestUpsampleReplicatesIndices) {
  Tape tape;
  Tensor y = nearest_upsample2(tape.constant(make({1, 2, 2}, {1, 2, 3, 4}))).val();
  std::vector<double> expect = {1, 1, 2, 2, 1, 1, 2, 2, 3, 3, 4, 4, 3, 3, 4, 4};
  EXPECT_EQ(y.data, expect);
}

TEST(Elementwise, ReshapeTransposeAreIndexBijections) {
  Tape tape;
  Rng rng = Rng::stream(9, "bijection", 0);
  Tensor x = random_tensor({3, 4}, rng);
  Var vx = tape.constant(x);
  Tensor back = reshape(reshape(vx, {4, 3}), {3, 4}).val();
  EXPECT_EQ(back.data, x.data);
  Tensor tt = transpose(transpose(vx)).val();
  EXPECT_EQ(tt.data, x.data);
}

TEST(Elementwise, ConcatNarrowRoundTrip) {
  Tape tape;
  Rng rng = Rng::stream(9, "concat", 0);
  Tensor x = random_tensor({4, 3, 2}, rng);
  Var vx = tape.constant(x);
  Var lo = narrow(vx, 0, 0, 2);
  Var hi = narrow(vx, 0, 2, 2);
  Tensor joined = concat({lo, hi}, 0).val();
  EXPECT_EQ(joined.data, x.data);
  EXPECT_THROW(narrow(vx, 0, 3, 2), ShapeError);
}

TEST(Elementwise, ShapeMismatchRejected) {
  Tape tape;
  Var a = tape.constant(Tensor({2, 3}));
  Var b = tape.constant(Tensor({3, 2}));
  EXPECT_THROW(add(a, b), ShapeError);
  EXPECT_THROW(mul(a, b), ShapeError);
}

TEST(SoftmaxCe, UniformLogitsGiveLogK) {
  Tape tape;
  Var logits = tape.constant(make({2}, {0.4, 0.4}));
  EXPECT_NEAR(softmax_ce(logits, 0).val().scalar_value(), std::log(2.0), 1e-12);
}

TEST(SoftmaxCe, SaturatedCorrectIsNearZero) {
  Tape tape;
  Var logits = tape.constant(make({2}, {10.0, -10.0}));
  EXPECT_LE(softmax_ce(logits, 0).val().scalar_value(), 1e-4);
  EXPECT_THROW(softmax_ce(logits, 2), LabelError);
}

TEST(Rng, StreamsAreStableAndIndependent) {
  Rng a = Rng::stream(42, "site", 3);
  Rng b = Rng::stream(42, "site", 3);
  Rng c = Rng::stream(42, "site", 4);
  double va = a.next_unit(), vb = b.next_unit(), vc = c.next_unit();
  EXPECT_EQ(va, vb);
  EXPECT_NE(va, vc);
}

TEST(Rng, NormalMomentsRoughlyStandard) {
  Rng rng = Rng::stream(42, "normal", 0);
  double s = 0, s2 = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    double v = rng.next_normal();
    s += v;
    s2 += v * v;
  }
  EXPECT_NEAR(s / n, 0.0, 0.03);
  EXPECT_NEAR(s2 / n, 1.0, 0.05);
}

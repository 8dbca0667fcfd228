#include <cmath>

#include <gtest/gtest.h>

#include "llapa/autodiff.hpp"
#include "llapa/error.hpp"
#include "llapa/parameters.hpp"
#include "llapa/rng.hpp"
#include "llapa/tensor.hpp"

using namespace llapa;

TEST(Tensor, MatmulMatchesTripleLoop) {
  Rng rng(11);
  const Tensor a = normal_tensor(rng, 3, 4, 1.0);
  const Tensor b = normal_tensor(rng, 4, 2, 1.0);
  const Tensor c = matmul(a, b);
  ASSERT_EQ(c.shape(), (Shape{3, 2}));
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 2; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < 4; ++k) s += a(i, k) * b(k, j);
      EXPECT_NEAR(c(i, j), s, 1e-12);
    }
  }
}

TEST(Tensor, MatmulRejectsMismatchedInner) {
  EXPECT_THROW(matmul(Tensor({2, 3}), Tensor({2, 3})), DimensionError);
}

TEST(Tensor, SoftmaxMatchesDirectFormula) {
  const Tensor x = Tensor::from_rows({{1.0, 2.0, 3.0}});
  const Tensor y = softmax_lastdim(x);
  const double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  EXPECT_NEAR(y[0], std::exp(1.0) / z, 1e-12);
  EXPECT_NEAR(y[1], std::exp(2.0) / z, 1e-12);
  EXPECT_NEAR(y[2], std::exp(3.0) / z, 1e-12);
}

TEST(Tensor, SoftmaxIsShiftStable) {
  const Tensor y = softmax_lastdim(Tensor::from_rows({{1000.0, 1001.0}, {-1e9, 0.0}}));
  EXPECT_TRUE(y.all_finite());
  EXPECT_NEAR(y(0, 1), 1.0 / (1.0 + std::exp(-1.0)), 1e-12);
  EXPECT_EQ(y(1, 0), 0.0);
  EXPECT_EQ(y(1, 1), 1.0);
}

TEST(Tensor, SigmoidOfOne) {
  EXPECT_NEAR(sigmoid(Tensor::scalar(1.0)).item(), 0.7310585786300049, 1e-15);
}

TEST(Tensor, RaggedRowsRejected) {
  EXPECT_THROW(Tensor::from_rows({{1.0, 2.0}, {3.0}}), DimensionError);
}

TEST(Rng, SameSeedSameStream) {
  Rng a(99), b(99);
  for (int i = 0; i < 100; ++i) EXPECT_EQ(a.next_u64(), b.next_u64());
}

TEST(Rng, ForkDoesNotAdvance) {
  Rng a(5), b(5);
  const Rng child = a.fork(3);
  EXPECT_EQ(a.counter(), 0u);
  EXPECT_EQ(a.next_u64(), b.next_u64());
  EXPECT_NE(child.seed(), a.seed());
  EXPECT_EQ(a.fork(3).seed(), child.seed());
}

TEST(Rng, UniformIntInRange) {
  Rng rng(1);
  std::vector<int> hits(7, 0);
  for (int i = 0; i < 7000; ++i) ++hits[rng.uniform_int(7)];
  for (int h : hits) EXPECT_GT(h, 800);
}

TEST(Adam, ReachesQuadraticMinimum) {
  ParameterStore store;
  store.add("x", Tensor::from_rows({{0.0, 0.0}}));
  const Tensor target = Tensor::from_rows({{0.3, -0.2}});
  double loss = 1.0;
  for (int step = 0; step < 200; ++step) {
    Tape tape;
    const Var d = add(tape.parameter(store, "x"), tape.constant(Tensor::from_rows({{-0.3, 0.2}})));
    const Var l = sum(mul(d, d));
    loss = l.value().item();
    backward(l, store);
    adam_step(store, AdamConfig{0.01});
  }
  const Tensor& x = store.value("x");
  const double final_loss = std::pow(x[0] - target[0], 2) + std::pow(x[1] - target[1], 2);
  EXPECT_LT(final_loss, 1e-6) << "last recorded loss " << loss;
}

TEST(Adam, RequiresBackwardFirst) {
  ParameterStore store;
  store.add("x", Tensor::scalar(1.0));
  EXPECT_THROW(adam_step(store), ContractError);
}

TEST(Adam, FrozenParametersUntouched) {
  ParameterStore store;
  store.add("a", Tensor::scalar(1.0));
  store.add("b", Tensor::scalar(2.0), false);
  Tape tape;
  backward(mul(tape.parameter(store, "a"), tape.parameter(store, "b")), store);
  adam_step(store);
  EXPECT_EQ(store.value("b").item(), 2.0);
  EXPECT_NE(store.value("a").item(), 1.0);
}

TEST(ClipGradNorm, RescalesToMaxNorm) {
  ParameterStore store;
  store.add("x", Tensor::from_rows({{3.0, 4.0}}));
  Tape tape;
  const Var x = tape.parameter(store, "x");
  backward(sum(mul(x, x)), store);  // gradient (6, 8), norm 10
  EXPECT_NEAR(clip_grad_norm(store, 1.0), 10.0, 1e-12);
  EXPECT_NEAR(store.at("x").grad[0], 0.6, 1e-12);
  EXPECT_NEAR(store.at("x").grad[1], 0.8, 1e-12);
}

TEST(ParameterStore, HashTracksValues) {
  ParameterStore store;
  store.add("a.w", Tensor::scalar(1.0));
  store.add("b.w", Tensor::scalar(2.0));
  const auto before = store.hash("a.");
  store.at("b.w").value[0] = 3.0;
  EXPECT_EQ(store.hash("a."), before);
  store.at("a.w").value[0] = 1.5;
  EXPECT_NE(store.hash("a."), before);
}

TEST(ParameterStore, DuplicateNameRejected) {
  ParameterStore store;
  store.add("a", Tensor::scalar(1.0));
  EXPECT_THROW(store.add("a", Tensor::scalar(2.0)), ContractError);
  EXPECT_THROW(store.at("missing"), ContractError);
}

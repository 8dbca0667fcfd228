#include <cmath>
#include <memory>

#include <gtest/gtest.h>

#include "gradcheck.hpp"
#include "llapa/autodiff.hpp"
#include "llapa/error.hpp"

using namespace llapa;
using llapa::testing::grad_check;

namespace {

ParameterStore random_store(std::uint64_t seed, std::initializer_list<std::pair<const char*, Shape>> specs) {
  Rng rng(seed);
  ParameterStore store;
  for (const auto& [name, shape] : specs) store.add(name, normal_tensor(rng, shape[0], shape[1], 1.0));
  return store;
}

void expect_grad_ok(ParameterStore& store, const llapa::testing::LossFn& fn) {
  const auto r = grad_check(store, fn, {""});
  EXPECT_LT(r.max_rel_error, 1e-6) << "worst " << r.worst;
  EXPECT_GT(r.nonzero, 0u);
}

}  // namespace

TEST(Autodiff, MatmulAddMulGradients) {
  auto store = random_store(1, {{"a", {3, 4}}, {"b", {4, 2}}, {"c", {3, 2}}});
  expect_grad_ok(store, [](Tape& t, ParameterStore& s) {
    const Var p = matmul(t.parameter(s, "a"), t.parameter(s, "b"));
    return sum(mul(add(p, t.parameter(s, "c")), p));
  });
}

TEST(Autodiff, NonlinearityGradients) {
  auto store = random_store(2, {{"x", {4, 5}}, {"r", {1, 5}}});
  expect_grad_ok(store, [](Tape& t, ParameterStore& s) {
    const Var x = add_row(t.parameter(s, "x"), t.parameter(s, "r"));
    return sum(mul(gelu(x), add(tanh(x), sigmoid(x))));
  });
}

TEST(Autodiff, SoftmaxLayerNormGradients) {
  auto store = random_store(3, {{"x", {3, 6}}, {"g", {1, 6}}, {"b", {1, 6}}, {"w", {3, 6}}});
  expect_grad_ok(store, [](Tape& t, ParameterStore& s) {
    const Var n = layer_norm(t.parameter(s, "x"), t.parameter(s, "g"), t.parameter(s, "b"));
    return sum(mul(softmax_lastdim(n), t.parameter(s, "w")));
  });
}

TEST(Autodiff, RowOpsGradients) {
  auto store = random_store(4, {{"t", {5, 3}}, {"u", {2, 3}}});
  expect_grad_ok(store, [](Tape& t, ParameterStore& s) {
    const Var g = gather_rows(t.parameter(s, "t"), {4, 0, 4, 2});
    const Var c = concat_rows({g, t.parameter(s, "u")});
    const Var m = mean_rows(slice_rows(c, 1, 4));
    const Var w = concat_cols({m, scale(m, 2.0)});
    return mean(mul(w, w));
  });
}

TEST(Autodiff, ScaleRowsGradient) {
  auto store = random_store(5, {{"x", {3, 2}}});
  expect_grad_ok(store, [](Tape& t, ParameterStore& s) {
    const Var y = scale_rows(t.parameter(s, "x"), {0.5, -1.0, 2.0});
    return sum(mul(y, y));
  });
}

TEST(Autodiff, AttentionWithBiasGradients) {
  auto store = random_store(6, {{"q", {5, 8}}, {"k", {5, 8}}, {"v", {5, 8}}});
  auto bias = std::make_shared<Tensor>(Shape{5, 5});
  for (std::size_t r = 0; r < 5; ++r) (*bias)(r, 3) = -1e9;
  expect_grad_ok(store, [bias](Tape& t, ParameterStore& s) {
    const Var o = attention(t.parameter(s, "q"), t.parameter(s, "k"), t.parameter(s, "v"), 2, bias, nullptr);
    return sum(mul(o, o));
  });
}

TEST(Autodiff, CrossEntropyGradients) {
  auto store = random_store(7, {{"z", {4, 6}}});
  expect_grad_ok(store, [](Tape& t, ParameterStore& s) { return cross_entropy(t.parameter(s, "z"), {0, 5, 2, 2}); });
}

TEST(Autodiff, BinaryCrossEntropyGradients) {
  auto store = random_store(8, {{"z", {3, 1}}});
  expect_grad_ok(store, [](Tape& t, ParameterStore& s) {
    return binary_cross_entropy(sigmoid(t.parameter(s, "z")), {1.0, 0.0, 1.0});
  });
}

TEST(Autodiff, LinearGradients) {
  auto store = random_store(9, {{"x", {3, 4}}, {"w", {4, 2}}, {"b", {1, 2}}});
  expect_grad_ok(store, [](Tape& t, ParameterStore& s) {
    const Var y = linear(t.parameter(s, "x"), t.parameter(s, "w"), t.parameter(s, "b"));
    return sum(mul(y, y));
  });
}

TEST(Autodiff, CrossEntropyValue) {
  Tape tape;
  const Var z = tape.constant(Tensor::from_rows({{0.0, 0.0, 0.0, 0.0}}));
  EXPECT_NEAR(cross_entropy(z, {1}).value().item(), std::log(4.0), 1e-12);
}

TEST(Autodiff, MaskedKeysGetNoProbability) {
  Rng rng(10);
  Tape tape;
  const Var q = tape.constant(normal_tensor(rng, 4, 4, 1.0));
  auto bias = std::make_shared<Tensor>(Shape{4, 4});
  for (std::size_t r = 0; r < 4; ++r) (*bias)(r, 0) = -1e9;
  std::vector<Tensor> probs;
  attention(q, q, q, 2, bias, &probs);
  ASSERT_EQ(probs.size(), 2u);
  for (const auto& p : probs) {
    for (std::size_t r = 0; r < 4; ++r) EXPECT_LT(p(r, 0), 1e-30);
  }
}

TEST(Autodiff, ParameterNodesAreShared) {
  ParameterStore store;
  store.add("w", Tensor::scalar(2.0));
  Tape tape;
  const Var a = tape.parameter(store, "w");
  const Var b = tape.parameter(store, "w");
  EXPECT_EQ(a.id(), b.id());
  backward(mul(a, b), store);
  EXPECT_NEAR(store.at("w").grad.item(), 4.0, 1e-12);
}

TEST(Autodiff, BackwardNeedsScalar) {
  Tape tape;
  EXPECT_THROW(tape.backward(tape.constant(Tensor({2, 2}))), ContractError);
}

TEST(Autodiff, ShapeErrors) {
  Tape tape;
  const Var a = tape.constant(Tensor({2, 3}));
  EXPECT_THROW(add(a, tape.constant(Tensor({3, 2}))), DimensionError);
  EXPECT_THROW(add_row(a, tape.constant(Tensor({1, 2}))), DimensionError);
  EXPECT_THROW(matmul(a, a), DimensionError);
}

TEST(Autodiff, MixingTapesRejected) {
  Tape t1, t2;
  EXPECT_THROW(add(t1.constant(Tensor({1, 1})), t2.constant(Tensor({1, 1}))), ContractError);
}

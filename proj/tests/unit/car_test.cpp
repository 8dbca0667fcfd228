#include <cmath>

#include <gtest/gtest.h>

#include "llapa/car.hpp"
#include "llapa/error.hpp"

using namespace llapa;

namespace {

encoders::FeatureMap random_features(std::uint64_t seed, std::size_t images, std::size_t P, std::size_t C) {
  Rng rng(seed);
  return {images, P, normal_tensor(rng, images * P * P, C, 1.0)};
}

}  // namespace

TEST(ConditionalPool, ZeroMaskGivesExactZeros) {
  const auto v = random_features(1, 2, 8, 6);
  const auto out = car::conditional_pool(v, maskgrid::PatchWeights(8, 2), 4);
  ASSERT_EQ(out.tokens.rows(), 32u);
  for (double x : out.tokens.data()) EXPECT_EQ(x, 0.0);
  for (std::size_t o : out.occupancy) EXPECT_EQ(o, 0u);
}

TEST(ConditionalPool, TwoSelectedPatchesAverage) {
  const auto v = random_features(2, 1, 8, 5);
  maskgrid::PatchWeights w(8, 1);
  // Sub-grid (0, 1) at K = 4 covers rows 0-1 and columns 2-3.
  w.at(0, 0, 2) = 1;
  w.at(0, 1, 3) = 1;
  const auto out = car::conditional_pool(v, w, 4);
  for (std::size_t c = 0; c < 5; ++c) {
    EXPECT_NEAR(out.tokens(1, c), 0.5 * (v.tokens(2, c) + v.tokens(11, c)), 1e-15);
  }
  EXPECT_EQ(out.occupancy[1], 2u);
  for (std::size_t g = 0; g < 16; ++g) {
    if (g == 1) continue;
    for (std::size_t c = 0; c < 5; ++c) EXPECT_EQ(out.tokens(g, c), 0.0);
  }
}

TEST(ConditionalPool, FullMaskEqualsAveragePooling) {
  for (std::size_t K : {2, 4, 8, 16}) {
    const std::size_t P = 16, C = 3, b = P / K;
    const auto v = random_features(K, 1, P, C);
    maskgrid::PatchWeights w(P, 1);
    std::fill(w.values.begin(), w.values.end(), 1);
    const auto out = car::conditional_pool(v, w, K);
    ASSERT_EQ(out.tokens.rows(), K * K);
    for (std::size_t gr = 0; gr < K; ++gr) {
      for (std::size_t gc = 0; gc < K; ++gc) {
        for (std::size_t c = 0; c < C; ++c) {
          double s = 0.0;
          for (std::size_t r = gr * b; r < (gr + 1) * b; ++r) {
            for (std::size_t q = gc * b; q < (gc + 1) * b; ++q) s += v.tokens(r * P + q, c);
          }
          ASSERT_NEAR(out.tokens(gr * K + gc, c), s / static_cast<double>(b * b), 1e-12);
        }
      }
    }
  }
}

TEST(ConditionalPool, TokenCountIsKSquaredPerImage) {
  for (std::size_t K : {2, 4, 8, 16}) {
    const auto v = random_features(3, 2, 16, 4);
    EXPECT_EQ(car::conditional_pool(v, maskgrid::PatchWeights(16, 2), K).tokens.rows(), 2 * K * K);
  }
}

TEST(ConditionalPool, TapeMatchesPlain) {
  const auto v = random_features(4, 2, 8, 4);
  Rng rng(5);
  maskgrid::PatchWeights w(8, 2);
  for (auto& x : w.values) x = rng.bernoulli(0.3) ? 1 : 0;
  Tape tape;
  const Var out = car::conditional_pool(tape.constant(v.tokens), w, 4);
  EXPECT_LT(max_abs_diff(out.value(), car::conditional_pool(v, w, 4).tokens), 1e-15);
}

TEST(ConditionalPool, KMustDivideP) {
  const auto v = random_features(6, 1, 8, 4);
  EXPECT_THROW(car::conditional_pool(v, maskgrid::PatchWeights(8, 1), 3), ConfigError);
  EXPECT_THROW(car::conditional_pool(v, maskgrid::PatchWeights(4, 1), 2), DimensionError);
}

TEST(SelectCtrf, StrictThresholdOneBased) {
  EXPECT_EQ(car::select_ctrf({0.9, 0.5, 0.51, 0.1}), (std::set<std::size_t>{1, 3}));
  EXPECT_TRUE(car::select_ctrf({}).empty());
  EXPECT_EQ(car::select_ctrf({0.2, 0.3}, 0.25), (std::set<std::size_t>{2}));
}

TEST(ClassifyClause, TapeMatchesPlainAndFormula) {
  Rng rng(7);
  ParameterStore p;
  car::add_params(p, rng, 4, 6);
  const encoders::ClauseEmbedding s0{0, normal_tensor(rng, 1, 4, 1.0)}, sk{1, normal_tensor(rng, 1, 4, 1.0)};
  const double prob = car::classify_clause(s0, sk, p);
  // sigmoid(tanh([s0 sk] W1 + b1) W2 + b2)
  const Tensor& w1 = p.value("car.cls.w1");
  const Tensor& b1 = p.value("car.cls.b1");
  const Tensor& w2 = p.value("car.cls.w2");
  double z = p.value("car.cls.b2")[0];
  for (std::size_t h = 0; h < 6; ++h) {
    double a = b1[h];
    for (std::size_t i = 0; i < 4; ++i) a += s0.vector[i] * w1(i, h) + sk.vector[i] * w1(4 + i, h);
    z += std::tanh(a) * w2(h, 0);
  }
  EXPECT_NEAR(prob, 1.0 / (1.0 + std::exp(-z)), 1e-12);
  Tape tape;
  const Var pv = car::classify_clause(tape, p, tape.constant(s0.vector), tape.constant(sk.vector));
  EXPECT_NEAR(pv.value().item(), prob, 1e-15);
}

TEST(ClassifyClause, WidthMismatchRejected) {
  Rng rng(8);
  ParameterStore p;
  car::add_params(p, rng, 4, 6);
  const encoders::ClauseEmbedding s0{0, Tensor({1, 4})}, sk{1, Tensor({1, 3})};
  EXPECT_THROW(car::classify_clause(s0, sk, p), DimensionError);
}

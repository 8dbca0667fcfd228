#include <gtest/gtest.h>

#include "llapa/error.hpp"
#include "llapa/maskgrid.hpp"
#include "llapa/rng.hpp"

using namespace llapa;
using namespace llapa::maskgrid;

namespace {

PixelMask random_mask(Rng& rng, std::size_t h, std::size_t w, double density) {
  PixelMask m(h, w);
  for (auto& v : m.values) v = rng.bernoulli(density) ? 1 : 0;
  return m;
}

PatchWeights random_weights(Rng& rng, std::size_t side, std::size_t images) {
  PatchWeights w(side, images);
  for (auto& v : w.values) v = rng.bernoulli(0.4) ? 1 : 0;
  return w;
}

}  // namespace

TEST(PoolMask, AllZeros) {
  const PatchWeights w = pool_mask(PixelMask(64, 64), 8);
  EXPECT_EQ(w.side, 8u);
  EXPECT_EQ(w.images, 1u);
  EXPECT_FALSE(w.any());
}

TEST(PoolMask, SinglePixelAtOrigin) {
  PixelMask m(64, 64);
  m.at(0, 0) = 1;
  const PatchWeights w = pool_mask(m, 8);
  EXPECT_EQ(w.count(), 1u);
  EXPECT_EQ(w.at(0, 0, 0), 1);
}

TEST(PoolMask, MatchesBlockMaxOnRandomMasks) {
  Rng rng(21);
  for (int trial = 0; trial < 100; ++trial) {
    const PixelMask m = random_mask(rng, 64, 64, trial % 2 ? 0.002 : 0.02);
    const PatchWeights w = pool_mask(m, 8);
    for (std::size_t br = 0; br < 8; ++br) {
      for (std::size_t bc = 0; bc < 8; ++bc) {
        std::uint8_t mx = 0;
        for (std::size_t r = 0; r < 8; ++r) {
          for (std::size_t c = 0; c < 8; ++c) mx = std::max(mx, m.at(br * 8 + r, bc * 8 + c));
        }
        ASSERT_EQ(w.at(0, br, bc), mx);
      }
    }
  }
}

TEST(PoolMask, RejectsNonDividingGrid) {
  EXPECT_THROW(pool_mask(PixelMask(64, 64), 7), ConfigError);
  EXPECT_THROW(pool_mask(PixelMask(64, 60), 8), ConfigError);
}

TEST(AggregateOr, Laws) {
  Rng rng(22);
  for (int trial = 0; trial < 100; ++trial) {
    const auto a = random_weights(rng, 8, 1), b = random_weights(rng, 8, 1), c = random_weights(rng, 8, 1);
    auto or2 = [](const PatchWeights& x, const PatchWeights& y) {
      const std::vector<PatchWeights> v{x, y};
      return aggregate_or(v);
    };
    ASSERT_EQ(or2(a, b), or2(b, a));
    ASSERT_EQ(or2(or2(a, b), c), or2(a, or2(b, c)));
    ASSERT_EQ(or2(a, a), a);
  }
}

TEST(AggregateOr, Errors) {
  EXPECT_THROW(aggregate_or({}), ContractError);
  const std::vector<PatchWeights> mixed{PatchWeights(8, 1), PatchWeights(4, 1)};
  EXPECT_THROW(aggregate_or(mixed), DimensionError);
}

TEST(GlobalMask, ImageOrderAndUnion) {
  Rng rng(23);
  std::vector<std::vector<PatchWeights>> per_clause(2);
  for (auto& row : per_clause) {
    for (int k = 0; k < 3; ++k) row.push_back(random_weights(rng, 4, 1));
  }
  const PatchWeights g = build_global_mask(per_clause);
  ASSERT_EQ(g.images, 2u);
  ASSERT_EQ(g.tokens(), 32u);
  std::size_t t = 0;
  for (std::size_t i = 0; i < 2; ++i) {
    for (std::size_t r = 0; r < 4; ++r) {
      for (std::size_t c = 0; c < 4; ++c, ++t) {
        std::uint8_t expect = 0;
        for (const auto& w : per_clause[i]) expect |= w.at(0, r, c);
        ASSERT_EQ(g.values[t], expect) << "token " << t;
      }
    }
  }
}

TEST(CtrfMask, SingleIndexEqualsThatClause) {
  Rng rng(24);
  std::vector<std::vector<PatchWeights>> per_clause(1);
  for (int k = 0; k < 3; ++k) per_clause[0].push_back(random_weights(rng, 8, 1));
  EXPECT_EQ(build_ctrf_mask(per_clause, {2}), per_clause[0][2]);
  EXPECT_FALSE(build_ctrf_mask(per_clause, {}).any());
  EXPECT_THROW(build_ctrf_mask(per_clause, {3}), ContractError);
}

TEST(GlobalMask, RaggedInputRejected) {
  std::vector<std::vector<PatchWeights>> per_clause{{PatchWeights(8, 1)}, {PatchWeights(8, 1), PatchWeights(8, 1)}};
  EXPECT_THROW(build_global_mask(per_clause), DimensionError);
}

TEST(Pgm, HeaderAndPayload) {
  PatchWeights w(2, 1);
  w.at(0, 1, 0) = 1;
  const std::string pgm = to_pgm(w, 0, 2);
  const std::string header = "P5\n4 4\n255\n";
  ASSERT_EQ(pgm.size(), header.size() + 16);
  EXPECT_EQ(pgm.substr(0, header.size()), header);
  EXPECT_EQ(static_cast<unsigned char>(pgm[header.size() + 8]), 255);
  EXPECT_EQ(static_cast<unsigned char>(pgm[header.size() + 2]), 0);
}

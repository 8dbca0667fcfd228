#pragma once

#include <set>
#include <vector>

#include "llapa/autodiff.hpp"
#include "llapa/encoders.hpp"
#include "llapa/maskgrid.hpp"
#include "llapa/parameters.hpp"

namespace llapa::car {

inline constexpr double kDefaultThreshold = 0.5;

// car.cls.w1 (2C x hidden), car.cls.b1, car.cls.w2 (hidden x 1), car.cls.b2.
void add_params(ParameterStore& store, Rng& rng, std::size_t channels, std::size_t hidden = 64);

/// sigmoid(MLP([s0; sk])) with a tanh hidden layer.
double classify_clause(const encoders::ClauseEmbedding& s0, const encoders::ClauseEmbedding& sk,
                       const ParameterStore& params);
Var classify_clause(Tape& tape, ParameterStore& params, const Var& s0, const Var& sk);

/// `probs[i]` belongs to clause i + 1; returns the 1-based indices with p > threshold.
std::set<std::size_t> select_ctrf(const std::vector<double>& probs, double threshold = kDefaultThreshold);

struct CtrfTokenSet {
  std::size_t images = 0;
  std::size_t grid = 0;            // K
  Tensor tokens;                   // (m * K^2) x C
  std::vector<std::size_t> occupancy;  // |Omega_g| per token
};

/// (m K^2) x (m P^2) matrix whose row g averages the live patches of sub-grid g
/// (all-zero row when none are live). Throws ConfigError unless K divides P.
Tensor pooling_matrix(const maskgrid::PatchWeights& w_cf, std::size_t K, std::vector<std::size_t>* occupancy = nullptr);

CtrfTokenSet conditional_pool(const encoders::FeatureMap& v_rerank, const maskgrid::PatchWeights& w_cf, std::size_t K);
Var conditional_pool(const Var& v_rerank, const maskgrid::PatchWeights& w_cf, std::size_t K);

}  // namespace llapa::car

#pragma once

#include <memory>
#include <vector>

#include "llapa/autodiff.hpp"
#include "llapa/encoders.hpp"
#include "llapa/maskgrid.hpp"
#include "llapa/parameters.hpp"

namespace llapa::ter {

inline constexpr double kMaskedLogit = -1e9;

struct TerConfig {
  std::size_t heads = 8;
  bool per_image = false;  // restrict attention to tokens of the same image
};

// ter.wq, ter.wk, ter.wv, ter.wo, each C x C (heads are column blocks).
void add_params(ParameterStore& store, Rng& rng, std::size_t channels);

/// Additive N x N logit bias: 0 on live keys, kMaskedLogit on masked ones.
/// An all-zero mask (per image in per-image mode) is treated as all ones and
/// reported through diagnostic().
std::shared_ptr<const Tensor> key_bias(const maskgrid::PatchWeights& weights, bool per_image);

/// softmax(Q K^T / sqrt(d) + log W) V, heads concatenated and output-projected.
/// No residual connection.
Var masked_self_attention(Tape& tape, ParameterStore& params, const Var& v, const maskgrid::PatchWeights& weights,
                          const TerConfig& config, std::vector<Tensor>* probs = nullptr);

encoders::FeatureMap masked_self_attention(const encoders::FeatureMap& v, const maskgrid::PatchWeights& weights,
                                           const ParameterStore& params, const TerConfig& config);

/// Per-head softmax matrices of the computation above, each N x N.
std::vector<Tensor> attention_weights(const encoders::FeatureMap& v, const maskgrid::PatchWeights& weights,
                                      const ParameterStore& params, const TerConfig& config);

}  // namespace llapa::ter

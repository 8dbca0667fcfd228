#include "llapa/ter.hpp"

#include <algorithm>
#include <cmath>

#include "llapa/diagnostics.hpp"
#include "llapa/error.hpp"

namespace llapa::ter {

namespace {

void check_shapes(const Tensor& v, const maskgrid::PatchWeights& weights, const ParameterStore& params,
                  const TerConfig& config) {
  if (v.rows() != weights.tokens()) {
    throw DimensionError("mask covers " + std::to_string(weights.tokens()) + " tokens but features have " +
                         std::to_string(v.rows()));
  }
  const Tensor& wq = params.value("ter.wq");
  if (wq.rows() != v.cols()) {
    throw DimensionError("feature width " + std::to_string(v.cols()) + " does not match projection " +
                         shape_str(wq.shape()));
  }
  if (config.heads == 0 || wq.cols() % config.heads != 0) {
    throw ConfigError("projection width " + std::to_string(wq.cols()) + " is not divisible into " +
                      std::to_string(config.heads) + " heads");
  }
}

void run_plain(const Tensor& v, const maskgrid::PatchWeights& weights, const ParameterStore& params,
               const TerConfig& config, Tensor& out, std::vector<Tensor>* probs) {
  check_shapes(v, weights, params, config);
  const auto bias = key_bias(weights, config.per_image);
  const Tensor q = matmul(v, params.value("ter.wq"));
  const Tensor k = matmul(v, params.value("ter.wk"));
  const Tensor val = matmul(v, params.value("ter.wv"));
  Tensor heads;
  kernels::attention_forward(q, k, val, config.heads, bias.get(), heads, probs);
  out = matmul(heads, params.value("ter.wo"));
}

}  // namespace

void add_params(ParameterStore& store, Rng& rng, std::size_t channels) {
  const double sd = 1.0 / std::sqrt(static_cast<double>(channels));
  for (const char* name : {"ter.wk", "ter.wo", "ter.wq", "ter.wv"}) {
    store.add(name, normal_tensor(rng, channels, channels, sd));
  }
}

std::shared_ptr<const Tensor> key_bias(const maskgrid::PatchWeights& weights, bool per_image) {
  const std::size_t n = weights.tokens(), per = weights.tokens_per_image();
  auto bias = std::make_shared<Tensor>(Shape{n, n});
  std::vector<std::uint8_t> live = weights.values;
  if (per_image) {
    for (std::size_t img = 0; img < weights.images; ++img) {
      auto b = live.begin() + static_cast<std::ptrdiff_t>(img * per);
      if (std::find(b, b + static_cast<std::ptrdiff_t>(per), std::uint8_t{1}) == b + static_cast<std::ptrdiff_t>(per)) {
        diagnostic("all-zero reranker mask on image " + std::to_string(img) + "; attending to every patch");
        std::fill(b, b + static_cast<std::ptrdiff_t>(per), std::uint8_t{1});
      }
    }
  } else if (!weights.any()) {
    diagnostic("all-zero reranker mask; attending to every patch");
    std::fill(live.begin(), live.end(), std::uint8_t{1});
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const bool visible = live[j] && (!per_image || i / per == j / per);
      (*bias)(i, j) = visible ? 0.0 : kMaskedLogit;
    }
  }
  return bias;
}

Var masked_self_attention(Tape& tape, ParameterStore& params, const Var& v, const maskgrid::PatchWeights& weights,
                          const TerConfig& config, std::vector<Tensor>* probs) {
  check_shapes(v.value(), weights, params, config);
  const auto bias = key_bias(weights, config.per_image);
  const Var q = matmul(v, tape.parameter(params, "ter.wq"));
  const Var k = matmul(v, tape.parameter(params, "ter.wk"));
  const Var val = matmul(v, tape.parameter(params, "ter.wv"));
  return matmul(attention(q, k, val, config.heads, bias, probs), tape.parameter(params, "ter.wo"));
}

encoders::FeatureMap masked_self_attention(const encoders::FeatureMap& v, const maskgrid::PatchWeights& weights,
                                           const ParameterStore& params, const TerConfig& config) {
  encoders::FeatureMap out{v.images, v.side, Tensor()};
  run_plain(v.tokens, weights, params, config, out.tokens, nullptr);
  return out;
}

std::vector<Tensor> attention_weights(const encoders::FeatureMap& v, const maskgrid::PatchWeights& weights,
                                      const ParameterStore& params, const TerConfig& config) {
  std::vector<Tensor> probs;
  Tensor out;
  run_plain(v.tokens, weights, params, config, out, &probs);
  return probs;
}

}  // namespace llapa::ter

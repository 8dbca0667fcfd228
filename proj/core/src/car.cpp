#include "llapa/car.hpp"

#include <cmath>

#include "llapa/error.hpp"

namespace llapa::car {

void add_params(ParameterStore& store, Rng& rng, std::size_t channels, std::size_t hidden) {
  store.add("car.cls.w1", normal_tensor(rng, 2 * channels, hidden, 1.0 / std::sqrt(2.0 * static_cast<double>(channels))));
  store.add("car.cls.b1", Tensor({1, hidden}));
  store.add("car.cls.w2", normal_tensor(rng, hidden, 1, 1.0 / std::sqrt(static_cast<double>(hidden))));
  store.add("car.cls.b2", Tensor({1, 1}));
}

double classify_clause(const encoders::ClauseEmbedding& s0, const encoders::ClauseEmbedding& sk,
                       const ParameterStore& params) {
  const std::size_t c = s0.vector.size();
  if (sk.vector.size() != c) {
    throw DimensionError("clause embedding widths differ: " + shape_str(s0.vector.shape()) + " vs " +
                         shape_str(sk.vector.shape()));
  }
  const Tensor& w1 = params.value("car.cls.w1");
  if (w1.rows() != 2 * c) {
    throw DimensionError("classifier expects input width " + std::to_string(w1.rows()) + ", got " +
                         std::to_string(2 * c));
  }
  Tensor x({1, 2 * c});
  for (std::size_t i = 0; i < c; ++i) {
    x[i] = s0.vector[i];
    x[c + i] = sk.vector[i];
  }
  Tensor h = matmul(x, w1);
  const Tensor& b1 = params.value("car.cls.b1");
  for (std::size_t i = 0; i < h.size(); ++i) h[i] = std::tanh(h[i] + b1[i]);
  Tensor z = matmul(h, params.value("car.cls.w2"));
  return sigmoid(Tensor::scalar(z[0] + params.value("car.cls.b2")[0])).item();
}

Var classify_clause(Tape& tape, ParameterStore& params, const Var& s0, const Var& sk) {
  if (s0.value().shape() != sk.value().shape()) {
    throw DimensionError("clause embedding widths differ: " + shape_str(s0.value().shape()) + " vs " +
                         shape_str(sk.value().shape()));
  }
  const Var x = concat_cols({s0, sk});
  const Var h = tanh(linear(x, tape.parameter(params, "car.cls.w1"), tape.parameter(params, "car.cls.b1")));
  return sigmoid(linear(h, tape.parameter(params, "car.cls.w2"), tape.parameter(params, "car.cls.b2")));
}

std::set<std::size_t> select_ctrf(const std::vector<double>& probs, double threshold) {
  std::set<std::size_t> out;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] > threshold) out.insert(i + 1);
  }
  return out;
}

Tensor pooling_matrix(const maskgrid::PatchWeights& w_cf, std::size_t K, std::vector<std::size_t>* occupancy) {
  const std::size_t P = w_cf.side;
  if (K == 0 || P % K != 0) {
    throw ConfigError("patch grid " + std::to_string(P) + " is not divisible by sub-grid count " + std::to_string(K));
  }
  const std::size_t cell = P / K, per_out = K * K;
  Tensor pool({w_cf.images * per_out, w_cf.tokens()});
  if (occupancy) occupancy->assign(w_cf.images * per_out, 0);
  for (std::size_t img = 0; img < w_cf.images; ++img) {
    for (std::size_t g = 0; g < per_out; ++g) {
      const std::size_t gr = g / K, gc = g % K, row = img * per_out + g;
      std::vector<std::size_t> live;
      for (std::size_t r = gr * cell; r < (gr + 1) * cell; ++r) {
        for (std::size_t c = gc * cell; c < (gc + 1) * cell; ++c) {
          if (w_cf.at(img, r, c)) live.push_back((img * P + r) * P + c);
        }
      }
      for (std::size_t t : live) pool(row, t) = 1.0 / static_cast<double>(live.size());
      if (occupancy) (*occupancy)[row] = live.size();
    }
  }
  return pool;
}

CtrfTokenSet conditional_pool(const encoders::FeatureMap& v_rerank, const maskgrid::PatchWeights& w_cf, std::size_t K) {
  if (v_rerank.tokens.rows() != w_cf.tokens()) {
    throw DimensionError("counterfactual mask covers " + std::to_string(w_cf.tokens()) + " tokens but features have " +
                         std::to_string(v_rerank.tokens.rows()));
  }
  CtrfTokenSet out;
  out.images = w_cf.images;
  out.grid = K;
  const Tensor pool = pooling_matrix(w_cf, K, &out.occupancy);
  out.tokens = matmul(pool, v_rerank.tokens);
  return out;
}

Var conditional_pool(const Var& v_rerank, const maskgrid::PatchWeights& w_cf, std::size_t K) {
  if (v_rerank.value().rows() != w_cf.tokens()) {
    throw DimensionError("counterfactual mask covers " + std::to_string(w_cf.tokens()) + " tokens but features have " +
                         std::to_string(v_rerank.value().rows()));
  }
  return matmul(v_rerank.tape().constant(pooling_matrix(w_cf, K)), v_rerank);
}

}  // namespace llapa::car

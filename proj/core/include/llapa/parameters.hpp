#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "llapa/rng.hpp"
#include "llapa/tensor.hpp"

namespace llapa {

struct Parameter {
  Tensor value;
  Tensor grad;
  Tensor adam_m;
  Tensor adam_v;
  bool trainable = true;
};

/// Named parameters keyed by dot-separated path. std::map keeps iteration
/// lexicographic so accumulation and serialization order never vary.
class ParameterStore {
 public:
  Parameter& add(const std::string& name, Tensor value, bool trainable = true);
  bool contains(const std::string& name) const { return params_.count(name) != 0; }
  Parameter& at(const std::string& name);
  const Parameter& at(const std::string& name) const;
  const Tensor& value(const std::string& name) const { return at(name).value; }

  std::vector<std::string> names() const;
  std::size_t size() const { return params_.size(); }

  // Flags every parameter whose name starts with `prefix`.
  void set_trainable(const std::string& prefix, bool trainable);
  void set_all_trainable(bool trainable);

  void zero_grad();
  void reset_optimizer();

  // FNV-1a over names and raw value bytes of parameters matching `prefix`.
  std::uint64_t hash(const std::string& prefix = "") const;

  std::size_t step() const { return step_; }
  bool grads_ready() const { return grads_ready_; }

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

 private:
  friend void mark_gradients_ready(ParameterStore&);
  friend void adam_step(ParameterStore&, double, double, double, double);

  std::map<std::string, Parameter> params_;
  std::size_t step_ = 0;
  bool grads_ready_ = false;
};

void mark_gradients_ready(ParameterStore& store);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam over trainable parameters; consumes the gradients
/// (they are zeroed afterwards). Throws ContractError if backward has not run.
void adam_step(ParameterStore& store, double lr, double beta1, double beta2, double eps);
inline void adam_step(ParameterStore& store, const AdamConfig& cfg = {}) {
  adam_step(store, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps);
}

/// Rescales all trainable gradients so their global L2 norm is at most
/// `max_norm`. Returns the norm before clipping.
double clip_grad_norm(ParameterStore& store, double max_norm);

// Initializers.
Tensor normal_tensor(Rng& rng, std::size_t rows, std::size_t cols, double stddev);

}  // namespace llapa

#include "llapa/parameters.hpp"

#include <cmath>
#include <cstring>

#include "llapa/error.hpp"

namespace llapa {

Parameter& ParameterStore::add(const std::string& name, Tensor value, bool trainable) {
  if (params_.count(name)) throw ContractError("duplicate parameter name: " + name);
  Parameter p;
  p.grad = Tensor(value.shape());
  p.adam_m = Tensor(value.shape());
  p.adam_v = Tensor(value.shape());
  p.value = std::move(value);
  p.trainable = trainable;
  return params_.emplace(name, std::move(p)).first->second;
}

Parameter& ParameterStore::at(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw ContractError("unknown parameter: " + name);
  return it->second;
}

const Parameter& ParameterStore::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw ContractError("unknown parameter: " + name);
  return it->second;
}

std::vector<std::string> ParameterStore::names() const {
  std::vector<std::string> out;
  out.reserve(params_.size());
  for (const auto& [name, _] : params_) out.push_back(name);
  return out;
}

void ParameterStore::set_trainable(const std::string& prefix, bool trainable) {
  for (auto& [name, p] : params_) {
    if (name.compare(0, prefix.size(), prefix) == 0) p.trainable = trainable;
  }
}

void ParameterStore::set_all_trainable(bool trainable) {
  for (auto& [_, p] : params_) p.trainable = trainable;
}

void ParameterStore::zero_grad() {
  for (auto& [_, p] : params_) p.grad.fill(0.0);
  grads_ready_ = false;
}

void ParameterStore::reset_optimizer() {
  for (auto& [_, p] : params_) {
    p.adam_m.fill(0.0);
    p.adam_v.fill(0.0);
  }
  step_ = 0;
}

std::uint64_t ParameterStore::hash(const std::string& prefix) const {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  auto feed = [&h](const void* bytes, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(bytes);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= p[i];
      h *= 0x100000001B3ULL;
    }
  };
  for (const auto& [name, p] : params_) {
    if (name.compare(0, prefix.size(), prefix) != 0) continue;
    feed(name.data(), name.size());
    feed(p.value.data().data(), p.value.size() * sizeof(double));
  }
  return h;
}

void mark_gradients_ready(ParameterStore& store) { store.grads_ready_ = true; }

void adam_step(ParameterStore& store, double lr, double beta1, double beta2, double eps) {
  if (!store.grads_ready_) throw ContractError("adam_step called before backward");
  ++store.step_;
  const double t = static_cast<double>(store.step_);
  const double c1 = 1.0 - std::pow(beta1, t);
  const double c2 = 1.0 - std::pow(beta2, t);
  for (auto& [_, p] : store.params_) {
    if (!p.trainable) continue;
    auto w = p.value.data();
    auto g = p.grad.data();
    auto m = p.adam_m.data();
    auto v = p.adam_v.data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
      v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
      w[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
    }
  }
  store.zero_grad();
}

double clip_grad_norm(ParameterStore& store, double max_norm) {
  double sq = 0.0;
  for (auto& [_, p] : store) {
    if (!p.trainable) continue;
    for (double g : p.grad.data()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double scale = max_norm / norm;
    for (auto& [_, p] : store) {
      if (!p.trainable) continue;
      for (double& g : p.grad.data()) g *= scale;
    }
  }
  return norm;
}

Tensor normal_tensor(Rng& rng, std::size_t rows, std::size_t cols, double stddev) {
  Tensor t = Tensor::zeros(rows, cols);
  for (double& v : t.data()) v = stddev * rng.normal();
  return t;
}

}  // namespace llapa

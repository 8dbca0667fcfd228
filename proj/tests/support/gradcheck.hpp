#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "llapa/autodiff.hpp"
#include "llapa/parameters.hpp"

namespace llapa::testing {

using LossFn = std::function<Var(Tape&, ParameterStore&)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst;  // "name[index]"
  std::size_t checked = 0;
  std::size_t nonzero = 0;
};

// Relative error with a floor on the denominator so that entries whose true
// gradient is ~0 are judged by absolute error instead.
inline double rel_error(double a, double n, double floor = 1e-4) {
  return std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor});
}

/// Compares tape gradients with central differences for every element of
/// every parameter whose name starts with one of `prefixes`.
inline GradCheckResult grad_check(ParameterStore& store, const LossFn& loss_fn, const std::vector<std::string>& prefixes,
                                  double step = 1e-5) {
  auto selected = [&](const std::string& name) {
    return std::any_of(prefixes.begin(), prefixes.end(), [&](const std::string& p) { return name.rfind(p, 0) == 0; });
  };
  store.set_all_trainable(false);
  for (const auto& p : prefixes) store.set_trainable(p, true);
  store.zero_grad();
  {
    Tape tape;
    backward(loss_fn(tape, store), store);
  }
  auto eval = [&] {
    Tape tape;
    return loss_fn(tape, store).value().item();
  };
  GradCheckResult out;
  for (auto& [name, param] : store) {
    if (!selected(name)) continue;
    const Tensor analytic = param.grad;
    for (std::size_t i = 0; i < param.value.size(); ++i) {
      const double orig = param.value[i];
      param.value[i] = orig + step;
      const double up = eval();
      param.value[i] = orig - step;
      const double down = eval();
      param.value[i] = orig;
      const double numeric = (up - down) / (2.0 * step);
      const double a = analytic.empty() ? 0.0 : analytic[i];
      const double err = rel_error(a, numeric);
      ++out.checked;
      if (std::abs(a) > 1e-9) ++out.nonzero;
      if (err > out.max_rel_error) {
        out.max_rel_error = err;
        out.worst = name + "[" + std::to_string(i) + "]";
      }
    }
  }
  store.zero_grad();
  store.set_all_trainable(true);
  return out;
}

}  // namespace llapa::testing

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "diforge/autodiff.hpp"

namespace diforge::ad {

/// Builds a scalar loss on a fresh tape from leaves holding `inputs`.
using ScalarFn = std::function<Tape<double>::Var(Tape<double>&, const std::vector<Tape<double>::Var>&)>;

/// |a - n| / max(|a|, |n|, 1e-8).
inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-8});
}

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_input = 0;
  Index worst_coord = 0;
  std::size_t checked = 0;
};

/// Central-difference check of every gradient `fn` produces. `include`
/// optionally restricts the coordinates that are compared.
inline GradCheckResult grad_check(const ScalarFn& fn, std::vector<Tensor<double>> inputs, double eps,
                                  const std::function<bool(std::size_t, Index)>& include = {}) {
  require(eps > 0.0, Errc::invalid_argument, "grad_check: eps must be positive");

  const auto evaluate = [&](bool with_grad, std::vector<Tensor<double>>* grads) {
    Tape<double> tape;
    std::vector<Tape<double>::Var> vars;
    for (const auto& in : inputs) vars.push_back(tape.leaf(in, true));
    const auto loss = fn(tape, vars);
    const double value = tape.value(loss).array()[0];
    if (with_grad) {
      tape.backward(loss);
      for (auto v : vars) grads->push_back(tape.grad(v));
    }
    return value;
  };

  std::vector<Tensor<double>> analytic;
  evaluate(true, &analytic);

  GradCheckResult result;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    for (Index j = 0; j < inputs[i].size(); ++j) {
      if (include && !include(i, j)) continue;
      double& x = inputs[i].array()[j];
      const double saved = x;
      x = saved + eps;
      const double plus = evaluate(false, nullptr);
      x = saved - eps;
      const double minus = evaluate(false, nullptr);
      x = saved;
      const double err = relative_error(analytic[i].array()[j], (plus - minus) / (2.0 * eps));
      ++result.checked;
      if (err > result.max_rel_error) {
        result.max_rel_error = err;
        result.worst_input = i;
        result.worst_coord = j;
      }
    }
  }
  return result;
}

}  // namespace diforge::ad

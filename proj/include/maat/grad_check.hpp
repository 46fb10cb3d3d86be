#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "maat/error.hpp"
#include "maat/tape.hpp"

namespace maat {

// Scalar-valued function of several tensors, built on the supplied tape.
using MultiScalarFn = std::function<Var(Tape&, std::span<const Var>)>;
using ScalarFn = std::function<Var(Tape&, const Var&)>;

// Denominator floor for the relative error; keeps coordinates whose true
// gradient is zero from reporting round-off as a large relative error.
inline constexpr double kGradCheckFloor = 1e-6;

inline double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), kGradCheckFloor});
  return std::abs(analytic - numeric) / denom;
}

// Max relative error between tape gradients and central finite differences,
// over every coordinate of every input.
inline double grad_check(const MultiScalarFn& f, const std::vector<Tensor>& inputs, double eps = 1e-4) {
  if (!(eps >= 1e-6 && eps <= 1e-3)) throw ContractError("grad_check: eps must lie in [1e-6, 1e-3]");

  auto evaluate = [&](const std::vector<Tensor>& xs) {
    Tape tape;
    std::vector<Var> vars;
    vars.reserve(xs.size());
    for (const Tensor& x : xs) vars.push_back(tape.constant(x));
    const Var out = f(tape, vars);
    if (out.value().size() != 1) throw ContractError("grad_check: function is not scalar-valued");
    return out.value()[0];
  };

  std::vector<Tensor> analytic;
  {
    Tape tape;
    std::vector<Var> vars;
    for (const Tensor& x : inputs) vars.push_back(tape.variable(x));
    const Var out = f(tape, vars);
    if (out.value().size() != 1) throw ContractError("grad_check: function is not scalar-valued");
    const Gradients grads = tape.backward(out);
    for (const Var& v : vars) analytic.push_back(grads.of(v));
  }

  double worst = 0.0;
  std::vector<Tensor> probe = inputs;
  for (std::size_t k = 0; k < probe.size(); ++k) {
    for (std::size_t i = 0; i < probe[k].size(); ++i) {
      const double orig = probe[k][i];
      probe[k][i] = orig + eps;
      const double up = evaluate(probe);
      probe[k][i] = orig - eps;
      const double down = evaluate(probe);
      probe[k][i] = orig;
      const double numeric = (up - down) / (2.0 * eps);
      worst = std::max(worst, relative_error(analytic[k][i], numeric));
    }
  }
  return worst;
}

inline double grad_check(const ScalarFn& f, const Tensor& x, double eps = 1e-4) {
  return grad_check([&](Tape& t, std::span<const Var> v) { return f(t, v[0]); },
                    std::vector<Tensor>{x}, eps);
}

}  // namespace maat

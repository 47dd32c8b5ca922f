// SPDX-License-Identifier: Apache-2.0
// Central finite-difference oracle for graph gradients.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include <dyslat/neural/graph.hpp>
#include <dyslat/neural/ops.hpp>
#include <dyslat/rng.hpp>

namespace dyslat::test_grad {

using Builder =
  std::function<nn::Var(nn::Graph &, const std::vector<nn::Var> &)>;

inline nn::Tensor random_tensor(nn::Shape shape, Rng &rng, double lo = -1.0,
                                double hi = 1.0) {
  nn::Tensor t(std::move(shape));
  for (double &v : t.data())
    v = rng.uniform(lo, hi);
  return t;
}

/// Reduces any output to a scalar with fixed random weights so that every
/// output entry contributes a distinct amount.
inline nn::Var weighted_sum(nn::Var y, std::uint64_t seed) {
  Rng rng(seed);
  nn::Tensor w(nn::Shape{y.value().size()});
  for (double &v : w.data())
    v = rng.uniform(0.5, 1.5);
  nn::Var flat = nn::reshape(y, nn::Shape{y.value().size()});
  return nn::matmul(flat, y.graph().constant(std::move(w)), true, false);
}

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
};

/// Compares backward() against (f(x+h) - f(x-h)) / 2h for every entry of
/// every input. Relative error is |a - n| / max(|a|, |n|, floor).
inline GradCheckResult check_gradients(const std::vector<nn::Tensor> &inputs,
                                       const Builder &build, double h = 1e-5,
                                       double floor = 1e-6) {
  auto evaluate = [&](const std::vector<nn::Tensor> &xs) {
    nn::Graph g;
    std::vector<nn::Var> vars;
    for (const auto &x : xs)
      vars.push_back(g.constant(x));
    return build(g, vars).value()[0];
  };

  nn::Graph g;
  std::vector<nn::Var> vars;
  for (const auto &x : inputs)
    vars.push_back(g.variable(x));
  nn::Var loss = build(g, vars);
  g.backward(loss);

  GradCheckResult result;
  std::vector<nn::Tensor> probe = inputs;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const nn::Tensor analytic =
      g.has_grad(vars[i]) ? g.grad(vars[i]) : nn::Tensor::zeros_like(inputs[i]);
    for (std::size_t j = 0; j < inputs[i].size(); ++j) {
      const double saved = probe[i][j];
      probe[i][j] = saved + h;
      const double up = evaluate(probe);
      probe[i][j] = saved - h;
      const double down = evaluate(probe);
      probe[i][j] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[j];
      const double denom = std::max({std::abs(a), std::abs(numeric), floor});
      result.max_relative_error =
        std::max(result.max_relative_error, std::abs(a - numeric) / denom);
      ++result.checked;
    }
  }
  return result;
}

} // namespace dyslat::test_grad

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>
#include <vector>

#include "rarelab/core/autograd.hpp"

namespace rarelab::core {

struct GradCheckOptions {
  double step = 1e-3;
  /// Coordinates sampled per input; all of them when the input is smaller.
  std::size_t max_coordinates = 24;
  std::uint64_t seed = 0;
};

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t coordinates = 0;
};

/// Compares reverse-mode gradients of `f` with respect to `inputs` against
/// central differences. `f` must rebuild its graph on every call.
///
/// Error per coordinate is |analytic - numeric| / max(1e-8, |analytic| + |numeric|).
template <typename Real>
GradCheckResult grad_check(const std::function<Var<Real>()>& f,
                           const std::vector<Var<Real>>& inputs,
                           const GradCheckOptions& options = {}) {
  for (const auto& in : inputs) {
    if (!in.requires_grad()) {
      throw DomainError("grad_check input does not require gradients");
    }
    in.node()->value.ensure_grad();
    in.node()->value.zero_grad();
  }
  backward(f());

  std::vector<std::vector<Real>> analytic;
  for (const auto& in : inputs) {
    auto g = in.value().grad();
    analytic.emplace_back(g.begin(), g.end());
  }

  std::mt19937_64 rng(options.seed);
  GradCheckResult result;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    auto& values = inputs[k].node()->value.values();
    std::vector<std::size_t> coords(values.size());
    std::iota(coords.begin(), coords.end(), 0);
    if (coords.size() > options.max_coordinates) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(options.max_coordinates);
    }
    for (std::size_t i : coords) {
      const Real saved = values[i];
      values[i] = saved + static_cast<Real>(options.step);
      const double plus = static_cast<double>(f().item());
      values[i] = saved - static_cast<Real>(options.step);
      const double minus = static_cast<double>(f().item());
      values[i] = saved;
      const double numeric = (plus - minus) / (2.0 * options.step);
      const double exact = static_cast<double>(analytic[k][i]);
      const double denom = std::max(1e-8, std::abs(exact) + std::abs(numeric));
      result.max_relative_error =
          std::max(result.max_relative_error, std::abs(exact - numeric) / denom);
      ++result.coordinates;
    }
  }
  for (const auto& in : inputs) in.node()->value.zero_grad();
  return result;
}

template <typename Real>
GradCheckResult grad_check(const std::function<Var<Real>()>& f,
                           const ParameterList<Real>& params,
                           const GradCheckOptions& options = {}) {
  std::vector<Var<Real>> inputs;
  for (auto* p : params) inputs.push_back(p->var());
  return grad_check(f, inputs, options);
}

}  // namespace rarelab::core

#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include "seqxfer/autodiff.hpp"

namespace seqxfer {

/// Builds a scalar loss on a fresh tape from the given parameter values.
/// Must be pure and deterministic.
using LossFn = std::function<Var(Tape&, const ParamStore&)>;

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  std::size_t coordinates_checked = 0;
};

/// Compares reverse-mode gradients against central differences
/// (f(p+eps) - f(p-eps)) / (2 eps) on up to `samples` coordinates drawn
/// uniformly over every trainable parameter (all coordinates when fewer).
/// Relative error is |a - n| / max(|a|, |n|, 1e-6).
GradCheckResult finite_difference_check(const LossFn& loss_fn, ParamStore params, double eps = 1e-5,
                                        std::size_t samples = 100, std::uint64_t seed = 0);

}  // namespace seqxfer

#include "seqxfer/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "seqxfer/numerics.hpp"

namespace seqxfer {

namespace {

double evaluate(const LossFn& loss_fn, const ParamStore& params) {
  Tape tape;
  return loss_fn(tape, params).value().item();
}

}  // namespace

GradCheckResult finite_difference_check(const LossFn& loss_fn, ParamStore params, double eps,
                                        std::size_t samples, std::uint64_t seed) {
  Gradients analytic;
  {
    Tape tape;
    Var loss = loss_fn(tape, params);
    analytic = tape.backward(loss);
  }

  std::vector<std::pair<std::string, std::size_t>> coords;
  for (const auto& [name, g] : analytic) {
    for (std::size_t i = 0; i < g.size(); ++i) coords.emplace_back(name, i);
  }
  if (coords.size() > samples) {
    Rng rng(seed);
    rng.shuffle(coords);
    coords.resize(samples);
  }

  GradCheckResult result;
  for (const auto& [name, index] : coords) {
    double& slot = params.at(name)[index];
    const double original = slot;
    slot = original + eps;
    const double up = evaluate(loss_fn, params);
    slot = original - eps;
    const double down = evaluate(loss_fn, params);
    slot = original;

    const double numeric = (up - down) / (2.0 * eps);
    const double a = analytic.at(name)[index];
    const double err = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-6});
    if (err >= result.max_relative_error) {
      result.max_relative_error = err;
      result.worst_parameter = name;
      result.worst_index = index;
    }
    ++result.coordinates_checked;
  }
  return result;
}

}  // namespace seqxfer

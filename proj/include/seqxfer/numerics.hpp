#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "seqxfer/tensor.hpp"

namespace seqxfer {

/// Seeded splitmix64 generator. Draws avoid std:: distributions so sequences
/// are identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next();
  /// Uniform in [0, 1).
  double uniform();
  /// Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n).
  std::size_t below(std::size_t n);

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[below(i)]);
    }
  }

 private:
  std::uint64_t state_;
};

/// Mixes a base seed with a stream tag so independent consumers never share draws.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream);

double logsumexp(std::span<const double> values);

enum class InitScheme { kGlorotUniform, kZeros, kConstant };

/// Deterministic in (shape, scheme, seed). Glorot draws from
/// U(-sqrt(6/(fan_in+fan_out)), +sqrt(...)) with fan_out = shape[0] and
/// fan_in = product of the remaining dimensions (fan_in = fan_out for rank 1).
Tensor seeded_init(const Shape& shape, InitScheme scheme, std::uint64_t seed,
                   double constant = 0.0);

struct AdamConfig {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::uint64_t step = 0;
  ParamStore first_moment;
  ParamStore second_moment;
};

/// One bias-corrected Adam step over every parameter that has a gradient.
/// Parameters without an entry in `grads` are left untouched.
void adam_update(ParamStore& params, const Gradients& grads, AdamState& state);

/// Rescales all gradients so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
double clip_global_norm(Gradients& grads, double max_norm);

}  // namespace seqxfer

#include "seqxfer/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "seqxfer/errors.hpp"

namespace seqxfer {

std::uint64_t Rng::next() {
  // splitmix64
  std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

double Rng::uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

std::size_t Rng::below(std::size_t n) {
  if (n == 0) throw ContractError("Rng::below requires n > 0");
  return static_cast<std::size_t>((static_cast<unsigned __int128>(next()) * n) >> 64);
}

std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream) {
  std::uint64_t h = 1469598103934665603ULL ^ seed;
  for (unsigned char c : stream) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  Rng mixer(h);
  return mixer.next();
}

double logsumexp(std::span<const double> values) {
  if (values.empty()) throw ContractError("logsumexp of an empty sequence");
  double hi = -std::numeric_limits<double>::infinity();
  for (double v : values) {
    if (!std::isfinite(v)) throw NumericError("logsumexp input is not finite");
    hi = std::max(hi, v);
  }
  double acc = 0.0;
  for (double v : values) acc += std::exp(v - hi);
  return hi + std::log(acc);
}

Tensor seeded_init(const Shape& shape, InitScheme scheme, std::uint64_t seed, double constant) {
  if (shape.empty()) throw ContractError("seeded_init requires a non-empty shape");
  Tensor out(shape);
  switch (scheme) {
    case InitScheme::kZeros:
      break;
    case InitScheme::kConstant:
      out.fill(constant);
      break;
    case InitScheme::kGlorotUniform: {
      const double fan_out = static_cast<double>(shape[0]);
      const double fan_in =
          shape.size() == 1 ? fan_out : static_cast<double>(shape_size(shape) / shape[0]);
      const double bound = std::sqrt(6.0 / (fan_in + fan_out));
      Rng rng(seed);
      for (auto& v : out.values()) v = rng.uniform(-bound, bound);
      break;
    }
  }
  return out;
}

void adam_update(ParamStore& params, const Gradients& grads, AdamState& state) {
  for (const auto& [name, g] : grads) {
    auto it = params.find(name);
    if (it == params.end()) throw ContractError("gradient for unknown parameter " + name);
    if (it->second.shape() != g.shape()) {
      throw ContractError("gradient shape " + shape_string(g.shape()) + " does not match parameter " +
                          name + " " + shape_string(it->second.shape()));
    }
    auto [m_it, m_new] = state.first_moment.try_emplace(name, Tensor(g.shape()));
    auto [v_it, v_new] = state.second_moment.try_emplace(name, Tensor(g.shape()));
    if (m_it->second.shape() != g.shape() || v_it->second.shape() != g.shape()) {
      throw ContractError("Adam moment shape mismatch for " + name);
    }
  }

  state.step += 1;
  const auto& c = state.config;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(c.beta1, t);
  const double correction2 = 1.0 - std::pow(c.beta2, t);

  for (const auto& [name, g] : grads) {
    auto& p = params.at(name).values();
    auto& m = state.first_moment.at(name).values();
    auto& v = state.second_moment.at(name).values();
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      p[i] -= c.lr * m_hat / (std::sqrt(v_hat) + c.epsilon);
    }
  }
}

double clip_global_norm(Gradients& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& [_, g] : grads) {
    for (double x : g.values()) sq += x * x;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double scale = max_norm / norm;
    for (auto& [_, g] : grads) {
      for (auto& x : g.values()) x *= scale;
    }
  }
  return norm;
}

}  // namespace seqxfer

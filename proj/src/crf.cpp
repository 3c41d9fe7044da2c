#include "seqxfer/crf.hpp"

#include <cmath>
#include <memory>

#include "seqxfer/errors.hpp"
#include "seqxfer/numerics.hpp"

namespace seqxfer {

namespace {

std::size_t check_layout(const Tensor& emissions, const Tensor& transitions) {
  if (emissions.rank() != 2 || emissions.empty()) throw ContractError("CRF emissions must be a non-empty matrix");
  const std::size_t m = emissions.cols();
  if (transitions.rank() != 2 || transitions.rows() != m + 2 || transitions.cols() != m + 2) {
    throw ContractError("CRF transitions must be [" + std::to_string(m + 2) + ", " + std::to_string(m + 2) +
                        "], got " + shape_string(transitions.shape()));
  }
  return m;
}

// alpha[t][j]: log-sum of all prefixes ending in j at t (emission included).
std::vector<double> forward_table(const Tensor& e, const Tensor& tr, std::size_t m) {
  const std::size_t n = e.rows();
  std::vector<double> alpha(n * m);
  for (std::size_t j = 0; j < m; ++j) alpha[j] = tr.at(crf_start(m), j) + e.at(0, j);
  std::vector<double> terms(m);
  for (std::size_t t = 1; t < n; ++t) {
    for (std::size_t j = 0; j < m; ++j) {
      for (std::size_t i = 0; i < m; ++i) terms[i] = alpha[(t - 1) * m + i] + tr.at(i, j);
      alpha[t * m + j] = logsumexp(terms) + e.at(t, j);
    }
  }
  return alpha;
}

// beta[t][i]: log-sum of all suffixes after position t given label i at t.
std::vector<double> backward_table(const Tensor& e, const Tensor& tr, std::size_t m) {
  const std::size_t n = e.rows();
  std::vector<double> beta(n * m);
  for (std::size_t i = 0; i < m; ++i) beta[(n - 1) * m + i] = tr.at(i, crf_stop(m));
  std::vector<double> terms(m);
  for (std::size_t t = n - 1; t-- > 0;) {
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < m; ++j) terms[j] = tr.at(i, j) + e.at(t + 1, j) + beta[(t + 1) * m + j];
      beta[t * m + i] = logsumexp(terms);
    }
  }
  return beta;
}

}  // namespace

double crf_sequence_score(const Tensor& emissions, const Tensor& transitions, std::span<const std::size_t> tags) {
  const std::size_t m = check_layout(emissions, transitions);
  if (tags.size() != emissions.rows()) {
    throw ContractError("CRF needs one tag per emission row: " + std::to_string(tags.size()) + " tags for " +
                        std::to_string(emissions.rows()) + " rows");
  }
  for (auto t : tags) {
    if (t >= m) throw ContractError("tag index " + std::to_string(t) + " out of range for " + std::to_string(m) + " labels");
  }
  double score = transitions.at(crf_start(m), tags[0]);
  for (std::size_t k = 0; k < tags.size(); ++k) {
    score += emissions.at(k, tags[k]);
    if (k + 1 < tags.size()) score += transitions.at(tags[k], tags[k + 1]);
  }
  return score + transitions.at(tags.back(), crf_stop(m));
}

double crf_log_partition(const Tensor& emissions, const Tensor& transitions) {
  const std::size_t m = check_layout(emissions, transitions);
  const auto alpha = forward_table(emissions, transitions, m);
  const std::size_t last = emissions.rows() - 1;
  std::vector<double> terms(m);
  for (std::size_t j = 0; j < m; ++j) terms[j] = alpha[last * m + j] + transitions.at(j, crf_stop(m));
  return logsumexp(terms);
}

std::vector<std::size_t> viterbi_decode(const Tensor& emissions, const Tensor& transitions) {
  const std::size_t m = check_layout(emissions, transitions);
  const std::size_t n = emissions.rows();
  std::vector<double> best(m);
  std::vector<double> next(m);
  std::vector<std::size_t> back(n * m, 0);
  for (std::size_t j = 0; j < m; ++j) best[j] = transitions.at(crf_start(m), j) + emissions.at(0, j);
  for (std::size_t t = 1; t < n; ++t) {
    for (std::size_t j = 0; j < m; ++j) {
      std::size_t arg = 0;
      double top = best[0] + transitions.at(0, j);
      for (std::size_t i = 1; i < m; ++i) {
        const double s = best[i] + transitions.at(i, j);
        if (s > top) {
          top = s;
          arg = i;
        }
      }
      next[j] = top + emissions.at(t, j);
      back[t * m + j] = arg;
    }
    std::swap(best, next);
  }
  std::size_t arg = 0;
  double top = best[0] + transitions.at(0, crf_stop(m));
  for (std::size_t j = 1; j < m; ++j) {
    const double s = best[j] + transitions.at(j, crf_stop(m));
    if (s > top) {
      top = s;
      arg = j;
    }
  }
  std::vector<std::size_t> path(n);
  path[n - 1] = arg;
  for (std::size_t t = n - 1; t > 0; --t) path[t - 1] = back[t * m + path[t]];
  return path;
}

Var crf_nll(Var emissions, Var transitions, std::span<const std::size_t> tags) {
  Tape& tape = *emissions.tape;
  const Tensor& e = emissions.value();
  const Tensor& tr = transitions.value();
  const std::size_t m = check_layout(e, tr);
  const std::size_t n = e.rows();
  const double gold = crf_sequence_score(e, tr, tags);
  auto alpha = std::make_shared<std::vector<double>>(forward_table(e, tr, m));
  std::vector<double> terms(m);
  for (std::size_t j = 0; j < m; ++j) terms[j] = (*alpha)[(n - 1) * m + j] + tr.at(j, crf_stop(m));
  const double log_z = logsumexp(terms);

  std::vector<std::size_t> path(tags.begin(), tags.end());
  return tape.record(
      Tensor::scalar(log_z - gold), {emissions, transitions},
      [&tape, e_id = emissions.id, tr_id = transitions.id, alpha, log_z, path, m, n](
          const Tensor& g, std::span<Tensor* const> gi) {
        const Tensor& e = tape.value(e_id);
        const Tensor& tr = tape.value(tr_id);
        const auto beta = backward_table(e, tr, m);
        const double s = g[0];
        const auto& a = *alpha;
        if (gi[0]) {
          Tensor& ge = *gi[0];
          for (std::size_t t = 0; t < n; ++t) {
            for (std::size_t j = 0; j < m; ++j) ge.at(t, j) += s * std::exp(a[t * m + j] + beta[t * m + j] - log_z);
            ge.at(t, path[t]) -= s;
          }
        }
        if (gi[1]) {
          Tensor& gt = *gi[1];
          for (std::size_t j = 0; j < m; ++j) {
            // The first-position marginal equals exp(alpha_0 + beta_0 - log Z).
            gt.at(crf_start(m), j) += s * std::exp(a[j] + beta[j] - log_z);
            gt.at(j, crf_stop(m)) += s * std::exp(a[(n - 1) * m + j] + beta[(n - 1) * m + j] - log_z);
          }
          for (std::size_t t = 0; t + 1 < n; ++t) {
            for (std::size_t i = 0; i < m; ++i) {
              for (std::size_t j = 0; j < m; ++j) {
                gt.at(i, j) += s * std::exp(a[t * m + i] + tr.at(i, j) + e.at(t + 1, j) + beta[(t + 1) * m + j] - log_z);
              }
            }
          }
          gt.at(crf_start(m), path[0]) -= s;
          gt.at(path[n - 1], crf_stop(m)) -= s;
          for (std::size_t t = 0; t + 1 < n; ++t) gt.at(path[t], path[t + 1]) -= s;
        }
      });
}

Tensor bio_transition_mask(std::span<const std::string> labels) {
  const std::size_t m = labels.size();
  Tensor mask({m + 2, m + 2}, 1.0);
  auto inside_of = [](const std::string& l) -> std::string {
    return l.size() > 2 && l[0] == 'I' && l[1] == '-' ? l.substr(2) : std::string{};
  };
  auto entity_of = [](const std::string& l) -> std::string {
    return l.size() > 2 && (l[0] == 'B' || l[0] == 'I') && l[1] == '-' ? l.substr(2) : std::string{};
  };
  for (std::size_t i = 0; i < m + 2; ++i) {
    mask.at(i, crf_start(m)) = 0.0;
    mask.at(crf_stop(m), i) = 0.0;
  }
  mask.at(crf_start(m), crf_stop(m)) = 0.0;
  for (std::size_t j = 0; j < m; ++j) {
    const std::string inside = inside_of(labels[j]);
    if (inside.empty()) continue;
    mask.at(crf_start(m), j) = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      if (entity_of(labels[i]) != inside) mask.at(i, j) = 0.0;
    }
  }
  return mask;
}

}  // namespace seqxfer

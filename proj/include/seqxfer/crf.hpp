#pragma once

#include <span>
#include <string>
#include <vector>

#include "seqxfer/autodiff.hpp"

namespace seqxfer {

// Linear-chain CRF over m labels. Transition matrices are [(m+2), (m+2)]:
// indices 0..m-1 are labels, m is START and m+1 is STOP; entry (i, j)
// scores moving from i to j.

inline std::size_t crf_start(std::size_t labels) { return labels; }
inline std::size_t crf_stop(std::size_t labels) { return labels + 1; }

/// Score assigned to transitions that break the BIO grammar.
inline constexpr double kForbiddenTransition = -1e4;

/// Sum of emission scores along `tags` plus START->first, consecutive and
/// last->STOP transitions.
double crf_sequence_score(const Tensor& emissions, const Tensor& transitions, std::span<const std::size_t> tags);

/// log of the sum over every tag sequence of exp(score), via the forward recursion.
double crf_log_partition(const Tensor& emissions, const Tensor& transitions);

/// Highest-scoring sequence. Ties resolve to the lowest label index at
/// each backtracking step (last position first).
std::vector<std::size_t> viterbi_decode(const Tensor& emissions, const Tensor& transitions);

/// log Z - score(tags), differentiable in emissions and transitions.
Var crf_nll(Var emissions, Var transitions, std::span<const std::size_t> tags);

/// 1 where a transition respects BIO (including START/STOP), 0 where it
/// must stay at kForbiddenTransition. Non-BIO labels are unconstrained.
Tensor bio_transition_mask(std::span<const std::string> labels);

}  // namespace seqxfer

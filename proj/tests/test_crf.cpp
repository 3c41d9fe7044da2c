#include <cmath>

#include "doctest.h"
#include "oracles.hpp"
#include "seqxfer/crf.hpp"
#include "seqxfer/errors.hpp"
#include "seqxfer/gradcheck.hpp"
#include "seqxfer/numerics.hpp"

using namespace seqxfer;

namespace {

Tensor random_matrix(Rng& rng, std::size_t r, std::size_t c, bool integral) {
  Tensor t({r, c});
  for (auto& v : t.values()) v = integral ? static_cast<double>(rng.below(3)) : rng.uniform(-2.0, 2.0);
  return t;
}

}  // namespace

TEST_CASE("crf partition and decode agree with enumeration") {
  Rng rng(2024);
  int instances = 0;
  for (int trial = 0; trial < 600; ++trial) {
    const bool integral = trial % 2 == 1;  // small integers create exact ties
    const std::size_t n = 1 + rng.below(5);
    const std::size_t m = 1 + rng.below(4);
    const Tensor e = random_matrix(rng, n, m, integral);
    const Tensor tr = random_matrix(rng, m + 2, m + 2, integral);
    const auto oracle = oracles::enumerate_crf(e, tr);
    CHECK(std::abs(crf_log_partition(e, tr) - oracle.log_partition) < 1e-9);
    CHECK(viterbi_decode(e, tr) == oracle.best);
    CHECK(crf_sequence_score(e, tr, oracle.best) <= oracle.log_partition + 1e-12);
    ++instances;
  }
  CHECK(instances >= 500);
}

TEST_CASE("crf examples") {
  SUBCASE("single label, single token") {
    Tensor e = Tensor::matrix(1, 1, {0.7});
    Tensor tr = Tensor::matrix(3, 3, {0.0, 0.0, 0.2, 0.1, 0.0, 0.0, 0.0, 0.0, 0.0});
    CHECK(crf_log_partition(e, tr) == doctest::Approx(0.1 + 0.7 + 0.2).epsilon(1e-14));
    CHECK(viterbi_decode(e, tr) == std::vector<std::size_t>{0});
  }
  SUBCASE("all-zero scores tie towards label 0") {
    Tensor e({3, 2}, 0.0);
    Tensor tr({4, 4}, 0.0);
    CHECK(viterbi_decode(e, tr) == std::vector<std::size_t>{0, 0, 0});
    CHECK(crf_log_partition(e, tr) == doctest::Approx(3.0 * std::log(2.0)));
  }
  SUBCASE("layout errors") {
    Tensor e({2, 3}, 0.0);
    CHECK_THROWS_AS(crf_log_partition(e, Tensor({4, 4}, 0.0)), ContractError);
    const std::vector<std::size_t> short_tags{0};
    CHECK_THROWS_AS(crf_sequence_score(e, Tensor({5, 5}, 0.0), short_tags), ContractError);
    const std::vector<std::size_t> bad{0, 3};
    CHECK_THROWS_AS(crf_sequence_score(e, Tensor({5, 5}, 0.0), bad), ContractError);
  }
}

TEST_CASE("crf negative log-likelihood gradients") {
  Rng rng(5);
  for (int trial = 0; trial < 5; ++trial) {
    const std::size_t n = 1 + rng.below(5);
    const std::size_t m = 2 + rng.below(3);
    ParamStore params{{"e", random_matrix(rng, n, m, false)}, {"tr", random_matrix(rng, m + 2, m + 2, false)}};
    std::vector<std::size_t> tags(n);
    for (auto& t : tags) t = rng.below(m);
    auto fn = [tags](Tape& t, const ParamStore& p) {
      return crf_nll(t.parameter("e", p.at("e")), t.parameter("tr", p.at("tr")), tags);
    };
    CHECK(finite_difference_check(fn, params, 1e-5, 200).max_relative_error < 1e-4);

    Tape tape;
    Var nll = fn(tape, params);
    CHECK(nll.value().item() == doctest::Approx(crf_log_partition(params.at("e"), params.at("tr")) -
                                                crf_sequence_score(params.at("e"), params.at("tr"), tags)));
    CHECK(nll.value().item() >= 0.0);
  }
}

TEST_CASE("BIO transition mask") {
  const std::vector<std::string> labels{"O", "B-LOC", "I-LOC", "B-PER", "I-PER"};
  const Tensor mask = bio_transition_mask(labels);
  const std::size_t start = 5, stop = 6;
  CHECK(mask.at(start, 0) == 1.0);
  CHECK(mask.at(start, 1) == 1.0);
  CHECK(mask.at(start, 2) == 0.0);
  CHECK(mask.at(0, 2) == 0.0);
  CHECK(mask.at(1, 2) == 1.0);
  CHECK(mask.at(2, 2) == 1.0);
  CHECK(mask.at(3, 2) == 0.0);
  CHECK(mask.at(4, 2) == 0.0);
  CHECK(mask.at(4, 4) == 1.0);
  CHECK(mask.at(2, 3) == 1.0);
  CHECK(mask.at(2, stop) == 1.0);
  CHECK(mask.at(start, stop) == 0.0);
  for (std::size_t i = 0; i < 7; ++i) {
    CHECK(mask.at(i, start) == 0.0);
    CHECK(mask.at(stop, i) == 0.0);
  }

  SUBCASE("forbidden scores keep decoding well formed") {
    Tensor tr({7, 7}, 0.0);
    for (std::size_t i = 0; i < 7; ++i)
      for (std::size_t j = 0; j < 7; ++j)
        if (mask.at(i, j) == 0.0) tr.at(i, j) = kForbiddenTransition;
    // emissions strongly prefer I-PER after O
    Tensor e = Tensor::matrix(2, 5, {5, 0, 0, 0, 0, 0, 0, 0, 3, 4});
    CHECK(viterbi_decode(e, tr) == std::vector<std::size_t>{0, 3});
  }
}

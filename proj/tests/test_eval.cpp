#include <algorithm>

#include "doctest.h"
#include "fixtures.hpp"
#include "seqxfer/errors.hpp"
#include "seqxfer/eval.hpp"
#include "seqxfer/numerics.hpp"

using namespace seqxfer;

namespace {

LabeledSequence S(std::vector<std::string> tokens, std::vector<std::string> tags) { return {tokens, tags}; }

std::vector<LabeledSequence> one(LabeledSequence s) { return {std::move(s)}; }

}  // namespace

TEST_CASE("span_f1 examples") {
  const auto gold = S({"a", "b", "c", "d", "e"}, {"B-PER", "I-PER", "O", "B-LOC", "O"});
  SUBCASE("identical predictions") {
    auto m = span_f1(one(gold), one(gold));
    CHECK(m.micro.precision() == 100.0);
    CHECK(m.micro.recall() == 100.0);
    CHECK(m.micro.f1() == 100.0);
  }
  SUBCASE("one boundary error") {
    auto pred = S(gold.tokens, {"B-PER", "I-PER", "O", "B-LOC", "I-LOC"});
    auto m = span_f1(one(gold), one(pred));
    CHECK(m.micro == SpanCounts{1, 1, 1});
    CHECK(format_percent(m.micro.precision()) == "50.00");
    CHECK(format_percent(m.micro.recall()) == "50.00");
    CHECK(format_percent(m.micro.f1()) == "50.00");
  }
  SUBCASE("all-O predictions") {
    auto pred = S(gold.tokens, std::vector<std::string>(5, "O"));
    auto m = span_f1(one(gold), one(pred));
    CHECK(m.micro.precision() == 0.0);
    CHECK(m.micro.recall() == 0.0);
    CHECK(m.micro.f1() == 0.0);
  }
  SUBCASE("duplicate predictions match one gold span") {
    auto g = S({"a"}, {"B-PER"});
    std::vector<LabeledSequence> golds{g, g};
    auto m = span_f1(golds, golds);
    CHECK(m.micro == SpanCounts{2, 0, 0});
  }
  SUBCASE("misaligned corpora name the sentence") {
    std::vector<LabeledSequence> g{gold, gold};
    std::vector<LabeledSequence> p{gold, S({"a"}, {"O"})};
    try {
      span_f1(g, p);
      FAIL("expected a ContractError");
    } catch (const ContractError& e) {
      CHECK(std::string(e.what()).find("sentence 1") != std::string::npos);
    }
    CHECK_THROWS_AS(span_f1(g, one(gold)), ContractError);
  }
  SUBCASE("malformed gold is rejected") {
    auto bad = S({"a"}, {"I-PER"});
    CHECK_THROWS_AS(span_f1(one(bad), one(bad)), DataError);
  }
}

TEST_CASE("crafted suite matches hand counts") {
  const auto suite = fixtures::crafted_suite();
  const auto m = span_f1(suite.gold, suite.pred);
  CHECK(m.per_type.at("PER") == SpanCounts{2, 1, 2});
  CHECK(m.per_type.at("LOC") == SpanCounts{3, 2, 2});
  CHECK(m.per_type.at("ORG") == SpanCounts{1, 2, 1});
  CHECK(m.per_type.at("MISC") == SpanCounts{0, 1, 0});
  CHECK(m.micro == SpanCounts{6, 6, 5});
  CHECK(format_percent(m.micro.precision()) == "50.00");
  CHECK(format_percent(m.micro.recall()) == "54.55");
  CHECK(format_percent(m.micro.f1()) == "52.17");
  CHECK(m.per_type.at("PER").f1() == doctest::Approx(400.0 / 7.0));
  CHECK(m.per_type.at("ORG").f1() == doctest::Approx(40.0));
  CHECK(m.per_type.at("MISC").f1() == 0.0);

  const std::string text = format_metrics(m, "crafted");
  CHECK(text.find("metric=f1 type=micro value=52.17") != std::string::npos);
}

TEST_CASE("scoring in contiguous form gives identical metrics") {
  const auto suite = fixtures::crafted_suite();
  const auto gold = fixtures::contiguous_corpus_to_bio(fixtures::to_contiguous(suite.gold));
  const auto pred = fixtures::contiguous_corpus_to_bio(fixtures::to_contiguous(suite.pred));
  CHECK(span_f1(gold, pred) == span_f1(suite.gold, suite.pred));
}

TEST_CASE("span_f1 is invariant to sentence order") {
  const auto suite = fixtures::crafted_suite();
  const auto reference = span_f1(suite.gold, suite.pred);
  Rng rng(11);
  std::vector<std::size_t> order(suite.gold.size());
  for (int trial = 0; trial < 20; ++trial) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);
    std::vector<LabeledSequence> g, p;
    for (auto i : order) {
      g.push_back(suite.gold[i]);
      p.push_back(suite.pred[i]);
    }
    CHECK(span_f1(g, p) == reference);
  }
}

TEST_CASE("F1 never decreases when a true positive is added") {
  for (std::size_t tp = 0; tp < 20; ++tp) {
    for (std::size_t fp = 0; fp < 20; ++fp) {
      for (std::size_t fn = 0; fn < 20; ++fn) {
        CHECK(SpanCounts{tp + 1, fp, fn}.f1() >= SpanCounts{tp, fp, fn}.f1());
      }
    }
  }
}

TEST_CASE("annotation_quality scores silver against clean") {
  const auto suite = fixtures::crafted_suite();
  CHECK(annotation_quality(suite.pred, suite.gold) == span_f1(suite.gold, suite.pred));
  CHECK(annotation_quality(suite.gold, suite.gold).micro.f1() == 100.0);
}

TEST_CASE("vocab_overlap") {
  using Corpus = std::vector<std::vector<std::string>>;
  SUBCASE("set arithmetic") {
    Corpus a{{"a", "b"}, {"c"}};
    Corpus b{{"b", "c", "d"}, {"e", "b"}};
    CHECK(vocab_overlap(a, b) == 0.5);
    CHECK(vocab_overlap(a, b, {OverlapNormalization::kSource, false}) == 2.0 / 3.0);
  }
  SUBCASE("identical and disjoint") {
    Corpus a{{"x", "y"}};
    Corpus b{{"z"}};
    CHECK(vocab_overlap(a, a) == 1.0);
    CHECK(vocab_overlap(a, b) == 0.0);
  }
  SUBCASE("case folding is opt-in") {
    Corpus a{{"jakarta"}};
    Corpus b{{"Jakarta"}};
    CHECK(vocab_overlap(a, b) == 0.0);
    CHECK(vocab_overlap(a, b, {OverlapNormalization::kReference, true}) == 1.0);
  }
}

TEST_CASE("word_tag_overlap") {
  SUBCASE("tag is part of the join") {
    auto a = one(S({"Paris"}, {"B-PER"}));
    auto b = one(S({"Paris"}, {"B-LOC"}));
    auto rates = word_tag_overlap(a, b);
    CHECK(rates.at("LOC") == 0.0);
    CHECK(rates.count("PER") == 0);
  }
  SUBCASE("identical corpora") {
    const auto suite = fixtures::crafted_suite();
    for (const auto& [type, rate] : word_tag_overlap(suite.gold, suite.gold)) CHECK(rate == 1.0);
  }
  SUBCASE("crafted six-word corpora") {
    // reference words: Paris/LOC, is/O, big/O, Obama/PER, Paris/PER, Jakarta/LOC
    std::vector<LabeledSequence> ref{S({"Paris", "is", "big"}, {"B-LOC", "O", "O"}),
                                     S({"Obama", "Paris", "Jakarta"}, {"B-PER", "B-PER", "B-LOC"})};
    // source pairs: Paris/PER, is/O, small/O, obama/PER, Jakarta/LOCATION
    std::vector<LabeledSequence> src{S({"Paris", "is", "small"}, {"B-PER", "O", "O"}),
                                     S({"obama", "Jakarta"}, {"B-PER", "B-LOCATION"})};
    auto rates = word_tag_overlap(src, ref);
    CHECK(rates.at("LOC") == 0.5);  // {Paris, Jakarta} vs {Jakarta}
    CHECK(rates.at("O") == 0.5);    // {is, big} vs {is, small}
    CHECK(rates.at("PER") == 0.5);  // {Obama, Paris} vs {Paris, obama}
    auto folded = word_tag_overlap(src, ref, {OverlapNormalization::kReference, true});
    CHECK(folded.at("PER") == 1.0);

    auto words = [](const std::vector<LabeledSequence>& c) { return tokens_of(c); };
    // reference vocabulary {Paris, is, big, Obama, Jakarta}; source adds small, obama
    CHECK(vocab_overlap(words(src), words(ref)) == 3.0 / 5.0);
    CHECK(vocab_overlap(words(src), words(ref), {OverlapNormalization::kSource, false}) == 3.0 / 5.0);
    CHECK(vocab_overlap(words(src), words(ref), {OverlapNormalization::kReference, true}) == 4.0 / 5.0);
  }
}

TEST_CASE("canonical_type") {
  CHECK(canonical_type("PERSON") == "PER");
  CHECK(canonical_type("LOCATION") == "LOC");
  CHECK(canonical_type("ORGANIZATION") == "ORG");
  CHECK(canonical_type("MISC") == "MISC");
}

TEST_CASE("entity_counts separates mentions from tokens") {
  const auto suite = fixtures::crafted_suite();
  const auto counts = entity_counts(suite.gold);
  CHECK(counts.at("PER") == EntityCount{4, 6});
  CHECK(counts.at("LOC") == EntityCount{5, 7});
  CHECK(counts.at("ORG") == EntityCount{2, 4});
  CHECK(counts.count("MISC") == 0);
  // Predicted LOC: "Bandung sejuk", repaired "Kota Medan", repaired "Aminah", "Solo", "Jawa Timur".
  CHECK(entity_counts(suite.pred).at("LOC") == EntityCount{5, 8});
  CHECK(format_entity_counts(counts, "gold").find("metric=entity_tokens corpus=gold type=ORG value=4") !=
        std::string::npos);
}

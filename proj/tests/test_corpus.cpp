#include <sstream>

#include "doctest.h"
#include "seqxfer/corpus.hpp"
#include "seqxfer/errors.hpp"
#include "seqxfer/numerics.hpp"

using namespace seqxfer;

namespace {

std::vector<std::string> V(std::initializer_list<const char*> items) { return {items.begin(), items.end()}; }

}  // namespace

TEST_CASE("read_conll") {
  SUBCASE("mixed tabs and spaces") {
    std::istringstream in("John B-PER\n.\tO\n\n");
    auto s = read_conll(in);
    REQUIRE(s.size() == 1);
    CHECK(s[0].tokens == V({"John", "."}));
    CHECK(s[0].tags == V({"B-PER", "O"}));
  }
  SUBCASE("repeated blank lines") {
    std::istringstream in("a O\n\n\nb O\n\n\n");
    CHECK(read_conll(in).size() == 2);
  }
  SUBCASE("ragged line reports its line number") {
    std::istringstream in("John\n");
    try {
      read_conll(in);
      FAIL("expected a DataError");
    } catch (const DataError& e) {
      CHECK(std::string(e.what()).find("line 1") != std::string::npos);
    }
  }
  SUBCASE("empty input") {
    std::istringstream in("");
    CHECK(read_conll(in).empty());
  }
  SUBCASE("other columns") {
    std::istringstream in("x John NNP B-PER\n");
    auto s = read_conll(in, 1, 3);
    CHECK(s[0].tokens == V({"John"}));
    CHECK(s[0].tags == V({"B-PER"}));
  }
  SUBCASE("writer round trip up to whitespace") {
    const std::string text = "John B-PER\nSmith I-PER\n\nParis B-LOC\n\n";
    std::istringstream in("John\tB-PER\nSmith   I-PER\n\n\nParis B-LOC");
    auto s = read_conll(in);
    std::ostringstream out;
    write_conll(out, s);
    CHECK(out.str() == text);
    std::istringstream again(out.str());
    CHECK(read_conll(again) == s);
  }
}

TEST_CASE("contiguous_to_bio") {
  CHECK(contiguous_to_bio(V({"PER", "PER", "O", "LOC"})) == V({"B-PER", "I-PER", "O", "B-LOC"}));
  CHECK(contiguous_to_bio(V({"PER", "LOC"})) == V({"B-PER", "B-LOC"}));
  CHECK(contiguous_to_bio(V({"O", "O"})) == V({"O", "O"}));

  SUBCASE("output is always strict-legal") {
    Rng rng(3);
    const std::vector<std::string> alphabet{"O", "PER", "LOC", "ORG"};
    for (int trial = 0; trial < 300; ++trial) {
      std::vector<std::string> raw(1 + rng.below(12));
      for (auto& t : raw) t = alphabet[rng.below(alphabet.size())];
      const auto bio = contiguous_to_bio(raw);
      CHECK_NOTHROW(bio_to_spans(bio, false));
    }
  }
}

TEST_CASE("bio_to_spans") {
  using S = EntitySpan;
  CHECK(bio_to_spans(V({"B-PER", "I-PER", "O", "B-LOC"})) == std::vector<S>{{"PER", 0, 2}, {"LOC", 3, 4}});
  CHECK(bio_to_spans(V({"I-PER", "O"}), true) == std::vector<S>{{"PER", 0, 1}});
  CHECK(bio_to_spans(V({"B-PER", "I-LOC"}), true) == std::vector<S>{{"PER", 0, 1}, {"LOC", 1, 2}});
  try {
    bio_to_spans(V({"O", "I-LOC"}));
    FAIL("expected a DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("position 1") != std::string::npos);
  }
  CHECK_THROWS_AS(bio_to_spans(V({"B-PER", "I-LOC"})), DataError);
  CHECK_THROWS_AS(bio_to_spans(V({"X"})), DataError);

  SUBCASE("spans_to_bio inverts legal sequences; repair is idempotent") {
    Rng rng(5);
    const std::vector<std::string> alphabet{"O", "B-PER", "I-PER", "B-LOC", "I-LOC"};
    for (int trial = 0; trial < 300; ++trial) {
      std::vector<std::string> tags(1 + rng.below(10));
      for (auto& t : tags) t = alphabet[rng.below(alphabet.size())];
      const auto repaired_spans = bio_to_spans(tags, true);
      const auto repaired = spans_to_bio(repaired_spans, tags.size());
      CHECK(bio_to_spans(repaired, false) == repaired_spans);
      CHECK(spans_to_bio(bio_to_spans(repaired, true), tags.size()) == repaired);
    }
  }
}

TEST_CASE("build_vocab") {
  std::vector<std::vector<std::string>> seqs{V({"a", "b", "a"})};
  auto v2 = build_vocab(seqs, 2);
  CHECK(v2.entries().size() == 1);
  CHECK(v2.entries()[0] == "a");
  auto v1 = build_vocab(seqs, 1);
  CHECK(v1.entries().size() == 2);
  CHECK(v1.id("zzz") == Vocabulary::kUnk);
  CHECK(v1.size() == 6);
  CHECK_THROWS_AS(build_vocab(seqs, 0), ContractError);

  std::vector<std::vector<std::string>> shuffled{V({"b", "a"}), V({"a"})};
  CHECK(build_vocab(shuffled, 1) == v1);
}

TEST_CASE("code point ordering and UTF-8 splitting") {
  CHECK(utf8_chars("año") == V({"a", "ñ", "o"}));
  CHECK(utf8_chars("\xFF") == V({"\xEF\xBF\xBD"}));
  Vocabulary v(Vocabulary::Kind::kChar, V({"é", "z", "a", "Z"}));
  CHECK(std::vector<std::string>(v.entries().begin(), v.entries().end()) == V({"Z", "a", "z", "é"}));
}

TEST_CASE("load_word_vectors") {
  std::vector<std::vector<std::string>> seqs{V({"cat", "dog"})};
  auto vocab = build_vocab(seqs, 1);
  SUBCASE("full coverage") {
    std::istringstream in("cat 1 2\ndog 3 4\nbird 5 6\n");
    auto wv = load_word_vectors(in, vocab, 2, 1);
    CHECK(wv.coverage == 1.0);
    CHECK(wv.embeddings.at(static_cast<std::size_t>(vocab.id("dog")), 1) == 4.0);
  }
  SUBCASE("empty file") {
    std::istringstream in("");
    auto wv = load_word_vectors(in, vocab, 2, 1);
    CHECK(wv.coverage == 0.0);
    CHECK(wv.embeddings == seeded_init({vocab.size(), 2}, InitScheme::kGlorotUniform, 1));
  }
  SUBCASE("wrong arity names the line") {
    std::istringstream in("cat 1 2\ndog 3\n");
    try {
      load_word_vectors(in, vocab, 2, 1);
      FAIL("expected a DataError");
    } catch (const DataError& e) {
      CHECK(std::string(e.what()).find("line 2") != std::string::npos);
    }
  }
  SUBCASE("malformed float") {
    std::istringstream in("cat 1 x2\n");
    CHECK_THROWS_AS(load_word_vectors(in, vocab, 2, 1), DataError);
  }
}

TEST_CASE("lm_batches") {
  std::vector<std::vector<std::string>> corpus{V({"t1", "t2", "t3"})};
  auto words = build_vocab(corpus, 1);
  std::vector<std::vector<std::vector<std::string>>> corpora{corpus};
  auto chars = build_char_vocab(corpora);
  auto batches = lm_batches(corpus, words, chars, 4, 8, 1);
  REQUIRE(batches.size() == 1);
  const auto& b = batches[0];
  CHECK(b.forward_targets == std::vector<int>{words.id("t2"), words.id("t3"), Vocabulary::kEos});
  CHECK(b.backward_targets == std::vector<int>{Vocabulary::kBos, words.id("t1"), words.id("t2")});
  CHECK(b.mask == std::vector<bool>{true, true, true});

  SUBCASE("conservation and determinism") {
    std::vector<std::vector<std::string>> big;
    Rng rng(9);
    std::size_t tokens = 0;
    for (int i = 0; i < 37; ++i) {
      std::vector<std::string> s(1 + rng.below(9), "w" + std::to_string(i % 5));
      tokens += s.size();
      big.push_back(s);
    }
    auto wv = build_vocab(big, 1);
    auto a = lm_batches(big, wv, chars, 5, 8, 4);
    auto a2 = lm_batches(big, wv, chars, 5, 8, 4);
    std::size_t unmasked = 0;
    for (const auto& x : a) unmasked += x.unmasked();
    CHECK(unmasked == tokens);
    REQUIRE(a.size() == a2.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].forward_targets == a2[i].forward_targets);
  }
}

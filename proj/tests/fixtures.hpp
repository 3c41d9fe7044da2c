#pragma once

#include <string>
#include <vector>

#include "seqxfer/corpus.hpp"
#include "seqxfer/numerics.hpp"

namespace seqxfer::fixtures {

/// Ten gold/predicted sentence pairs covering exact hits, boundary errors,
/// type errors and predictions that only parse after repair. Every entity
/// is representable in contiguous (prefix-free) form.
///
/// Hand counts (tp/fp/fn): PER 2/1/2, LOC 3/2/2, ORG 1/2/1, MISC 0/1/0,
/// micro 6/6/5.
struct CraftedSuite {
  std::vector<LabeledSequence> gold;
  std::vector<LabeledSequence> pred;
};

inline CraftedSuite crafted_suite() {
  struct Row {
    std::vector<std::string> tokens, gold, pred;
  };
  const std::vector<Row> rows = {
      // exact hit
      {{"Budi", "Santoso", "tidur"}, {"B-PER", "I-PER", "O"}, {"B-PER", "I-PER", "O"}},
      // predicted span too long
      {{"Bandung", "sejuk"}, {"B-LOC", "O"}, {"B-LOC", "I-LOC"}},
      // predicted span too short
      {{"Bank", "Rakyat", "Indonesia"}, {"B-ORG", "I-ORG", "I-ORG"}, {"B-ORG", "I-ORG", "O"}},
      // right boundary, wrong type
      {{"Gudang"}, {"B-PER"}, {"B-ORG"}},
      // leading I- repaired into a correct span
      {{"Kota", "Medan", "ramai"}, {"B-LOC", "I-LOC", "O"}, {"I-LOC", "I-LOC", "O"}},
      // type switch inside a span splits it in two
      {{"Siti", "Aminah"}, {"B-PER", "I-PER"}, {"B-PER", "I-LOC"}},
      // missed entity
      {{"di", "Bali"}, {"O", "B-LOC"}, {"O", "O"}},
      // spurious entity
      {{"hari", "ini"}, {"O", "O"}, {"B-MISC", "O"}},
      // adjacent entities of different types
      {{"Joko", "Solo"}, {"B-PER", "B-LOC"}, {"B-PER", "B-LOC"}},
      // two hits
      {{"Pertamina", "di", "Jawa", "Timur"}, {"B-ORG", "O", "B-LOC", "I-LOC"}, {"B-ORG", "O", "B-LOC", "I-LOC"}},
  };
  CraftedSuite suite;
  for (const auto& r : rows) {
    suite.gold.push_back({r.tokens, r.gold});
    suite.pred.push_back({r.tokens, r.pred});
  }
  return suite;
}

/// Drops B-/I- prefixes, leaving the contiguous-label form.
inline std::vector<LabeledSequence> to_contiguous(const std::vector<LabeledSequence>& corpus) {
  auto out = corpus;
  for (auto& s : out) {
    for (auto& t : s.tags) {
      if (t.size() > 2 && t[1] == '-') t = t.substr(2);
    }
  }
  return out;
}

inline std::vector<LabeledSequence> contiguous_corpus_to_bio(const std::vector<LabeledSequence>& corpus) {
  auto out = corpus;
  for (auto& s : out) s.tags = contiguous_to_bio(s.tags);
  return out;
}

/// Template sentences with person, location and organization slots.
inline std::vector<LabeledSequence> synthetic_ner(std::size_t count, std::uint64_t seed) {
  const std::vector<std::vector<std::string>> persons{{"Budi"}, {"Siti", "Rahma"}, {"Andi"}, {"Dewi", "Lestari"},
                                                      {"Rudi"}, {"Maya"}};
  const std::vector<std::vector<std::string>> places{{"Jakarta"}, {"Bandung"}, {"Surabaya"}, {"Nusa", "Dua"},
                                                     {"Medan"}};
  const std::vector<std::vector<std::string>> orgs{{"Pertamina"}, {"Bank", "Mandiri"}, {"Garuda"}, {"Telkom"}};
  // slot codes: P person, L location, G organization
  const std::vector<std::vector<std::string>> templates{
      {"P", "pergi", "ke", "L"},         {"P", "bekerja", "di", "G"}, {"G", "membuka", "kantor", "di", "L"},
      {"kemarin", "P", "bertemu", "P"}, {"cuaca", "di", "L", "cerah"}, {"P", "dari", "G", "tiba", "di", "L"}};
  Rng rng(seed);
  std::vector<LabeledSequence> out;
  for (std::size_t i = 0; i < count; ++i) {
    LabeledSequence s;
    for (const auto& slot : templates[rng.below(templates.size())]) {
      const std::vector<std::vector<std::string>>* pool = nullptr;
      std::string type;
      if (slot == "P") pool = &persons, type = "PER";
      if (slot == "L") pool = &places, type = "LOC";
      if (slot == "G") pool = &orgs, type = "ORG";
      if (!pool) {
        s.tokens.push_back(slot);
        s.tags.push_back("O");
        continue;
      }
      const auto& entity = (*pool)[rng.below(pool->size())];
      for (std::size_t k = 0; k < entity.size(); ++k) {
        s.tokens.push_back(entity[k]);
        s.tags.push_back((k == 0 ? "B-" : "I-") + type);
      }
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace seqxfer::fixtures

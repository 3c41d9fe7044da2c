#pragma once

#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace seqxfer {

/// Splits UTF-8 text into Unicode scalar values, each returned as its UTF-8
/// encoding. Invalid byte sequences become U+FFFD.
std::vector<std::string> utf8_chars(std::string_view text);

/// Symbol <-> id mapping with four reserved ids at the front.
/// Word vocabularies reserve <pad>, <unk>, <s>, </s>; character
/// vocabularies reserve <pad>, <unk>, <bow>, <eow>.
class Vocabulary {
 public:
  enum class Kind { kWord, kChar };

  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kBos = 2;  // <s> for words, <bow> for chars
  static constexpr int kEos = 3;  // </s> for words, <eow> for chars
  static constexpr int kReserved = 4;

  Vocabulary() : Vocabulary(Kind::kWord, {}) {}
  /// Symbols are deduplicated and sorted by code point; reserved names are dropped.
  Vocabulary(Kind kind, std::vector<std::string> symbols);

  Kind kind() const { return kind_; }
  std::size_t size() const { return symbols_.size(); }
  int id(std::string_view symbol) const;
  bool contains(std::string_view symbol) const;
  const std::string& symbol(int id) const { return symbols_.at(static_cast<std::size_t>(id)); }
  /// Non-reserved symbols in id order.
  std::span<const std::string> entries() const { return std::span(symbols_).subspan(kReserved); }

  bool operator==(const Vocabulary& other) const {
    return kind_ == other.kind_ && symbols_ == other.symbols_;
  }

 private:
  Kind kind_;
  std::vector<std::string> symbols_;
  std::unordered_map<std::string, int> index_;
};

/// Word vocabulary of symbols occurring at least `min_count` times.
Vocabulary build_vocab(std::span<const std::vector<std::string>> sequences, std::size_t min_count = 1);

/// Character vocabulary over the union of all characters in the corpora.
Vocabulary build_char_vocab(std::span<const std::vector<std::vector<std::string>>> corpora);

}  // namespace seqxfer

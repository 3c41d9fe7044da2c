#include "seqxfer/vocab.hpp"

#include <algorithm>
#include <map>

#include "seqxfer/errors.hpp"

namespace seqxfer {

namespace {

constexpr const char* kReplacement = "\xEF\xBF\xBD";

const std::vector<std::string>& reserved_names(Vocabulary::Kind kind) {
  static const std::vector<std::string> words{"<pad>", "<unk>", "<s>", "</s>"};
  static const std::vector<std::string> chars{"<pad>", "<unk>", "<bow>", "<eow>"};
  return kind == Vocabulary::Kind::kWord ? words : chars;
}

}  // namespace

std::vector<std::string> utf8_chars(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    const auto lead = static_cast<unsigned char>(text[i]);
    std::size_t len = 0;
    std::uint32_t cp = 0;
    if (lead < 0x80) {
      len = 1;
      cp = lead;
    } else if ((lead & 0xE0) == 0xC0) {
      len = 2;
      cp = lead & 0x1F;
    } else if ((lead & 0xF0) == 0xE0) {
      len = 3;
      cp = lead & 0x0F;
    } else if ((lead & 0xF8) == 0xF0) {
      len = 4;
      cp = lead & 0x07;
    }
    bool ok = len > 0 && i + len <= text.size();
    for (std::size_t k = 1; ok && k < len; ++k) {
      const auto cont = static_cast<unsigned char>(text[i + k]);
      if ((cont & 0xC0) != 0x80) ok = false;
      cp = (cp << 6) | (cont & 0x3F);
    }
    // Reject overlong forms, surrogates and out-of-range values.
    static constexpr std::uint32_t kMin[] = {0, 0, 0x80, 0x800, 0x10000};
    if (ok && (cp < kMin[len] || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF))) ok = false;
    if (ok) {
      out.emplace_back(text.substr(i, len));
      i += len;
    } else {
      out.emplace_back(kReplacement);
      i += 1;
    }
  }
  return out;
}

Vocabulary::Vocabulary(Kind kind, std::vector<std::string> symbols) : kind_(kind) {
  const auto& reserved = reserved_names(kind);
  std::sort(symbols.begin(), symbols.end());
  symbols.erase(std::unique(symbols.begin(), symbols.end()), symbols.end());
  symbols_ = reserved;
  for (auto& s : symbols) {
    if (s.empty()) throw ContractError("vocabulary symbols must be non-empty");
    if (std::find(reserved.begin(), reserved.end(), s) != reserved.end()) continue;
    symbols_.push_back(std::move(s));
  }
  for (std::size_t i = 0; i < symbols_.size(); ++i) index_.emplace(symbols_[i], static_cast<int>(i));
}

int Vocabulary::id(std::string_view symbol) const {
  auto it = index_.find(std::string(symbol));
  return it == index_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(std::string_view symbol) const {
  return index_.count(std::string(symbol)) > 0;
}

Vocabulary build_vocab(std::span<const std::vector<std::string>> sequences, std::size_t min_count) {
  if (min_count < 1) throw ContractError("build_vocab requires min_count >= 1");
  std::map<std::string, std::size_t> counts;
  for (const auto& seq : sequences) {
    for (const auto& tok : seq) ++counts[tok];
  }
  std::vector<std::string> kept;
  for (const auto& [sym, n] : counts) {
    if (n >= min_count) kept.push_back(sym);
  }
  return Vocabulary(Vocabulary::Kind::kWord, std::move(kept));
}

Vocabulary build_char_vocab(std::span<const std::vector<std::vector<std::string>>> corpora) {
  std::vector<std::string> chars;
  for (const auto& corpus : corpora) {
    for (const auto& sentence : corpus) {
      for (const auto& tok : sentence) {
        for (auto& c : utf8_chars(tok)) chars.push_back(std::move(c));
      }
    }
  }
  return Vocabulary(Vocabulary::Kind::kChar, std::move(chars));
}

}  // namespace seqxfer

#include "seqxfer/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "seqxfer/errors.hpp"
#include "seqxfer/numerics.hpp"

namespace seqxfer {

namespace {

std::vector<std::string> split_ws(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream ss(line);
  std::string field;
  while (ss >> field) out.push_back(field);
  return out;
}

bool is_blank(const std::string& line) {
  return std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); });
}

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  return in;
}

}  // namespace

std::vector<LabeledSequence> read_conll(std::istream& in, std::size_t token_col, std::size_t tag_col) {
  std::vector<LabeledSequence> out;
  LabeledSequence current;
  std::string line;
  std::size_t lineno = 0;
  const std::size_t needed = std::max(token_col, tag_col) + 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (is_blank(line)) {
      if (!current.tokens.empty()) out.push_back(std::move(current));
      current = {};
      continue;
    }
    auto fields = split_ws(line);
    if (fields.size() < needed) {
      throw DataError("line " + std::to_string(lineno) + ": expected at least " + std::to_string(needed) +
                      " columns, found " + std::to_string(fields.size()));
    }
    current.tokens.push_back(fields[token_col]);
    current.tags.push_back(fields[tag_col]);
  }
  if (!current.tokens.empty()) out.push_back(std::move(current));
  return out;
}

std::vector<LabeledSequence> read_conll_file(const std::string& path, std::size_t token_col, std::size_t tag_col) {
  auto in = open_input(path);
  try {
    return read_conll(in, token_col, tag_col);
  } catch (const DataError& e) {
    throw DataError(path + ": " + e.what());
  }
}

void write_conll(std::ostream& out, std::span<const LabeledSequence> sentences) {
  for (const auto& s : sentences) {
    for (std::size_t i = 0; i < s.tokens.size(); ++i) out << s.tokens[i] << ' ' << s.tags[i] << '\n';
    out << '\n';
  }
}

void write_conll_file(const std::string& path, std::span<const LabeledSequence> sentences) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  write_conll(out, sentences);
}

std::vector<std::vector<std::string>> read_token_lines(std::istream& in) {
  std::vector<std::vector<std::string>> out;
  std::string line;
  while (std::getline(in, line)) {
    auto tokens = split_ws(line);
    if (!tokens.empty()) out.push_back(std::move(tokens));
  }
  return out;
}

std::vector<std::vector<std::string>> read_token_lines_file(const std::string& path) {
  auto in = open_input(path);
  return read_token_lines(in);
}

std::vector<std::vector<std::string>> tokens_of(std::span<const LabeledSequence> sentences) {
  std::vector<std::vector<std::string>> out;
  out.reserve(sentences.size());
  for (const auto& s : sentences) out.push_back(s.tokens);
  return out;
}

std::vector<std::string> contiguous_to_bio(std::span<const std::string> raw_tags) {
  std::vector<std::string> out;
  out.reserve(raw_tags.size());
  for (std::size_t i = 0; i < raw_tags.size(); ++i) {
    const auto& t = raw_tags[i];
    if (t == "O") {
      out.emplace_back("O");
    } else if (i > 0 && raw_tags[i - 1] == t) {
      out.push_back("I-" + t);
    } else {
      out.push_back("B-" + t);
    }
  }
  return out;
}

std::string tag_type(const std::string& tag) {
  if (tag.size() > 2 && (tag[0] == 'B' || tag[0] == 'I') && tag[1] == '-') return tag.substr(2);
  return tag;
}

std::vector<EntitySpan> bio_to_spans(std::span<const std::string> tags, bool repair) {
  std::vector<EntitySpan> spans;
  bool open = false;
  EntitySpan cur;
  auto close = [&](std::size_t end) {
    if (open) {
      cur.end = end;
      spans.push_back(cur);
      open = false;
    }
  };
  for (std::size_t i = 0; i < tags.size(); ++i) {
    const auto& t = tags[i];
    if (t == "O") {
      close(i);
    } else if (t.size() > 2 && t[0] == 'B' && t[1] == '-') {
      close(i);
      cur = {t.substr(2), i, i};
      open = true;
    } else if (t.size() > 2 && t[0] == 'I' && t[1] == '-') {
      const std::string type = t.substr(2);
      if (open && cur.type == type) continue;
      if (!repair) {
        throw DataError("illegal BIO tag " + t + " at position " + std::to_string(i) +
                        (open ? " after an open " + cur.type + " entity" : " outside an entity"));
      }
      close(i);
      cur = {type, i, i};
      open = true;
    } else {
      throw DataError("tag '" + t + "' at position " + std::to_string(i) + " is not O, B-X or I-X");
    }
  }
  close(tags.size());
  return spans;
}

std::vector<std::string> spans_to_bio(std::span<const EntitySpan> spans, std::size_t length) {
  std::vector<std::string> tags(length, "O");
  for (const auto& s : spans) {
    if (s.start >= s.end || s.end > length) throw ContractError("span out of range");
    for (std::size_t i = s.start; i < s.end; ++i) {
      if (tags[i] != "O") throw ContractError("overlapping spans");
      tags[i] = (i == s.start ? "B-" : "I-") + s.type;
    }
  }
  return tags;
}

WordVectors load_word_vectors(std::istream& in, const Vocabulary& vocab, std::size_t dim, std::uint64_t seed) {
  WordVectors out;
  out.embeddings = seeded_init({vocab.size(), dim}, InitScheme::kGlorotUniform, seed);
  std::vector<bool> found(vocab.size(), false);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (is_blank(line)) continue;
    auto fields = split_ws(line);
    if (fields.size() != dim + 1) {
      throw DataError("line " + std::to_string(lineno) + ": expected a word and " + std::to_string(dim) +
                      " values, found " + std::to_string(fields.size() - 1) + " values");
    }
    std::vector<double> row(dim);
    for (std::size_t k = 0; k < dim; ++k) {
      const auto& f = fields[k + 1];
      auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), row[k]);
      if (ec != std::errc() || ptr != f.data() + f.size()) {
        throw DataError("line " + std::to_string(lineno) + ": malformed number '" + f + "'");
      }
    }
    if (!vocab.contains(fields[0])) continue;
    const int id = vocab.id(fields[0]);
    if (id < Vocabulary::kReserved) continue;
    found[static_cast<std::size_t>(id)] = true;
    std::copy(row.begin(), row.end(), out.embeddings.values().begin() + static_cast<std::ptrdiff_t>(id * dim));
  }
  const std::size_t total = vocab.size() - Vocabulary::kReserved;
  const auto hits = static_cast<std::size_t>(std::count(found.begin(), found.end(), true));
  out.coverage = total == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(total);
  return out;
}

WordVectors load_word_vectors_file(const std::string& path, const Vocabulary& vocab, std::size_t dim,
                                   std::uint64_t seed) {
  auto in = open_input(path);
  try {
    return load_word_vectors(in, vocab, dim, seed);
  } catch (const DataError& e) {
    throw DataError(path + ": " + e.what());
  }
}

std::size_t LMBatch::lengths(std::size_t row) const {
  std::size_t n = 0;
  for (std::size_t k = 0; k < max_tokens; ++k) n += mask[row * max_tokens + k] ? 1 : 0;
  return n;
}

std::size_t LMBatch::unmasked() const {
  return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), true));
}

std::vector<LMBatch> lm_batches(std::span<const std::vector<std::string>> corpus, const Vocabulary& words,
                                const Vocabulary& chars, std::size_t batch_size, std::size_t max_word_len,
                                std::uint64_t seed) {
  if (batch_size < 1) throw ContractError("lm_batches requires batch_size >= 1");
  Rng rng(seed);
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    if (!corpus[i].empty()) order.push_back(i);
  }
  rng.shuffle(order);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return corpus[a].size() < corpus[b].size(); });

  const CharSequence pad_word{"", std::vector<std::size_t>(max_word_len, Vocabulary::kPad), 0};
  std::vector<LMBatch> batches;
  for (std::size_t begin = 0; begin < order.size(); begin += batch_size) {
    const std::size_t end = std::min(order.size(), begin + batch_size);
    LMBatch b;
    b.rows = end - begin;
    for (std::size_t i = begin; i < end; ++i) b.max_tokens = std::max(b.max_tokens, corpus[order[i]].size());
    const std::size_t cells = b.rows * b.max_tokens;
    b.words.assign(cells, pad_word);
    b.forward_targets.assign(cells, -1);
    b.backward_targets.assign(cells, -1);
    b.mask.assign(cells, false);
    for (std::size_t r = 0; r < b.rows; ++r) {
      const auto& sent = corpus[order[begin + r]];
      for (std::size_t k = 0; k < sent.size(); ++k) {
        const std::size_t cell = r * b.max_tokens + k;
        b.words[cell] = char_ids(sent[k], chars, max_word_len);
        b.forward_targets[cell] = k + 1 < sent.size() ? words.id(sent[k + 1]) : Vocabulary::kEos;
        b.backward_targets[cell] = k > 0 ? words.id(sent[k - 1]) : Vocabulary::kBos;
        b.mask[cell] = true;
      }
    }
    batches.push_back(std::move(b));
  }
  rng.shuffle(batches);
  return batches;
}

}  // namespace seqxfer

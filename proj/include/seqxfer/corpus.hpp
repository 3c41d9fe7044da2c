#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "seqxfer/encoder.hpp"
#include "seqxfer/tensor.hpp"
#include "seqxfer/vocab.hpp"

namespace seqxfer {

struct LabeledSequence {
  std::vector<std::string> tokens;
  std::vector<std::string> tags;

  bool operator==(const LabeledSequence&) const = default;
};

/// Typed entity over the half-open token range [start, end).
struct EntitySpan {
  std::string type;
  std::size_t start = 0;
  std::size_t end = 0;

  auto operator<=>(const EntitySpan&) const = default;
};

/// Reads whitespace-separated columns; blank lines end sentences.
/// Throws DataError with the 1-based line number on a missing column.
std::vector<LabeledSequence> read_conll(std::istream& in, std::size_t token_col = 0, std::size_t tag_col = 1);
std::vector<LabeledSequence> read_conll_file(const std::string& path, std::size_t token_col = 0,
                                             std::size_t tag_col = 1);

/// Writes "token tag" lines with a blank line after every sentence.
void write_conll(std::ostream& out, std::span<const LabeledSequence> sentences);
void write_conll_file(const std::string& path, std::span<const LabeledSequence> sentences);

/// One sentence per line, tokens separated by whitespace. Blank lines are skipped.
std::vector<std::vector<std::string>> read_token_lines(std::istream& in);
std::vector<std::vector<std::string>> read_token_lines_file(const std::string& path);

std::vector<std::vector<std::string>> tokens_of(std::span<const LabeledSequence> sentences);

/// Turns raw entity-type-or-O tags into BIO: each maximal run of one type
/// becomes B-X I-X ...
std::vector<std::string> contiguous_to_bio(std::span<const std::string> raw_tags);

/// Extracts typed spans. In strict mode an I-X that does not continue an
/// open X entity throws DataError; in repair mode it opens a new X entity.
std::vector<EntitySpan> bio_to_spans(std::span<const std::string> tags, bool repair = false);

/// Inverse of bio_to_spans for non-overlapping spans.
std::vector<std::string> spans_to_bio(std::span<const EntitySpan> spans, std::size_t length);

/// Entity type of a tag with any B-/I- prefix stripped ("O" stays "O").
std::string tag_type(const std::string& tag);

struct WordVectors {
  Tensor embeddings;  // [vocab size, dim]
  double coverage = 0.0;
};

/// Reads "word v_1 ... v_dim" lines. Vocabulary words absent from the file
/// keep a seeded Glorot row; coverage counts found non-reserved words.
WordVectors load_word_vectors(std::istream& in, const Vocabulary& vocab, std::size_t dim, std::uint64_t seed);
WordVectors load_word_vectors_file(const std::string& path, const Vocabulary& vocab, std::size_t dim,
                                   std::uint64_t seed);

/// A padded group of sentences for the bidirectional LM.
struct LMBatch {
  std::size_t rows = 0;
  std::size_t max_tokens = 0;
  /// rows * max_tokens padded words (PAD positions are all-PAD sequences).
  std::vector<CharSequence> words;
  /// Next-word id per position (</s> after the last token).
  std::vector<int> forward_targets;
  /// Previous-word id per position (<s> before the first token).
  std::vector<int> backward_targets;
  std::vector<bool> mask;

  std::size_t lengths(std::size_t row) const;
  std::size_t unmasked() const;
};

/// Shuffles sentences by seed, groups them by length into batches of at most
/// `batch_size`, pads each batch and shuffles batch order.
std::vector<LMBatch> lm_batches(std::span<const std::vector<std::string>> corpus, const Vocabulary& words,
                                const Vocabulary& chars, std::size_t batch_size, std::size_t max_word_len,
                                std::uint64_t seed);

}  // namespace seqxfer

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "seqxfer/checkpoint.hpp"
#include "seqxfer/tagger.hpp"

namespace seqxfer {

/// Parameter groups of a tagger:
///   word_embed    tagger.word_embed
///   char_encoder  bilm.encoder.*
///   bilm          bilm.fwd.* and bilm.bwd.*
///   trunk         tagger.lstm*
///   emission      tagger.emission.*
///   crf           tagger.crf.*
/// A language model's softmax head belongs to "lm_head", which no tagger has.
std::string parameter_group(const std::string& name);

enum class TransferAction { kCopy, kReinitialize, kSkip };

std::string action_name(TransferAction action);
TransferAction parse_action(const std::string& name);

struct TransferPolicy {
  /// One action per target group. kSkip is only valid for groups the
  /// target lacks.
  std::map<std::string, TransferAction> groups;
  /// Copy emission rows and CRF transitions through the label mapping.
  bool map_labels = true;
};

/// Copies every group the source can supply with compatible meaning:
/// the BiLM and character encoder whenever both sides have them, the
/// trunk from taggers, emission rows only between heads of the same kind,
/// transitions only between CRF heads, and word embeddings only when both
/// word vocabularies are identical.
TransferPolicy default_policy(const Checkpoint& source, const TaggerSpec& target);

/// Reads "group=action" entries separated by commas, e.g. "trunk=copy,crf=reinitialize".
TransferPolicy parse_policy(const std::string& text, TransferPolicy base = {});

struct LabelMapping {
  /// For each target label, the source label index it inherits from.
  std::vector<std::optional<std::size_t>> source_of;
  std::vector<std::string> dropped;  // source labels with no target
  std::vector<std::string> added;    // target labels with no source
  std::size_t mapped() const;
};

/// Labels map when their B-/I- prefix agrees and their types agree after
/// canonical_type; "O" maps to "O".
LabelMapping map_label_space(std::span<const std::string> source, std::span<const std::string> target);

/// Character vocabulary over the union of all corpora; build it before
/// pretraining whenever a cross-lingual transfer will follow.
Vocabulary build_shared_char_vocab(std::span<const std::vector<std::vector<std::string>>> corpora);

/// Fraction of the distinct characters in `text` that `chars` contains.
double char_coverage(std::span<const std::vector<std::string>> text, const Vocabulary& chars);

struct TransferReport {
  std::string source_id;
  std::vector<std::pair<std::string, Shape>> copied;          // target names
  std::vector<std::pair<std::string, Shape>> reinitialized;   // target names
  std::vector<std::pair<std::string, Shape>> skipped;         // source-only names
  std::vector<std::pair<std::string, std::string>> label_map; // target label -> source label or "(new)"
  std::vector<std::string> dropped_labels;
  std::optional<double> char_coverage;
};

std::string format_report(const TransferReport& report);

struct TransferResult {
  Checkpoint model;
  TransferReport report;
};

/// Builds a tagger for `target` from `source` (a tagger or a language
/// model). Copies are bit-exact; a copy between different shapes throws
/// TransferError naming the group.
TransferResult transfer_init(const Checkpoint& source, const TaggerSpec& target, const TransferPolicy& policy,
                             std::uint64_t seed);

}  // namespace seqxfer

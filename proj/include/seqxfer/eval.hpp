#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "seqxfer/corpus.hpp"

namespace seqxfer {

struct SpanCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;

  /// Percentages; each is 0 when its denominator is 0.
  double precision() const;
  double recall() const;
  double f1() const;

  SpanCounts& operator+=(const SpanCounts& o) {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    return *this;
  }
  bool operator==(const SpanCounts&) const = default;
};

struct SpanMetrics {
  std::map<std::string, SpanCounts> per_type;
  SpanCounts micro;

  bool operator==(const SpanMetrics&) const = default;
};

/// Exact-match span scoring: a predicted span counts only if type, start
/// and end all equal a gold span. Gold is parsed strictly, predictions with
/// repair. Throws ContractError naming the first misaligned sentence.
SpanMetrics span_f1(std::span<const LabeledSequence> gold, std::span<const LabeledSequence> pred);

/// Silver annotation scored against a clean reference (silver as predictions).
SpanMetrics annotation_quality(std::span<const LabeledSequence> silver, std::span<const LabeledSequence> clean);

/// Human-readable table followed by "metric=... type=... value=..." lines.
std::string format_metrics(const SpanMetrics& m, const std::string& title);
/// Two-decimal percentage, e.g. "42.86".
std::string format_percent(double value);

struct EntityCount {
  std::size_t mentions = 0;
  std::size_t tokens = 0;
  bool operator==(const EntityCount&) const = default;
};

/// Per type: entity mentions (spans of repaired BIO) and the tokens they cover.
std::map<std::string, EntityCount> entity_counts(std::span<const LabeledSequence> corpus);
/// Lines like "metric=entity_mentions corpus=<name> type=PER value=12".
std::string format_entity_counts(const std::map<std::string, EntityCount>& counts, const std::string& corpus);

enum class OverlapNormalization { kReference, kSource };

struct OverlapOptions {
  OverlapNormalization normalization = OverlapNormalization::kReference;
  bool fold_case = false;
};

/// |V_A ∩ V_B| / |V_B| with B the reference corpus (or / |V_A| when
/// normalizing by source). Case-sensitive unless fold_case.
double vocab_overlap(std::span<const std::vector<std::string>> source,
                     std::span<const std::vector<std::string>> reference, const OverlapOptions& options = {});

/// Per entity type (B-/I- prefixes stripped, O included): the share of
/// reference words seen with that type which the source also pairs with it.
/// Types absent from the reference are omitted.
std::map<std::string, double> word_tag_overlap(std::span<const LabeledSequence> source,
                                               std::span<const LabeledSequence> reference,
                                               const OverlapOptions& options = {});

/// Maps long-form type names (PERSON, LOCATION, ORGANIZATION) to PER/LOC/ORG
/// so corpora with different conventions can be joined.
std::string canonical_type(const std::string& type);

std::string format_overlap(double vocab_rate, const std::map<std::string, double>& word_tag,
                           const OverlapOptions& options);

}  // namespace seqxfer

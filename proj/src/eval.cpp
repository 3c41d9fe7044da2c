#include "seqxfer/eval.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <set>
#include <sstream>

#include "seqxfer/errors.hpp"

namespace seqxfer {

namespace {

double ratio(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : 100.0 * static_cast<double>(num) / static_cast<double>(den);
}

std::string folded(const std::string& s, bool fold) {
  if (!fold) return s;
  std::string out = s;
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}

std::set<std::string> vocabulary_set(std::span<const std::vector<std::string>> corpus, bool fold) {
  std::set<std::string> out;
  for (const auto& s : corpus) {
    for (const auto& t : s) out.insert(folded(t, fold));
  }
  return out;
}

std::map<std::string, std::set<std::string>> words_by_type(std::span<const LabeledSequence> corpus, bool fold) {
  std::map<std::string, std::set<std::string>> out;
  for (const auto& s : corpus) {
    for (std::size_t i = 0; i < s.tokens.size(); ++i) {
      out[canonical_type(tag_type(s.tags[i]))].insert(folded(s.tokens[i], fold));
    }
  }
  return out;
}

}  // namespace

double SpanCounts::precision() const { return ratio(tp, tp + fp); }
double SpanCounts::recall() const { return ratio(tp, tp + fn); }
double SpanCounts::f1() const {
  const double p = precision();
  const double r = recall();
  return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
}

SpanMetrics span_f1(std::span<const LabeledSequence> gold, std::span<const LabeledSequence> pred) {
  if (gold.size() != pred.size()) {
    throw ContractError("gold has " + std::to_string(gold.size()) + " sentences, predictions have " +
                        std::to_string(pred.size()));
  }
  SpanMetrics m;
  for (std::size_t s = 0; s < gold.size(); ++s) {
    if (gold[s].tags.size() != pred[s].tags.size()) {
      throw ContractError("sentence " + std::to_string(s) + ": gold has " + std::to_string(gold[s].tags.size()) +
                          " tokens, prediction has " + std::to_string(pred[s].tags.size()));
    }
    std::vector<EntitySpan> g;
    try {
      g = bio_to_spans(gold[s].tags, false);
    } catch (const DataError& e) {
      throw DataError("gold sentence " + std::to_string(s) + ": " + e.what());
    }
    const auto p = bio_to_spans(pred[s].tags, true);
    std::multiset<EntitySpan> unmatched(g.begin(), g.end());
    for (const auto& span : p) {
      auto it = unmatched.find(span);
      if (it != unmatched.end()) {
        unmatched.erase(it);
        ++m.per_type[span.type].tp;
      } else {
        ++m.per_type[span.type].fp;
      }
    }
    for (const auto& span : unmatched) ++m.per_type[span.type].fn;
  }
  for (const auto& [_, c] : m.per_type) m.micro += c;
  return m;
}

SpanMetrics annotation_quality(std::span<const LabeledSequence> silver, std::span<const LabeledSequence> clean) {
  return span_f1(clean, silver);
}

std::string format_percent(double value) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", value);
  return buf;
}

std::string format_metrics(const SpanMetrics& m, const std::string& title) {
  std::ostringstream out;
  out << title << '\n';
  char line[160];
  std::snprintf(line, sizeof line, "%-10s %6s %6s %6s %8s %8s %8s\n", "type", "tp", "fp", "fn", "prec", "recall",
                "f1");
  out << line;
  auto row = [&](const std::string& name, const SpanCounts& c) {
    std::snprintf(line, sizeof line, "%-10s %6zu %6zu %6zu %8s %8s %8s\n", name.c_str(), c.tp, c.fp, c.fn,
                  format_percent(c.precision()).c_str(), format_percent(c.recall()).c_str(),
                  format_percent(c.f1()).c_str());
    out << line;
  };
  for (const auto& [type, c] : m.per_type) row(type, c);
  row("micro", m.micro);
  auto kv = [&](const std::string& type, const SpanCounts& c) {
    out << "metric=tp type=" << type << " value=" << c.tp << '\n';
    out << "metric=fp type=" << type << " value=" << c.fp << '\n';
    out << "metric=fn type=" << type << " value=" << c.fn << '\n';
    out << "metric=precision type=" << type << " value=" << format_percent(c.precision()) << '\n';
    out << "metric=recall type=" << type << " value=" << format_percent(c.recall()) << '\n';
    out << "metric=f1 type=" << type << " value=" << format_percent(c.f1()) << '\n';
  };
  for (const auto& [type, c] : m.per_type) kv(type, c);
  kv("micro", m.micro);
  return out.str();
}

std::string canonical_type(const std::string& type) {
  if (type == "PERSON") return "PER";
  if (type == "LOCATION") return "LOC";
  if (type == "ORGANIZATION" || type == "ORGANISATION") return "ORG";
  return type;
}

double vocab_overlap(std::span<const std::vector<std::string>> source,
                     std::span<const std::vector<std::string>> reference, const OverlapOptions& options) {
  const auto a = vocabulary_set(source, options.fold_case);
  const auto b = vocabulary_set(reference, options.fold_case);
  if (a.empty() || b.empty()) throw ContractError("vocab_overlap needs two non-empty corpora");
  std::size_t shared = 0;
  for (const auto& w : b) shared += a.count(w);
  const std::size_t den = options.normalization == OverlapNormalization::kReference ? b.size() : a.size();
  return static_cast<double>(shared) / static_cast<double>(den);
}

std::map<std::string, double> word_tag_overlap(std::span<const LabeledSequence> source,
                                               std::span<const LabeledSequence> reference,
                                               const OverlapOptions& options) {
  const auto a = words_by_type(source, options.fold_case);
  const auto b = words_by_type(reference, options.fold_case);
  std::map<std::string, double> out;
  for (const auto& [type, ref_words] : b) {
    const auto& norm_side = options.normalization == OverlapNormalization::kReference ? b : a;
    auto src = a.find(type);
    std::size_t shared = 0;
    if (src != a.end()) {
      for (const auto& w : ref_words) shared += src->second.count(w);
    }
    auto den_it = norm_side.find(type);
    const std::size_t den = den_it == norm_side.end() ? 0 : den_it->second.size();
    out[type] = den == 0 ? 0.0 : static_cast<double>(shared) / static_cast<double>(den);
  }
  return out;
}

std::map<std::string, EntityCount> entity_counts(std::span<const LabeledSequence> corpus) {
  std::map<std::string, EntityCount> out;
  for (const auto& s : corpus) {
    for (const auto& span : bio_to_spans(s.tags, true)) {
      auto& c = out[span.type];
      ++c.mentions;
      c.tokens += span.end - span.start;
    }
  }
  return out;
}

std::string format_entity_counts(const std::map<std::string, EntityCount>& counts, const std::string& corpus) {
  std::ostringstream out;
  for (const auto& [type, c] : counts) {
    out << "metric=entity_mentions corpus=" << corpus << " type=" << type << " value=" << c.mentions << '\n';
    out << "metric=entity_tokens corpus=" << corpus << " type=" << type << " value=" << c.tokens << '\n';
  }
  return out.str();
}

std::string format_overlap(double vocab_rate, const std::map<std::string, double>& word_tag,
                           const OverlapOptions& options) {
  std::ostringstream out;
  const char* norm = options.normalization == OverlapNormalization::kReference ? "reference" : "source";
  out << "vocabulary overlap |V_source ∩ V_reference| / |V_" << norm << "| = " << format_percent(100.0 * vocab_rate)
      << "%\n";
  for (const auto& [type, rate] : word_tag) {
    out << "word-tag overlap " << type << " = " << format_percent(100.0 * rate) << "%\n";
  }
  out << "metric=normalization value=" << norm << '\n';
  out << "metric=case_folding value=" << (options.fold_case ? "on" : "off") << '\n';
  out << "metric=vocab_overlap type=all value=" << format_percent(100.0 * vocab_rate) << '\n';
  for (const auto& [type, rate] : word_tag) {
    out << "metric=word_tag_overlap type=" << type << " value=" << format_percent(100.0 * rate) << '\n';
  }
  return out.str();
}

}  // namespace seqxfer

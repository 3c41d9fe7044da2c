#include "seqxfer/transfer.hpp"

#include <set>
#include <sstream>

#include "seqxfer/bilm.hpp"
#include "seqxfer/crf.hpp"
#include "seqxfer/errors.hpp"
#include "seqxfer/eval.hpp"
#include "seqxfer/vocab.hpp"

namespace seqxfer {

namespace {

bool starts_with(const std::string& s, const char* prefix) { return s.rfind(prefix, 0) == 0; }

std::set<std::string> groups_of(const ParamStore& params) {
  std::set<std::string> out;
  for (const auto& [name, _] : params) out.insert(parameter_group(name));
  return out;
}

std::string describe(const Shape& shape) { return shape_string(shape); }

}  // namespace

std::string parameter_group(const std::string& name) {
  if (name == "tagger.word_embed") return "word_embed";
  if (starts_with(name, "bilm.encoder.")) return "char_encoder";
  if (name == BiLM::kHeadWeight || name == BiLM::kHeadBias) return "lm_head";
  if (starts_with(name, "bilm.")) return "bilm";
  if (starts_with(name, "tagger.lstm")) return "trunk";
  if (starts_with(name, "tagger.emission.")) return "emission";
  if (starts_with(name, "tagger.crf.")) return "crf";
  throw ContractError("parameter '" + name + "' belongs to no transfer group");
}

std::string action_name(TransferAction action) {
  switch (action) {
    case TransferAction::kCopy: return "copy";
    case TransferAction::kReinitialize: return "reinitialize";
    case TransferAction::kSkip: return "skip";
  }
  return "";
}

TransferAction parse_action(const std::string& name) {
  if (name == "copy") return TransferAction::kCopy;
  if (name == "reinitialize" || name == "reinit") return TransferAction::kReinitialize;
  if (name == "skip") return TransferAction::kSkip;
  throw DataError("unknown transfer action '" + name + "' (expected copy, reinitialize or skip)");
}

TransferPolicy default_policy(const Checkpoint& source, const TaggerSpec& target) {
  const auto have = groups_of(source.params);
  const bool source_tagger = source.arch("kind") == "tagger";
  std::optional<TaggerHead> source_head;
  if (source_tagger) source_head = parse_head(source.arch("tagger.head"));
  TransferPolicy policy;
  for (const auto& [name, _] : tagger_parameter_shapes(target)) {
    const std::string group = parameter_group(name);
    bool copy = have.count(group) > 0;
    if (group == "word_embed") copy = copy && source.words == target.words;
    if (group == "emission") copy = copy && source_head == target.config.head;
    policy.groups[group] = copy ? TransferAction::kCopy : TransferAction::kReinitialize;
  }
  return policy;
}

TransferPolicy parse_policy(const std::string& text, TransferPolicy base) {
  std::istringstream in(text);
  for (std::string item; std::getline(in, item, ',');) {
    if (item.empty()) continue;
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0) throw DataError("policy entry '" + item + "' is not group=action");
    base.groups[item.substr(0, eq)] = parse_action(item.substr(eq + 1));
  }
  return base;
}

std::size_t LabelMapping::mapped() const {
  std::size_t n = 0;
  for (const auto& s : source_of) n += s.has_value();
  return n;
}

LabelMapping map_label_space(std::span<const std::string> source, std::span<const std::string> target) {
  auto key = [](const std::string& label) {
    if (label == "O") return label;
    const std::string prefix = label.size() > 2 && label[1] == '-' ? label.substr(0, 2) : "";
    return prefix + canonical_type(tag_type(label));
  };
  std::map<std::string, std::size_t> by_key;
  for (std::size_t i = 0; i < source.size(); ++i) by_key.emplace(key(source[i]), i);
  LabelMapping out;
  std::set<std::size_t> used;
  for (const auto& t : target) {
    auto it = by_key.find(key(t));
    if (it == by_key.end()) {
      out.source_of.push_back(std::nullopt);
      out.added.push_back(t);
    } else {
      out.source_of.push_back(it->second);
      used.insert(it->second);
    }
  }
  for (std::size_t i = 0; i < source.size(); ++i) {
    if (!used.count(i)) out.dropped.push_back(source[i]);
  }
  return out;
}

Vocabulary build_shared_char_vocab(std::span<const std::vector<std::vector<std::string>>> corpora) {
  if (corpora.empty()) throw ContractError("build_shared_char_vocab needs at least one corpus");
  return build_char_vocab(corpora);
}

double char_coverage(std::span<const std::vector<std::string>> text, const Vocabulary& chars) {
  std::set<std::string> distinct;
  for (const auto& sentence : text) {
    for (const auto& token : sentence) {
      for (auto& c : utf8_chars(token)) distinct.insert(c);
    }
  }
  if (distinct.empty()) return 1.0;
  std::size_t found = 0;
  for (const auto& c : distinct) found += chars.contains(c);
  return static_cast<double>(found) / static_cast<double>(distinct.size());
}

std::string format_report(const TransferReport& r) {
  std::ostringstream out;
  out << "transfer source=" << r.source_id << '\n';
  auto list = [&](const char* title, const std::vector<std::pair<std::string, Shape>>& items) {
    out << title << ' ' << items.size() << '\n';
    for (const auto& [name, shape] : items) out << "  " << name << ' ' << describe(shape) << '\n';
  };
  list("copied", r.copied);
  list("reinitialized", r.reinitialized);
  list("skipped", r.skipped);
  out << "labels " << r.label_map.size() << '\n';
  for (const auto& [target, source] : r.label_map) out << "  " << target << " <- " << source << '\n';
  out << "dropped_labels";
  for (const auto& l : r.dropped_labels) out << ' ' << l;
  out << '\n';
  if (r.char_coverage) out << "char_coverage " << format_double(*r.char_coverage) << '\n';
  return out.str();
}

TransferResult transfer_init(const Checkpoint& source, const TaggerSpec& target, const TransferPolicy& policy,
                             std::uint64_t seed) {
  const std::string kind = source.arch("kind");
  std::vector<std::string> source_labels;
  if (kind == "tagger") {
    source_labels = tagger_spec_of(source).labels;
  } else if (kind == "lm") {
    bilm_config_of(source, false);
  } else {
    throw TransferError("cannot transfer from a '" + kind + "' checkpoint");
  }

  const auto target_shapes = tagger_parameter_shapes(target);
  std::set<std::string> target_groups;
  for (const auto& [name, _] : target_shapes) target_groups.insert(parameter_group(name));
  const auto source_groups = groups_of(source.params);
  for (const auto& g : target_groups) {
    auto it = policy.groups.find(g);
    if (it == policy.groups.end()) throw ContractError("transfer policy has no action for group '" + g + "'");
    if (it->second == TransferAction::kSkip) {
      throw ContractError("group '" + g + "' exists in the target; skip applies only to source-only groups");
    }
    if (it->second == TransferAction::kCopy && !source_groups.count(g)) {
      throw TransferError("group '" + g + "' cannot be copied: the source has no such parameters");
    }
  }
  auto action = [&](const std::string& group) { return policy.groups.at(group); };

  std::vector<std::string> problems;
  if (target_groups.count("word_embed") && action("word_embed") == TransferAction::kCopy &&
      !(source.words == target.words)) {
    problems.push_back("group word_embed: word vocabularies differ");
  }
  if (target_groups.count("char_encoder") && action("char_encoder") == TransferAction::kCopy &&
      !(source.chars == target.chars)) {
    problems.push_back("group char_encoder: character vocabularies differ (build a shared one before pretraining)");
  }

  const LabelMapping mapping = map_label_space(source_labels, target.labels);
  const Checkpoint fresh = init_tagger(target, seed);
  TransferResult result;
  Checkpoint& model = result.model;
  TransferReport& report = result.report;
  report.source_id = checkpoint_id(source);
  std::set<std::string> consumed;

  for (const auto& [name, shape] : target_shapes) {
    const std::string group = parameter_group(name);
    if (action(group) == TransferAction::kReinitialize) {
      model.params[name] = fresh.params.at(name);
      report.reinitialized.emplace_back(name, shape);
      continue;
    }
    auto it = source.params.find(name);
    if (it == source.params.end()) {
      problems.push_back("group " + group + ": source lacks " + name);
      continue;
    }
    const Tensor& src = it->second;
    const bool label_mapped = policy.map_labels && (group == "emission" || group == "crf") && !source_labels.empty();
    if (label_mapped && mapping.mapped() == 0) {
      model.params[name] = fresh.params.at(name);
      report.reinitialized.emplace_back(name, shape);
      continue;
    }
    if (!label_mapped) {
      if (src.shape() != shape) {
        problems.push_back("group " + group + ": " + name + " is " + describe(src.shape()) + " in the source but " +
                           describe(shape) + " in the target");
        continue;
      }
      model.params[name] = src;
      consumed.insert(name);
      report.copied.emplace_back(name, shape);
      continue;
    }

    Tensor out = fresh.params.at(name);
    if (group == "emission") {
      if (src.rank() != out.rank() || (src.rank() == 2 && src.cols() != out.cols())) {
        problems.push_back("group emission: " + name + " is " + describe(src.shape()) + " in the source but " +
                           describe(shape) + " in the target");
        continue;
      }
      const std::size_t width = src.rank() == 2 ? src.cols() : 1;
      for (std::size_t t = 0; t < mapping.source_of.size(); ++t) {
        if (!mapping.source_of[t]) continue;
        for (std::size_t c = 0; c < width; ++c) out[t * width + c] = src[*mapping.source_of[t] * width + c];
      }
    } else {
      const std::size_t ms = source_labels.size();
      const std::size_t mt = target.labels.size();
      if (src.shape() != Shape{ms + 2, ms + 2}) {
        problems.push_back("group crf: " + name + " has shape " + describe(src.shape()));
        continue;
      }
      auto source_index = [&](std::size_t t) -> std::optional<std::size_t> {
        if (t == crf_start(mt)) return crf_start(ms);
        if (t == crf_stop(mt)) return crf_stop(ms);
        return mapping.source_of[t];
      };
      for (std::size_t i = 0; i < mt + 2; ++i) {
        for (std::size_t j = 0; j < mt + 2; ++j) {
          const auto si = source_index(i);
          const auto sj = source_index(j);
          if (si && sj) out.at(i, j) = src.at(*si, *sj);
        }
      }
      if (target.config.constrained) {
        const Tensor mask = bio_transition_mask(target.labels);
        for (std::size_t i = 0; i < out.size(); ++i) {
          if (mask[i] == 0.0) out[i] = kForbiddenTransition;
        }
      }
    }
    model.params[name] = std::move(out);
    consumed.insert(name);
    report.copied.emplace_back(name, shape);
  }
  if (!problems.empty()) {
    std::string msg = "transfer_init failed:";
    for (const auto& p : problems) msg += " " + p + ";";
    throw TransferError(msg);
  }

  for (const auto& [name, t] : source.params) {
    if (!consumed.count(name)) report.skipped.emplace_back(name, t.shape());
  }
  for (std::size_t t = 0; t < target.labels.size(); ++t) {
    report.label_map.emplace_back(target.labels[t],
                                  mapping.source_of[t] ? source_labels[*mapping.source_of[t]] : std::string("(new)"));
  }
  report.dropped_labels = mapping.dropped;
  if (target.bilm) {
    std::size_t found = 0;
    for (const auto& c : target.chars.entries()) found += source.chars.contains(c);
    const auto n = target.chars.entries().size();
    report.char_coverage = n ? static_cast<double>(found) / static_cast<double>(n) : 1.0;
  }

  write_tagger_spec(model, target);
  model.provenance = source.provenance;
  std::string actions;
  for (const auto& g : target_groups) actions += (actions.empty() ? "" : ",") + g + "=" + action_name(action(g));
  model.provenance.push_back("transfer_init source=" + report.source_id + " seed=" + std::to_string(seed) +
                             " policy=" + actions + " copied=" + std::to_string(report.copied.size()) +
                             " reinitialized=" + std::to_string(report.reinitialized.size()) +
                             " skipped=" + std::to_string(report.skipped.size()));
  return result;
}

}  // namespace seqxfer

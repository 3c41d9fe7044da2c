#include "seqxfer/tagger.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <sstream>

#include "seqxfer/crf.hpp"
#include "seqxfer/errors.hpp"
#include "seqxfer/eval.hpp"
#include "seqxfer/log.hpp"

namespace seqxfer {

namespace {

constexpr const char* kWordEmbed = "tagger.word_embed";
constexpr const char* kEmissionWeight = "tagger.emission.weight";
constexpr const char* kEmissionBias = "tagger.emission.bias";
constexpr const char* kTransitions = "tagger.crf.transitions";

std::string lstm_param(std::size_t layer, bool reverse, const char* suffix) {
  return "tagger.lstm" + std::to_string(layer) + (reverse ? ".bwd." : ".fwd.") + suffix;
}

std::size_t input_width(const TaggerSpec& spec) {
  return spec.config.word_dim + (spec.bilm ? 2 * spec.bilm->encoder.output_dim : 0);
}

std::size_t arch_size(const Checkpoint& ckpt, const std::string& key) {
  const auto v = parse_sizes(ckpt.arch(key));
  if (v.size() != 1) throw DataError("architecture entry '" + key + "' is not a single size");
  return v[0];
}

bool arch_flag(const Checkpoint& ckpt, const std::string& key) {
  const std::string& v = ckpt.arch(key);
  if (v != "0" && v != "1") throw DataError("architecture entry '" + key + "' must be 0 or 1");
  return v == "1";
}

std::vector<std::string> split_words(const std::string& text) {
  std::istringstream in(text);
  std::vector<std::string> out;
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

void check_labels(const std::vector<std::string>& labels, TaggerHead head) {
  if (labels.empty()) throw ContractError("a tagger needs at least one label");
  std::set<std::string> seen(labels.begin(), labels.end());
  if (seen.size() != labels.size()) throw ContractError("duplicate labels in the label set");
  if (head != TaggerHead::kCrf) return;
  if (!seen.count("O")) throw ContractError("a CRF label set must contain O");
  for (const auto& l : labels) {
    if (l.rfind("I-", 0) == 0 && !seen.count("B-" + l.substr(2))) {
      throw ContractError("label " + l + " has no matching B- label");
    }
  }
}

// The trunk and head over one sentence; word ids are supplied by the caller
// so training can substitute UNK.
class Model {
 public:
  explicit Model(TaggerSpec spec) : spec_(std::move(spec)) {
    if (spec_.bilm) bilm_.emplace(*spec_.bilm);
    for (std::size_t i = 0; i < spec_.labels.size(); ++i) label_index_[spec_.labels[i]] = i;
  }

  const TaggerSpec& spec() const { return spec_; }
  bool crf() const { return spec_.config.head == TaggerHead::kCrf; }

  std::vector<std::size_t> word_ids(std::span<const std::string> tokens) const {
    std::vector<std::size_t> ids;
    ids.reserve(tokens.size());
    for (const auto& t : tokens) ids.push_back(static_cast<std::size_t>(spec_.words.id(t)));
    return ids;
  }

  std::vector<std::size_t> tag_ids(const LabeledSequence& s, std::size_t sentence) const {
    std::vector<std::size_t> ids;
    for (const auto& t : s.tags) {
      auto it = label_index_.find(t);
      if (it == label_index_.end()) {
        throw DataError("sentence " + std::to_string(sentence) + ": label '" + t + "' is not in the model's label set");
      }
      ids.push_back(it->second);
    }
    return ids;
  }

  Var emissions(Tape& tape, const ParamStore& p, std::span<const std::size_t> ids,
                std::span<const std::string> tokens, bool train, std::uint64_t dropout_seed) const {
    auto param = [&](const std::string& name) { return tape.parameter(name, p.at(name)); };
    Var x = ad::gather_rows(param(kWordEmbed), ids);
    if (bilm_) {
      const auto chars = char_ids(tokens, spec_.chars, spec_.bilm->encoder.max_word_len);
      Var context = bilm_->contextual(tape, p, chars);
      if (train && spec_.config.dropout > 0.0) context = ad::dropout(context, spec_.config.dropout, dropout_seed);
      Var parts[] = {x, context};
      x = ad::hcat(parts);
    }
    for (std::size_t l = 0; l < spec_.config.layers; ++l) {
      Var dirs[2] = {x, x};
      for (bool reverse : {false, true}) {
        Var gates = ad::linear(x, param(lstm_param(l, reverse, "w_ih")), param(lstm_param(l, reverse, "bias")));
        dirs[reverse ? 1 : 0] = ad::lstm_sequence(gates, param(lstm_param(l, reverse, "w_hh")), reverse);
      }
      x = ad::hcat(dirs);
    }
    return ad::linear(x, param(kEmissionWeight), param(kEmissionBias));
  }

  Var loss(Tape& tape, const ParamStore& p, std::span<const std::size_t> ids, std::span<const std::string> tokens,
           std::span<const std::size_t> tags, bool train, std::uint64_t dropout_seed) const {
    Var e = emissions(tape, p, ids, tokens, train, dropout_seed);
    if (crf()) return crf_nll(e, tape.parameter(kTransitions, p.at(kTransitions)), tags);
    std::vector<int> targets(tags.begin(), tags.end());
    return ad::softmax_cross_entropy(e, targets);
  }

  std::vector<std::string> decode(const ParamStore& p, std::span<const std::string> tokens) const {
    if (tokens.empty()) return {};
    Tape tape;
    const Tensor e = emissions(tape, p, word_ids(tokens), tokens, false, 0).value();
    std::vector<std::size_t> best;
    if (crf()) {
      best = viterbi_decode(e, p.at(kTransitions));
    } else {
      for (std::size_t r = 0; r < e.rows(); ++r) {
        std::size_t arg = 0;
        for (std::size_t c = 1; c < e.cols(); ++c) {
          if (e.at(r, c) > e.at(r, arg)) arg = c;
        }
        best.push_back(arg);
      }
    }
    std::vector<std::string> out;
    for (auto b : best) out.push_back(spec_.labels[b]);
    return out;
  }

 private:
  TaggerSpec spec_;
  std::optional<BiLM> bilm_;
  std::map<std::string, std::size_t> label_index_;
};

void validate_sentences(std::span<const LabeledSequence> data, TaggerHead head) {
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data[i].tokens.size() != data[i].tags.size()) {
      throw DataError("sentence " + std::to_string(i) + ": " + std::to_string(data[i].tokens.size()) +
                      " tokens but " + std::to_string(data[i].tags.size()) + " tags");
    }
    if (data[i].tokens.empty()) throw DataError("sentence " + std::to_string(i) + " is empty");
    if (head == TaggerHead::kCrf) {
      try {
        bio_to_spans(data[i].tags);
      } catch (const DataError& e) {
        throw DataError("sentence " + std::to_string(i) + ": " + e.what());
      }
    }
  }
}

double score_with(const Model& model, const ParamStore& params, std::span<const LabeledSequence> data) {
  std::vector<LabeledSequence> pred;
  for (const auto& s : data) pred.push_back({s.tokens, model.decode(params, s.tokens)});
  if (model.crf()) return span_f1(data, pred).micro.f1();
  std::size_t correct = 0;
  std::size_t total = 0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    for (std::size_t k = 0; k < data[i].tags.size(); ++k) {
      correct += data[i].tags[k] == pred[i].tags[k];
      ++total;
    }
  }
  return total ? 100.0 * static_cast<double>(correct) / static_cast<double>(total) : 0.0;
}

}  // namespace

std::string head_name(TaggerHead head) { return head == TaggerHead::kCrf ? "crf" : "softmax"; }

TaggerHead parse_head(const std::string& name) {
  if (name == "crf") return TaggerHead::kCrf;
  if (name == "softmax") return TaggerHead::kSoftmax;
  throw DataError("unknown tagger head '" + name + "' (expected crf or softmax)");
}

std::vector<std::string> label_set(std::span<const LabeledSequence> data, TaggerHead head) {
  std::set<std::string> tags;
  for (const auto& s : data) tags.insert(s.tags.begin(), s.tags.end());
  if (head == TaggerHead::kSoftmax) return {tags.begin(), tags.end()};
  std::set<std::string> types;
  for (const auto& t : tags) {
    if (t != "O") types.insert(tag_type(t));
  }
  std::vector<std::string> labels{"O"};
  for (const auto& t : types) {
    labels.push_back("B-" + t);
    labels.push_back("I-" + t);
  }
  return labels;
}

TaggerSpec tagger_spec_from_data(std::span<const LabeledSequence> train, const TaggerConfig& config,
                                 const Checkpoint* lm) {
  if (train.empty()) throw ContractError("tagger training data is empty");
  validate_sentences(train, config.head);
  TaggerSpec spec;
  spec.config = config;
  spec.labels = label_set(train, config.head);
  const auto tokens = tokens_of(train);
  spec.words = build_vocab(tokens);
  if (lm) {
    spec.bilm = bilm_config_of(*lm, false);
    spec.chars = lm->chars;
  } else {
    const std::vector<std::vector<std::vector<std::string>>> corpora{tokens};
    spec.chars = build_char_vocab(corpora);
  }
  return spec;
}

std::vector<std::pair<std::string, Shape>> tagger_parameter_shapes(const TaggerSpec& spec) {
  const auto& c = spec.config;
  if (c.word_dim == 0 || c.hidden == 0 || c.layers == 0) {
    throw ContractError("tagger dimensions must be positive");
  }
  const std::size_t m = spec.labels.size();
  const std::size_t H = c.hidden;
  std::vector<std::pair<std::string, Shape>> shapes;
  shapes.emplace_back(kWordEmbed, Shape{spec.words.size(), c.word_dim});
  for (std::size_t l = 0; l < c.layers; ++l) {
    const std::size_t in = l == 0 ? input_width(spec) : 2 * H;
    for (bool reverse : {false, true}) {
      shapes.emplace_back(lstm_param(l, reverse, "w_ih"), Shape{4 * H, in});
      shapes.emplace_back(lstm_param(l, reverse, "w_hh"), Shape{4 * H, H});
      shapes.emplace_back(lstm_param(l, reverse, "bias"), Shape{4 * H});
    }
  }
  shapes.emplace_back(kEmissionWeight, Shape{m, 2 * H});
  shapes.emplace_back(kEmissionBias, Shape{m});
  if (c.head == TaggerHead::kCrf) shapes.emplace_back(kTransitions, Shape{m + 2, m + 2});
  if (spec.bilm) {
    for (auto& entry : BiLM(*spec.bilm).parameter_shapes(spec.chars.size(), 0)) shapes.push_back(std::move(entry));
  }
  return shapes;
}

void write_tagger_spec(Checkpoint& ckpt, const TaggerSpec& spec) {
  check_labels(spec.labels, spec.config.head);
  auto& a = ckpt.architecture;
  a.clear();
  a["kind"] = "tagger";
  a["tagger.word_dim"] = std::to_string(spec.config.word_dim);
  a["tagger.hidden"] = std::to_string(spec.config.hidden);
  a["tagger.layers"] = std::to_string(spec.config.layers);
  a["tagger.head"] = head_name(spec.config.head);
  a["tagger.freeze_embeddings"] = spec.config.freeze_embeddings ? "1" : "0";
  a["tagger.dropout"] = format_double(spec.config.dropout);
  a["tagger.constrained"] = spec.config.constrained ? "1" : "0";
  std::string labels;
  for (const auto& l : spec.labels) labels += (labels.empty() ? "" : " ") + l;
  a["tagger.labels"] = labels;
  a["bilm.attached"] = spec.bilm ? "1" : "0";
  if (spec.bilm) write_bilm_config(a, *spec.bilm);
  ckpt.words = spec.words;
  ckpt.chars = spec.chars;
}

TaggerSpec tagger_spec_of(const Checkpoint& ckpt) {
  if (ckpt.arch("kind") != "tagger") throw TransferError("checkpoint holds a '" + ckpt.arch("kind") + "' model, not a tagger");
  TaggerSpec spec;
  auto& c = spec.config;
  c.word_dim = arch_size(ckpt, "tagger.word_dim");
  c.hidden = arch_size(ckpt, "tagger.hidden");
  c.layers = arch_size(ckpt, "tagger.layers");
  c.head = parse_head(ckpt.arch("tagger.head"));
  c.freeze_embeddings = arch_flag(ckpt, "tagger.freeze_embeddings");
  c.dropout = parse_double(ckpt.arch("tagger.dropout"));
  c.constrained = arch_flag(ckpt, "tagger.constrained");
  spec.labels = split_words(ckpt.arch("tagger.labels"));
  try {
    check_labels(spec.labels, c.head);
  } catch (const ContractError& e) {
    throw DataError(std::string("invalid tagger label set: ") + e.what());
  }
  if (arch_flag(ckpt, "bilm.attached")) spec.bilm = read_bilm_config(ckpt.architecture);
  spec.words = ckpt.words;
  spec.chars = ckpt.chars;

  std::vector<std::string> problems;
  for (const auto& [name, shape] : tagger_parameter_shapes(spec)) {
    auto it = ckpt.params.find(name);
    if (it == ckpt.params.end()) {
      problems.push_back(name + " (missing)");
    } else if (it->second.shape() != shape) {
      problems.push_back(name + " (expected " + shape_string(shape) + ", found " + shape_string(it->second.shape()) +
                         ")");
    }
  }
  if (!problems.empty()) {
    std::string msg = "checkpoint does not hold a complete tagger:";
    for (const auto& p : problems) msg += " " + p + ";";
    throw TransferError(msg);
  }
  return spec;
}

Tensor init_tagger_parameter(const TaggerSpec& spec, const std::string& name, const Shape& shape,
                             std::uint64_t seed) {
  if (name.rfind("bilm.", 0) == 0) {
    if (!spec.bilm) throw ContractError("parameter " + name + " needs an attached BiLM");
    ParamStore fresh = BiLM(*spec.bilm).initialize(spec.chars.size(), 0, derive_seed(seed, "bilm"));
    auto it = fresh.find(name);
    if (it == fresh.end() || it->second.shape() != shape) throw ContractError("no BiLM parameter " + name);
    return it->second;
  }
  if (name == kTransitions) {
    Tensor t(shape, 0.0);
    if (spec.config.constrained) {
      const Tensor mask = bio_transition_mask(spec.labels);
      for (std::size_t i = 0; i < t.size(); ++i) {
        if (mask[i] == 0.0) t[i] = kForbiddenTransition;
      }
    }
    return t;
  }
  if (name == kEmissionBias) return Tensor(shape, 0.0);
  if (name.ends_with(".bias")) {
    Tensor b(shape, 0.0);
    const std::size_t H = spec.config.hidden;
    for (std::size_t j = H; j < 2 * H; ++j) b[j] = 1.0;  // forget gate
    return b;
  }
  return seeded_init(shape, InitScheme::kGlorotUniform, derive_seed(seed, name));
}

Checkpoint init_tagger(const TaggerSpec& spec, std::uint64_t seed, const Checkpoint* lm, const WordVectors* vectors) {
  Checkpoint ckpt;
  write_tagger_spec(ckpt, spec);
  if (lm) {
    if (!spec.bilm) throw ContractError("init_tagger got a language model but the spec attaches none");
    if (!(bilm_config_of(*lm, false) == *spec.bilm)) throw TransferError("language model architecture differs from the spec");
    if (!(lm->chars == spec.chars)) throw TransferError("language model character vocabulary differs from the spec");
  }
  ParamStore fresh_bilm;
  if (spec.bilm && !lm) fresh_bilm = BiLM(*spec.bilm).initialize(spec.chars.size(), 0, derive_seed(seed, "bilm"));
  for (const auto& [name, shape] : tagger_parameter_shapes(spec)) {
    if (name.rfind("bilm.", 0) == 0) {
      ckpt.params[name] = lm ? lm->params.at(name) : fresh_bilm.at(name);
    } else if (name == kWordEmbed && vectors) {
      if (vectors->embeddings.shape() != shape) {
        throw ContractError("word vectors have shape " + shape_string(vectors->embeddings.shape()) + ", expected " +
                            shape_string(shape));
      }
      ckpt.params[name] = vectors->embeddings;
    } else {
      ckpt.params[name] = init_tagger_parameter(spec, name, shape, seed);
    }
  }
  ckpt.provenance.push_back("init_tagger seed=" + std::to_string(seed) + " lm=" + (lm ? checkpoint_id(*lm) : "none") +
                            " vectors=" + (vectors ? "loaded" : "none"));
  return ckpt;
}

Var tagger_sentence_loss(Tape& tape, const TaggerSpec& spec, const ParamStore& params, const LabeledSequence& s) {
  const std::vector<LabeledSequence> one{s};
  validate_sentences(one, spec.config.head);
  Model model(spec);
  return model.loss(tape, params, model.word_ids(s.tokens), s.tokens, model.tag_ids(s, 0), false, 0);
}

Checkpoint train_tagger(std::span<const LabeledSequence> train, const Checkpoint& model_ckpt,
                        const TaggerTrainConfig& config, std::span<const LabeledSequence> validation) {
  if (train.empty()) throw ContractError("tagger training data is empty");
  if (config.batch_size == 0) throw ContractError("batch size must be positive");
  const Model model(tagger_spec_of(model_ckpt));
  const TaggerSpec& spec = model.spec();
  validate_sentences(train, spec.config.head);
  if (!validation.empty()) validate_sentences(validation, spec.config.head);

  std::vector<std::vector<std::size_t>> ids;
  std::vector<std::vector<std::size_t>> tags;
  std::map<std::string, std::size_t> counts;
  for (std::size_t i = 0; i < train.size(); ++i) {
    ids.push_back(model.word_ids(train[i].tokens));
    tags.push_back(model.tag_ids(train[i], i));
    for (const auto& t : train[i].tokens) ++counts[t];
  }

  Checkpoint out = model_ckpt;
  out.metrics.clear();
  out.provenance.push_back("train_tagger init=" + checkpoint_id(model_ckpt) + " epochs=" +
                           std::to_string(config.epochs) + " patience=" + std::to_string(config.patience) +
                           " seed=" + std::to_string(config.seed) + " sentences=" + std::to_string(train.size()));

  ParamStore anchor;
  if (config.anchor_l2 > 0.0) {
    for (const auto& [name, t] : out.params) {
      if (name.rfind("bilm.", 0) == 0) anchor.emplace(name, t);
    }
  }
  std::optional<Tensor> transition_mask;
  if (model.crf() && spec.config.constrained) transition_mask = bio_transition_mask(spec.labels);

  AdamState adam;
  adam.config = config.adam;
  std::vector<std::size_t> order(train.size());
  double best_score = -1.0;
  std::size_t best_epoch = 0;
  ParamStore best_params;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    Rng rng(derive_seed(config.seed, "tagger-epoch-" + std::to_string(epoch)));
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);
    double total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t stop = std::min(order.size(), start + config.batch_size);
      Tape tape;
      if (spec.config.freeze_embeddings) tape.freeze(kWordEmbed);
      std::vector<Var> losses;
      for (std::size_t k = start; k < stop; ++k) {
        const std::size_t s = order[k];
        std::vector<std::size_t> input = ids[s];
        if (config.unk_replace > 0.0) {
          for (std::size_t w = 0; w < input.size(); ++w) {
            if (counts[train[s].tokens[w]] == 1 && rng.uniform() < config.unk_replace) input[w] = Vocabulary::kUnk;
          }
        }
        const std::uint64_t dropout_seed =
            derive_seed(config.seed, "dropout-" + std::to_string(epoch) + "-" + std::to_string(s));
        losses.push_back(model.loss(tape, out.params, input, train[s].tokens, tags[s], true, dropout_seed));
      }
      Var batch_loss = losses[0];
      for (std::size_t k = 1; k < losses.size(); ++k) batch_loss = ad::add(batch_loss, losses[k]);
      total += batch_loss.value().item();
      Var objective = ad::scale(batch_loss, 1.0 / static_cast<double>(losses.size()));
      for (const auto& [name, a] : anchor) {
        objective = ad::add(objective, ad::scale(ad::squared_distance(tape.parameter(name, out.params.at(name)), a),
                                                 config.anchor_l2));
      }
      Gradients grads = tape.backward(objective);
      if (transition_mask) {
        Tensor& g = grads.at(kTransitions);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] *= (*transition_mask)[i];
      }
      clip_global_norm(grads, config.clip_norm);
      adam_update(out.params, grads, adam);
    }
    std::string line = "epoch=" + std::to_string(epoch) +
                       " train_loss=" + format_double(total / static_cast<double>(train.size()));
    bool stop = false;
    if (!validation.empty()) {
      const double score = score_with(model, out.params, validation);
      line += std::string(model.crf() ? " dev_f1=" : " dev_accuracy=") + format_double(score);
      if (score > best_score) {
        best_score = score;
        best_epoch = epoch;
        best_params = out.params;
      }
      stop = config.patience > 0 && epoch - best_epoch >= config.patience;
    }
    out.metrics.push_back(line);
    log_line(LogLevel::kInfo, "task=tagger " + line);
    if (stop) break;
  }
  if (!validation.empty() && best_epoch > 0) {
    out.params = std::move(best_params);
    out.metrics.push_back("best_epoch=" + std::to_string(best_epoch) + " best_score=" + format_double(best_score));
  }
  return out;
}

Tensor tagger_emissions(std::span<const std::string> sentence, const Checkpoint& ckpt, bool train_mode,
                        std::uint64_t dropout_seed) {
  if (sentence.empty()) throw ContractError("tagger_emissions of an empty sentence");
  const Model model(tagger_spec_of(ckpt));
  Tape tape;
  return model.emissions(tape, ckpt.params, model.word_ids(sentence), sentence, train_mode, dropout_seed).value();
}

std::vector<LabeledSequence> predict(std::span<const std::vector<std::string>> sentences, const Checkpoint& ckpt) {
  const Model model(tagger_spec_of(ckpt));
  std::vector<LabeledSequence> out;
  out.reserve(sentences.size());
  for (const auto& s : sentences) out.push_back({s, model.decode(ckpt.params, s)});
  return out;
}

double tagger_score(std::span<const LabeledSequence> data, const Checkpoint& ckpt) {
  const Model model(tagger_spec_of(ckpt));
  validate_sentences(data, model.spec().config.head);
  return score_with(model, ckpt.params, data);
}

double tagger_loss(std::span<const LabeledSequence> data, const Checkpoint& ckpt) {
  if (data.empty()) throw ContractError("tagger_loss of an empty corpus");
  const Model model(tagger_spec_of(ckpt));
  validate_sentences(data, model.spec().config.head);
  double total = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    Tape tape;
    total += model.loss(tape, ckpt.params, model.word_ids(data[i].tokens), data[i].tokens, model.tag_ids(data[i], i),
                        false, 0)
                 .value()
                 .item();
  }
  return total / static_cast<double>(data.size());
}

}  // namespace seqxfer

#include "seqxfer/bilm.hpp"

#include <cmath>
#include <cstdio>
#include <set>

#include "seqxfer/errors.hpp"
#include "seqxfer/log.hpp"

namespace seqxfer {

namespace {

const std::string& lookup(const std::map<std::string, std::string>& arch, const std::string& key) {
  auto it = arch.find(key);
  if (it == arch.end()) throw DataError("architecture descriptor lacks '" + key + "'");
  return it->second;
}

std::size_t lookup_size(const std::map<std::string, std::string>& arch, const std::string& key) {
  const auto v = parse_sizes(lookup(arch, key));
  if (v.size() != 1) throw DataError("architecture entry '" + key + "' is not a single size");
  return v[0];
}

std::string lstm_name(bool reverse, std::size_t layer, const char* suffix) {
  return std::string("bilm.") + (reverse ? "bwd." : "fwd.") + std::to_string(layer) + "." + suffix;
}

}  // namespace

void write_encoder_config(std::map<std::string, std::string>& arch, const EncoderConfig& c,
                          const std::string& prefix) {
  arch[prefix + "char_dim"] = std::to_string(c.char_dim);
  arch[prefix + "filter_widths"] = join(c.widths);
  arch[prefix + "filter_counts"] = join(c.counts);
  arch[prefix + "highway_layers"] = std::to_string(c.highway_layers);
  arch[prefix + "output_dim"] = std::to_string(c.output_dim);
  arch[prefix + "max_word_len"] = std::to_string(c.max_word_len);
}

EncoderConfig read_encoder_config(const std::map<std::string, std::string>& arch, const std::string& prefix) {
  EncoderConfig c;
  c.char_dim = lookup_size(arch, prefix + "char_dim");
  c.widths = parse_sizes(lookup(arch, prefix + "filter_widths"));
  c.counts = parse_sizes(lookup(arch, prefix + "filter_counts"));
  c.highway_layers = lookup_size(arch, prefix + "highway_layers");
  c.output_dim = lookup_size(arch, prefix + "output_dim");
  c.max_word_len = lookup_size(arch, prefix + "max_word_len");
  try {
    c.validate();
  } catch (const ContractError& e) {
    throw DataError(std::string("invalid encoder descriptor: ") + e.what());
  }
  return c;
}

void write_bilm_config(std::map<std::string, std::string>& arch, const BiLMConfig& config,
                       const std::string& prefix) {
  write_encoder_config(arch, config.encoder, prefix + "encoder.");
  arch[prefix + "layers"] = std::to_string(config.layers);
  arch[prefix + "hidden"] = std::to_string(config.hidden);
}

BiLMConfig read_bilm_config(const std::map<std::string, std::string>& arch, const std::string& prefix) {
  BiLMConfig c;
  c.encoder = read_encoder_config(arch, prefix + "encoder.");
  c.layers = lookup_size(arch, prefix + "layers");
  c.hidden = lookup_size(arch, prefix + "hidden");
  if (c.layers == 0 || c.hidden == 0) throw DataError("BiLM layers and hidden size must be positive");
  return c;
}

BiLM::BiLM(BiLMConfig config) : config_(std::move(config)), encoder_(config_.encoder, "bilm.encoder.") {
  if (config_.layers == 0 || config_.hidden == 0) throw ContractError("BiLM layers and hidden size must be positive");
}

std::vector<std::pair<std::string, Shape>> BiLM::parameter_shapes(std::size_t char_vocab_size,
                                                                  std::size_t word_vocab_size) const {
  auto shapes = encoder_.parameter_shapes(char_vocab_size);
  const std::size_t d = output_dim();
  const std::size_t H = config_.hidden;
  for (bool reverse : {false, true}) {
    for (std::size_t l = 0; l < config_.layers; ++l) {
      shapes.emplace_back(lstm_name(reverse, l, "w_ih"), Shape{4 * H, d});
      shapes.emplace_back(lstm_name(reverse, l, "w_hh"), Shape{4 * H, H});
      shapes.emplace_back(lstm_name(reverse, l, "bias"), Shape{4 * H});
      shapes.emplace_back(lstm_name(reverse, l, "proj.weight"), Shape{d, H});
      shapes.emplace_back(lstm_name(reverse, l, "proj.bias"), Shape{d});
    }
  }
  if (word_vocab_size > 0) {
    shapes.emplace_back(kHeadWeight, Shape{word_vocab_size, d});
    shapes.emplace_back(kHeadBias, Shape{word_vocab_size});
  }
  return shapes;
}

ParamStore BiLM::initialize(std::size_t char_vocab_size, std::size_t word_vocab_size, std::uint64_t seed) const {
  ParamStore params;
  encoder_.initialize(params, char_vocab_size, derive_seed(seed, "encoder"));
  for (const auto& [name, shape] : parameter_shapes(char_vocab_size, word_vocab_size)) {
    if (params.count(name)) continue;
    if (name == kHeadWeight || name == kHeadBias || name.ends_with("proj.bias")) {
      params[name] = seeded_init(shape, InitScheme::kZeros, 0);
    } else if (name.ends_with(".bias")) {
      Tensor b(shape);
      const std::size_t H = config_.hidden;
      for (std::size_t j = H; j < 2 * H; ++j) b[j] = 1.0;  // forget gate
      params[name] = std::move(b);
    } else {
      params[name] = seeded_init(shape, InitScheme::kGlorotUniform, derive_seed(seed, name));
    }
  }
  return params;
}

Var BiLM::direction(Tape& tape, const ParamStore& params, Var x, bool reverse) const {
  auto p = [&](std::size_t l, const char* suffix) {
    const std::string n = lstm_name(reverse, l, suffix);
    return tape.parameter(n, params.at(n));
  };
  for (std::size_t l = 0; l < config_.layers; ++l) {
    Var gates = ad::linear(x, p(l, "w_ih"), p(l, "bias"));
    Var h = ad::lstm_sequence(gates, p(l, "w_hh"), reverse);
    x = ad::linear(h, p(l, "proj.weight"), p(l, "proj.bias"));
  }
  return x;
}

std::vector<BiLM::Directions> BiLM::run(Tape& tape, const ParamStore& params, std::span<const CharSequence> words,
                                        std::span<const std::size_t> lengths) const {
  Var encoded = encoder_.encode(tape, params, words);
  std::vector<Directions> out;
  std::size_t offset = 0;
  for (auto n : lengths) {
    Var x = ad::slice_rows(encoded, offset, n);
    out.push_back({direction(tape, params, x, false), direction(tape, params, x, true)});
    offset += n;
  }
  return out;
}

Var BiLM::contextual(Tape& tape, const ParamStore& params, std::span<const CharSequence> sentence) const {
  if (sentence.empty()) throw ContractError("contextual representation of an empty sentence");
  const std::size_t n = sentence.size();
  auto dirs = run(tape, params, sentence, std::span(&n, 1));
  Var parts[] = {dirs[0].forward, dirs[0].backward};
  return ad::hcat(parts);
}

LMLoss BiLM::loss(Tape& tape, const ParamStore& params, const LMBatch& batch) const {
  if (batch.rows == 0 || batch.unmasked() == 0) throw ContractError("bilm loss on an empty batch");
  std::vector<CharSequence> words;
  std::vector<std::size_t> lengths;
  std::vector<int> fwd_targets;
  std::vector<int> bwd_targets;
  for (std::size_t r = 0; r < batch.rows; ++r) {
    std::size_t n = 0;
    for (std::size_t k = 0; k < batch.max_tokens; ++k) {
      const std::size_t cell = r * batch.max_tokens + k;
      if (!batch.mask[cell]) continue;
      words.push_back(batch.words[cell]);
      fwd_targets.push_back(batch.forward_targets[cell]);
      bwd_targets.push_back(batch.backward_targets[cell]);
      ++n;
    }
    if (n) lengths.push_back(n);
  }

  auto dirs = run(tape, params, words, lengths);
  std::vector<Var> fwd;
  std::vector<Var> bwd;
  for (const auto& d : dirs) {
    fwd.push_back(d.forward);
    bwd.push_back(d.backward);
  }
  Var head_w = tape.parameter(kHeadWeight, params.at(kHeadWeight));
  Var head_b = tape.parameter(kHeadBias, params.at(kHeadBias));
  LMLoss out;
  out.positions = words.size();
  out.forward_nll = ad::softmax_cross_entropy(ad::linear(ad::vcat(fwd), head_w, head_b), fwd_targets);
  out.backward_nll = ad::softmax_cross_entropy(ad::linear(ad::vcat(bwd), head_w, head_b), bwd_targets);
  out.mean = ad::scale(ad::add(out.forward_nll, out.backward_nll), 0.5 / static_cast<double>(out.positions));
  return out;
}

BiLMConfig bilm_config_of(const Checkpoint& ckpt, bool require_head) {
  BiLMConfig config = read_bilm_config(ckpt.architecture);
  BiLM model(config);
  std::vector<std::string> problems;
  for (const auto& [name, shape] : model.parameter_shapes(ckpt.chars.size(), require_head ? ckpt.words.size() : 0)) {
    auto it = ckpt.params.find(name);
    if (it == ckpt.params.end()) {
      problems.push_back(name + " (missing)");
    } else if (it->second.shape() != shape) {
      problems.push_back(name + " (expected " + shape_string(shape) + ", found " +
                         shape_string(it->second.shape()) + ")");
    }
  }
  if (!problems.empty()) {
    std::string msg = "checkpoint does not hold a complete BiLM:";
    for (const auto& p : problems) msg += " " + p + ";";
    throw TransferError(msg);
  }
  return config;
}

Checkpoint make_lm_checkpoint(const BiLMConfig& config, const Vocabulary& words, const Vocabulary& chars,
                              ParamStore params) {
  Checkpoint ckpt;
  ckpt.architecture["kind"] = "lm";
  write_bilm_config(ckpt.architecture, config);
  ckpt.words = words;
  ckpt.chars = chars;
  ckpt.params = std::move(params);
  bilm_config_of(ckpt);
  return ckpt;
}

double bilm_loss(const LMBatch& batch, const Checkpoint& lm) {
  BiLM model(bilm_config_of(lm));
  Tape tape;
  return model.loss(tape, lm.params, batch).mean.value().item();
}

Checkpoint train_lm(std::span<const std::vector<std::string>> corpus, const Vocabulary& words,
                    const Vocabulary& chars, const BiLMConfig& config, const LMTrainConfig& train,
                    const Checkpoint* init) {
  if (corpus.empty()) throw ContractError("train_lm needs a non-empty corpus");
  BiLM model(config);
  Checkpoint out;
  ParamStore anchor;
  if (init) {
    const BiLMConfig init_config = bilm_config_of(*init);
    std::vector<std::string> mismatched;
    const auto want = model.parameter_shapes(chars.size(), words.size());
    for (const auto& [name, shape] : want) {
      auto it = init->params.find(name);
      if (it == init->params.end() || it->second.shape() != shape) mismatched.push_back(name);
    }
    if (!(init_config == config) || !mismatched.empty() || !(init->words == words) || !(init->chars == chars)) {
      std::string msg = "initial checkpoint does not match the requested architecture";
      if (!(init->words == words)) msg += "; word vocabulary differs";
      if (!(init->chars == chars)) msg += "; character vocabulary differs";
      if (!mismatched.empty()) {
        msg += "; mismatched parameters:";
        for (const auto& m : mismatched) msg += " " + m;
      }
      throw TransferError(msg);
    }
    out = *init;
    out.metrics.clear();
    out.provenance.push_back("train_lm init=" + checkpoint_id(*init) + " epochs=" + std::to_string(train.epochs) +
                             " seed=" + std::to_string(train.seed));
    if (train.anchor_l2 > 0.0) {
      for (const auto& [name, t] : init->params) {
        if (name != BiLM::kHeadWeight && name != BiLM::kHeadBias) anchor.emplace(name, t);
      }
    }
  } else {
    out = make_lm_checkpoint(config, words, chars, model.initialize(chars.size(), words.size(), train.seed));
    out.provenance.push_back("train_lm init=none epochs=" + std::to_string(train.epochs) +
                             " seed=" + std::to_string(train.seed));
  }

  AdamState adam;
  adam.config = train.adam;
  for (std::size_t epoch = 1; epoch <= train.epochs; ++epoch) {
    const auto batches = lm_batches(corpus, words, chars, train.batch_size, config.encoder.max_word_len,
                                    derive_seed(train.seed, "lm-epoch-" + std::to_string(epoch)));
    double nll = 0.0;
    std::size_t positions = 0;
    for (const auto& batch : batches) {
      Tape tape;
      LMLoss loss = model.loss(tape, out.params, batch);
      Var objective = loss.mean;
      for (const auto& [name, a] : anchor) {
        objective = ad::add(objective, ad::scale(ad::squared_distance(tape.parameter(name, out.params.at(name)), a),
                                                 train.anchor_l2));
      }
      Gradients grads = tape.backward(objective);
      clip_global_norm(grads, train.clip_norm);
      adam_update(out.params, grads, adam);
      nll += loss.forward_nll.value().item() + loss.backward_nll.value().item();
      positions += loss.positions;
    }
    const double mean = nll / (2.0 * static_cast<double>(positions));
    const std::string line = "epoch=" + std::to_string(epoch) + " train_loss=" + format_double(mean) +
                             " train_ppl=" + format_double(std::exp(mean));
    out.metrics.push_back(line);
    log_line(LogLevel::kInfo, "task=lm " + line);
  }
  return out;
}

Checkpoint replace_vocab_head(const Checkpoint& src, const Vocabulary& target, std::uint64_t seed) {
  const BiLMConfig config = bilm_config_of(src, false);
  if (target.kind() != Vocabulary::Kind::kWord) throw ContractError("replace_vocab_head needs a word vocabulary");
  Checkpoint out;
  out.architecture = src.architecture;
  out.provenance = src.provenance;
  out.chars = src.chars;
  out.words = target;
  for (const auto& [name, t] : src.params) {
    if (name != BiLM::kHeadWeight && name != BiLM::kHeadBias) out.params.emplace(name, t);
  }
  const std::size_t d = config.encoder.output_dim;
  out.params[BiLM::kHeadWeight] =
      seeded_init({target.size(), d}, InitScheme::kGlorotUniform, derive_seed(seed, BiLM::kHeadWeight));
  out.params[BiLM::kHeadBias] = seeded_init({target.size()}, InitScheme::kZeros, 0);
  out.provenance.push_back("replace_vocab_head source=" + checkpoint_id(src) + " replaced=" +
                           BiLM::kHeadWeight + "," + BiLM::kHeadBias + " source_vocab=" +
                           std::to_string(src.words.size()) + " target_vocab=" + std::to_string(target.size()) +
                           " seed=" + std::to_string(seed));
  bilm_config_of(out);
  return out;
}

Tensor contextual_repr(std::span<const std::string> sentence, const Checkpoint& lm) {
  if (sentence.empty()) throw ContractError("contextual_repr of an empty sentence");
  BiLM model(bilm_config_of(lm, false));
  const auto chars = char_ids(sentence, lm.chars, model.config().encoder.max_word_len);
  Tape tape;
  return model.contextual(tape, lm.params, chars).value();
}

double perplexity(std::span<const std::vector<std::string>> corpus, const Checkpoint& lm) {
  BiLM model(bilm_config_of(lm));
  const auto batches = lm_batches(corpus, lm.words, lm.chars, 32, model.config().encoder.max_word_len, 0);
  if (batches.empty()) throw ContractError("perplexity of an empty corpus");
  double nll = 0.0;
  std::size_t positions = 0;
  for (const auto& batch : batches) {
    Tape tape;
    LMLoss loss = model.loss(tape, lm.params, batch);
    nll += loss.forward_nll.value().item() + loss.backward_nll.value().item();
    positions += loss.positions;
  }
  return std::exp(nll / (2.0 * static_cast<double>(positions)));
}

std::string checkpoint_id(const Checkpoint& ckpt) {
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto& [name, t] : ckpt.params) {
    for (unsigned char c : name) {
      h ^= c;
      h *= 1099511628211ULL;
    }
    h ^= checksum(t);
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace seqxfer

#include "seqxfer/encoder.hpp"

#include <algorithm>
#include <numeric>

#include "seqxfer/errors.hpp"
#include "seqxfer/numerics.hpp"

namespace seqxfer {

std::size_t EncoderConfig::filter_total() const {
  return std::accumulate(counts.begin(), counts.end(), std::size_t{0});
}

void EncoderConfig::validate() const {
  if (widths.empty() || widths.size() != counts.size()) {
    throw ContractError("encoder needs one filter count per filter width");
  }
  if (char_dim == 0 || output_dim == 0) throw ContractError("encoder dimensions must be positive");
  if (max_word_len < 3) throw ContractError("max_word_len must be at least 3");
  for (std::size_t i = 0; i < widths.size(); ++i) {
    if (widths[i] == 0 || counts[i] == 0) throw ContractError("filter widths and counts must be positive");
    if (widths[i] > max_word_len) throw ContractError("filter width exceeds max_word_len");
  }
}

CharSequence char_ids(std::string_view word, const Vocabulary& chars, std::size_t max_len) {
  if (max_len < 3) throw ContractError("char_ids requires max_len >= 3");
  CharSequence out;
  out.word = std::string(word);
  out.ids.assign(max_len, Vocabulary::kPad);
  out.ids[0] = Vocabulary::kBos;
  std::size_t pos = 1;
  for (const auto& c : utf8_chars(word)) {
    if (pos == max_len - 1) break;
    out.ids[pos++] = static_cast<std::size_t>(chars.id(c));
  }
  out.ids[pos++] = Vocabulary::kEos;
  out.length = pos;
  return out;
}

std::vector<CharSequence> char_ids(std::span<const std::string> words, const Vocabulary& chars,
                                   std::size_t max_len) {
  std::vector<CharSequence> out;
  out.reserve(words.size());
  for (const auto& w : words) out.push_back(char_ids(w, chars, max_len));
  return out;
}

Var highway(Var x, Var gate_weight, Var gate_bias, Var transform_weight, Var transform_bias) {
  Var gate = ad::sigmoid(ad::linear(x, gate_weight, gate_bias));
  Var transformed = ad::linear(x, transform_weight, transform_bias);
  return ad::add(x, ad::mul(gate, ad::sub(transformed, x)));
}

Tensor highway_forward(const Tensor& x, const HighwayLayer& layer) {
  const std::size_t d = layer.gate_weight.rows();
  if (x.size() != d || layer.gate_weight.cols() != d || layer.transform_weight.rows() != d ||
      layer.transform_weight.cols() != d || layer.gate_bias.size() != d || layer.transform_bias.size() != d) {
    throw ContractError("highway_forward: input of size " + std::to_string(x.size()) +
                        " does not match a layer of dimension " + std::to_string(d));
  }
  Tape tape;
  Var in = tape.constant(Tensor({1, d}, x.values()));
  Var out = highway(in, tape.constant(layer.gate_weight), tape.constant(layer.gate_bias),
                    tape.constant(layer.transform_weight), tape.constant(layer.transform_bias));
  return Tensor({d}, out.value().values());
}

CharEncoder::CharEncoder(EncoderConfig config, std::string prefix)
    : config_(std::move(config)), prefix_(std::move(prefix)) {
  config_.validate();
}

std::vector<std::pair<std::string, Shape>> CharEncoder::parameter_shapes(std::size_t char_vocab_size) const {
  std::vector<std::pair<std::string, Shape>> shapes;
  shapes.emplace_back(name("char_embed"), Shape{char_vocab_size, config_.char_dim});
  for (std::size_t i = 0; i < config_.widths.size(); ++i) {
    const std::string bank = "conv" + std::to_string(i);
    shapes.emplace_back(name(bank + ".weight"), Shape{config_.counts[i], config_.widths[i] * config_.char_dim});
    shapes.emplace_back(name(bank + ".bias"), Shape{config_.counts[i]});
  }
  const std::size_t d = config_.filter_total();
  for (std::size_t i = 0; i < config_.highway_layers; ++i) {
    const std::string layer = "highway" + std::to_string(i);
    shapes.emplace_back(name(layer + ".gate.weight"), Shape{d, d});
    shapes.emplace_back(name(layer + ".gate.bias"), Shape{d});
    shapes.emplace_back(name(layer + ".transform.weight"), Shape{d, d});
    shapes.emplace_back(name(layer + ".transform.bias"), Shape{d});
  }
  shapes.emplace_back(name("proj.weight"), Shape{config_.output_dim, d});
  shapes.emplace_back(name("proj.bias"), Shape{config_.output_dim});
  return shapes;
}

void CharEncoder::initialize(ParamStore& params, std::size_t char_vocab_size, std::uint64_t seed) const {
  for (const auto& [pname, shape] : parameter_shapes(char_vocab_size)) {
    Tensor t;
    if (pname.ends_with(".gate.bias")) {
      // Start the highway layers close to carry behaviour.
      t = seeded_init(shape, InitScheme::kConstant, 0, -1.0);
    } else if (pname.ends_with(".bias")) {
      t = seeded_init(shape, InitScheme::kZeros, 0);
    } else {
      t = seeded_init(shape, InitScheme::kGlorotUniform, derive_seed(seed, pname));
    }
    if (pname == name("char_embed")) {
      for (std::size_t c = 0; c < config_.char_dim; ++c) t.at(Vocabulary::kPad, c) = 0.0;
    }
    params[pname] = std::move(t);
  }
}

Var CharEncoder::encode(Tape& tape, const ParamStore& params, std::span<const CharSequence> words) const {
  if (words.empty()) throw ContractError("encode called with no words");
  const std::size_t L = config_.max_word_len;
  std::vector<std::size_t> flat;
  flat.reserve(words.size() * L);
  for (const auto& w : words) {
    if (w.ids.size() != L) {
      throw ContractError("word '" + w.word + "' is padded to " + std::to_string(w.ids.size()) +
                          " characters, encoder expects " + std::to_string(L));
    }
    flat.insert(flat.end(), w.ids.begin(), w.ids.end());
  }

  Var table = tape.parameter(name("char_embed"), params.at(name("char_embed")));
  Var embedded = ad::gather_rows(table, flat);

  std::vector<Var> pooled;
  std::vector<std::size_t> valid(words.size());
  for (std::size_t i = 0; i < config_.widths.size(); ++i) {
    const std::size_t width = config_.widths[i];
    const std::size_t windows = L - width + 1;
    // A window is kept when it lies inside BOW..EOW; words shorter than the
    // filter keep their first window so pooling is never empty.
    for (std::size_t k = 0; k < words.size(); ++k) {
      valid[k] = words[k].length >= width ? words[k].length - width + 1 : 1;
    }
    const std::string bank = "conv" + std::to_string(i);
    Var conv = ad::tanh(ad::linear(ad::unfold(embedded, L, width),
                                   tape.parameter(name(bank + ".weight"), params.at(name(bank + ".weight"))),
                                   tape.parameter(name(bank + ".bias"), params.at(name(bank + ".bias")))));
    pooled.push_back(ad::segment_max(conv, windows, valid));
  }
  Var x = ad::hcat(pooled);

  for (std::size_t i = 0; i < config_.highway_layers; ++i) {
    const std::string layer = "highway" + std::to_string(i);
    auto p = [&](const std::string& suffix) {
      return tape.parameter(name(layer + suffix), params.at(name(layer + suffix)));
    };
    x = highway(x, p(".gate.weight"), p(".gate.bias"), p(".transform.weight"), p(".transform.bias"));
  }
  return ad::linear(x, tape.parameter(name("proj.weight"), params.at(name("proj.weight"))),
                    tape.parameter(name("proj.bias"), params.at(name("proj.bias"))));
}

Tensor encode_word(const CharSequence& chars, const ParamStore& params, const CharEncoder& encoder) {
  Tape tape;
  const Tensor& out = encoder.encode(tape, params, std::span(&chars, 1)).value();
  return Tensor({out.cols()}, out.values());
}

}  // namespace seqxfer

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "seqxfer/autodiff.hpp"
#include "seqxfer/vocab.hpp"

namespace seqxfer {

struct EncoderConfig {
  std::size_t char_dim = 16;
  std::vector<std::size_t> widths{1, 2, 3, 4};
  std::vector<std::size_t> counts{8, 8, 16, 16};
  std::size_t highway_layers = 2;
  std::size_t output_dim = 64;
  std::size_t max_word_len = 20;

  /// Width of the concatenated pooled filter outputs (the highway input).
  std::size_t filter_total() const;
  void validate() const;
  bool operator==(const EncoderConfig&) const = default;
};

/// A word as padded character ids: [BOW, c_1 .. c_k, EOW, PAD ...].
struct CharSequence {
  std::string word;
  std::vector<std::size_t> ids;
  /// Number of leading non-PAD positions (markers included).
  std::size_t length = 0;
};

/// Words longer than max_len - 2 characters keep their first max_len - 2.
CharSequence char_ids(std::string_view word, const Vocabulary& chars, std::size_t max_len);

std::vector<CharSequence> char_ids(std::span<const std::string> words, const Vocabulary& chars,
                                   std::size_t max_len);

/// x_out = T * (W_H x + b_H) + (1 - T) * x with gate T = sigmoid(W_T x + b_T),
/// applied row-wise to x [n, d].
Var highway(Var x, Var gate_weight, Var gate_bias, Var transform_weight, Var transform_bias);

struct HighwayLayer {
  Tensor gate_weight;       // [d, d]
  Tensor gate_bias;         // [d]
  Tensor transform_weight;  // [d, d]
  Tensor transform_bias;    // [d]
};

/// Single-vector convenience form of highway().
Tensor highway_forward(const Tensor& x, const HighwayLayer& layer);

/// Character CNN word encoder: embeddings, one convolution bank per filter
/// width with max-over-time pooling, highway layers and a linear projection.
/// Parameters live in a ParamStore under `prefix`.
class CharEncoder {
 public:
  CharEncoder(EncoderConfig config, std::string prefix);

  const EncoderConfig& config() const { return config_; }
  const std::string& prefix() const { return prefix_; }

  std::vector<std::pair<std::string, Shape>> parameter_shapes(std::size_t char_vocab_size) const;
  void initialize(ParamStore& params, std::size_t char_vocab_size, std::uint64_t seed) const;

  /// Encodes every word; returns [words.size(), output_dim].
  Var encode(Tape& tape, const ParamStore& params, std::span<const CharSequence> words) const;

 private:
  std::string name(std::string_view suffix) const { return prefix_ + std::string(suffix); }

  EncoderConfig config_;
  std::string prefix_;
};

Tensor encode_word(const CharSequence& chars, const ParamStore& params, const CharEncoder& encoder);

}  // namespace seqxfer

#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "seqxfer/autodiff.hpp"
#include "seqxfer/checkpoint.hpp"
#include "seqxfer/corpus.hpp"
#include "seqxfer/encoder.hpp"
#include "seqxfer/numerics.hpp"

namespace seqxfer {

struct BiLMConfig {
  EncoderConfig encoder;
  std::size_t layers = 1;
  std::size_t hidden = 128;

  bool operator==(const BiLMConfig&) const = default;
};

void write_encoder_config(std::map<std::string, std::string>& arch, const EncoderConfig& config,
                          const std::string& prefix);
EncoderConfig read_encoder_config(const std::map<std::string, std::string>& arch, const std::string& prefix);

/// Writes the descriptor under "<prefix>..." keys and reads it back.
void write_bilm_config(std::map<std::string, std::string>& arch, const BiLMConfig& config,
                       const std::string& prefix = "bilm.");
BiLMConfig read_bilm_config(const std::map<std::string, std::string>& arch, const std::string& prefix = "bilm.");

/// Summed per-direction NLL over `positions` target positions.
struct LMLoss {
  Var forward_nll;
  Var backward_nll;
  std::size_t positions = 0;
  /// (forward + backward) / (2 * positions): mean NLL per direction per token.
  Var mean;
};

/// Bidirectional LM: a shared character encoder feeds a forward and a
/// backward LSTM stack (each layer projected back to the encoder width),
/// and both directions predict words through one shared softmax head.
/// Parameter names all start with "bilm."; the head is "bilm.softmax.*".
class BiLM {
 public:
  static constexpr const char* kHeadWeight = "bilm.softmax.weight";
  static constexpr const char* kHeadBias = "bilm.softmax.bias";

  explicit BiLM(BiLMConfig config);

  const BiLMConfig& config() const { return config_; }
  const CharEncoder& encoder() const { return encoder_; }
  std::size_t output_dim() const { return config_.encoder.output_dim; }

  /// All parameter shapes; the head is included when word_vocab_size > 0.
  std::vector<std::pair<std::string, Shape>> parameter_shapes(std::size_t char_vocab_size,
                                                              std::size_t word_vocab_size) const;
  /// Glorot weights, zero biases (forget gates at 1) and an all-zero head.
  ParamStore initialize(std::size_t char_vocab_size, std::size_t word_vocab_size, std::uint64_t seed) const;

  struct Directions {
    Var forward;   // [n, output_dim]
    Var backward;  // [n, output_dim]
  };
  /// Last-layer outputs for consecutive sentences packed into `words`;
  /// `lengths` gives each sentence's token count.
  std::vector<Directions> run(Tape& tape, const ParamStore& params, std::span<const CharSequence> words,
                              std::span<const std::size_t> lengths) const;

  /// [n, 2 * output_dim]: forward output then backward output per token.
  Var contextual(Tape& tape, const ParamStore& params, std::span<const CharSequence> sentence) const;

  LMLoss loss(Tape& tape, const ParamStore& params, const LMBatch& batch) const;

 private:
  Var direction(Tape& tape, const ParamStore& params, Var x, bool reverse) const;

  BiLMConfig config_;
  CharEncoder encoder_;
};

struct LMTrainConfig {
  std::uint64_t seed = 1;
  std::size_t epochs = 10;
  std::size_t batch_size = 32;
  AdamConfig adam;
  double clip_norm = 5.0;
  /// L2 pull towards the initial checkpoint's weights (head excluded).
  double anchor_l2 = 0.0;
};

/// Reconstructs the configuration and validates every parameter shape.
/// Throws TransferError naming each missing or mismatched parameter.
BiLMConfig bilm_config_of(const Checkpoint& ckpt, bool require_head = true);

Checkpoint make_lm_checkpoint(const BiLMConfig& config, const Vocabulary& words, const Vocabulary& chars,
                              ParamStore params);

/// Mean per-direction NLL of one batch (no gradient).
double bilm_loss(const LMBatch& batch, const Checkpoint& lm);

/// Trains with Adam over seeded LM batches. With `init`, training resumes
/// from its weights (its architecture and vocabularies must match).
/// Per-epoch train loss and perplexity go into the checkpoint metrics.
Checkpoint train_lm(std::span<const std::vector<std::string>> corpus, const Vocabulary& words,
                    const Vocabulary& chars, const BiLMConfig& config, const LMTrainConfig& train,
                    const Checkpoint* init = nullptr);

/// Keeps the encoder and both LSTM stacks bit-exactly and re-creates the
/// softmax head for `target` with seeded Glorot weights and zero bias.
Checkpoint replace_vocab_head(const Checkpoint& src, const Vocabulary& target, std::uint64_t seed);

/// [len, 2 * output_dim] last-layer representations.
Tensor contextual_repr(std::span<const std::string> sentence, const Checkpoint& lm);

/// exp of the mean per-direction per-token NLL over the corpus.
double perplexity(std::span<const std::vector<std::string>> corpus, const Checkpoint& lm);

/// Hex digest of all parameter checksums; identifies a checkpoint in provenance logs.
std::string checkpoint_id(const Checkpoint& ckpt);

}  // namespace seqxfer

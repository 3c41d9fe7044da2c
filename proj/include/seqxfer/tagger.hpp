#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "seqxfer/bilm.hpp"
#include "seqxfer/checkpoint.hpp"
#include "seqxfer/corpus.hpp"
#include "seqxfer/numerics.hpp"

namespace seqxfer {

enum class TaggerHead { kCrf, kSoftmax };

std::string head_name(TaggerHead head);
TaggerHead parse_head(const std::string& name);

struct TaggerConfig {
  std::size_t word_dim = 50;
  std::size_t hidden = 200;  // per direction
  std::size_t layers = 2;
  TaggerHead head = TaggerHead::kCrf;
  bool freeze_embeddings = false;
  /// Applied to the contextual vector only, during training.
  double dropout = 0.5;
  /// BIO-violating CRF transitions stay at kForbiddenTransition.
  bool constrained = true;

  bool operator==(const TaggerConfig&) const = default;
};

/// Everything needed to lay out a tagger's parameters.
struct TaggerSpec {
  TaggerConfig config;
  std::vector<std::string> labels;
  Vocabulary words{Vocabulary::Kind::kWord, {}};
  Vocabulary chars{Vocabulary::Kind::kChar, {}};
  /// Present when a BiLM provides contextual vectors.
  std::optional<BiLMConfig> bilm;
};

/// CRF heads: O first, then B-X, I-X per type in sorted order.
/// Softmax heads: the distinct tags, sorted.
std::vector<std::string> label_set(std::span<const LabeledSequence> data, TaggerHead head);

/// Word vocabulary and labels from `train`. With `lm`, its BiLM is attached
/// and its character vocabulary adopted.
TaggerSpec tagger_spec_from_data(std::span<const LabeledSequence> train, const TaggerConfig& config,
                                 const Checkpoint* lm = nullptr);

/// Parameter names and shapes in a fixed order. Names: tagger.word_embed,
/// tagger.lstm<l>.<fwd|bwd>.<w_ih|w_hh|bias>, tagger.emission.<weight|bias>,
/// tagger.crf.transitions, plus the attached BiLM's bilm.* (no softmax head).
std::vector<std::pair<std::string, Shape>> tagger_parameter_shapes(const TaggerSpec& spec);

void write_tagger_spec(Checkpoint& ckpt, const TaggerSpec& spec);
/// Reads the descriptor and checks every parameter shape (TransferError on mismatch).
TaggerSpec tagger_spec_of(const Checkpoint& ckpt);

/// A freshly initialized tagger. BiLM weights come from `lm` when given,
/// embedding rows from `vectors` when given.
Checkpoint init_tagger(const TaggerSpec& spec, std::uint64_t seed, const Checkpoint* lm = nullptr,
                       const WordVectors* vectors = nullptr);

/// Seeded Glorot weights (zero biases, forget gates at 1, zero transitions
/// with forbidden entries pinned) for one named parameter.
Tensor init_tagger_parameter(const TaggerSpec& spec, const std::string& name, const Shape& shape,
                             std::uint64_t seed);

struct TaggerTrainConfig {
  std::uint64_t seed = 1;
  std::size_t epochs = 10;
  /// Epochs without validation improvement before stopping; 0 disables.
  std::size_t patience = 0;
  std::size_t batch_size = 32;
  AdamConfig adam;
  double clip_norm = 5.0;
  /// L2 pull of the attached BiLM towards its starting weights.
  double anchor_l2 = 1e-3;
  /// Probability of feeding UNK for a word seen once in training.
  double unk_replace = 0.1;
};

/// Trains `model` (from init_tagger or transfer_init). Without validation
/// data exactly `epochs` epochs run; with it, training stops after
/// `patience` epochs without improvement and the best epoch's weights are
/// returned. Invalid BIO or unknown labels throw DataError naming the sentence.
Checkpoint train_tagger(std::span<const LabeledSequence> train, const Checkpoint& model,
                        const TaggerTrainConfig& config, std::span<const LabeledSequence> validation = {});

/// [len, labels] label scores. With train_mode, dropout uses `dropout_seed`.
Tensor tagger_emissions(std::span<const std::string> sentence, const Checkpoint& model, bool train_mode = false,
                        std::uint64_t dropout_seed = 0);

/// Viterbi (CRF) or per-token argmax (softmax) labels for each sentence.
std::vector<LabeledSequence> predict(std::span<const std::vector<std::string>> sentences, const Checkpoint& model);

/// Span F1 for CRF heads, token accuracy (percent) for softmax heads.
double tagger_score(std::span<const LabeledSequence> data, const Checkpoint& model);

/// Training objective of one sentence (CRF NLL or summed cross-entropy),
/// without dropout. Parameters are registered under their checkpoint names.
Var tagger_sentence_loss(Tape& tape, const TaggerSpec& spec, const ParamStore& params, const LabeledSequence& sentence);

/// Mean per-sentence training objective over `data` without dropout or UNK replacement.
double tagger_loss(std::span<const LabeledSequence> data, const Checkpoint& model);

}  // namespace seqxfer

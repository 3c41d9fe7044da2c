#include "cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

#include "seqxfer/bilm.hpp"
#include "seqxfer/checkpoint.hpp"
#include "seqxfer/corpus.hpp"
#include "seqxfer/errors.hpp"
#include "seqxfer/eval.hpp"
#include "seqxfer/log.hpp"
#include "seqxfer/tagger.hpp"
#include "seqxfer/transfer.hpp"

namespace seqxfer::cli {

namespace {

namespace fs = std::filesystem;

struct Options {
  std::string init, corpus, train, dev, test, vectors, out = ".", policy, gold, pred, reference, head;
  std::vector<std::string> share_chars;
  std::uint64_t seed = 1;
  std::size_t epochs = 10;
  std::size_t finetune_epochs = 3;
  std::string eval_out;
  std::size_t patience = 0;
  std::size_t batch_size = 32;
  double lr = 0.001;
  double clip = 5.0;
  double anchor = 1e-3;
  double dropout = 0.5;
  double unk_replace = 0.1;
  std::size_t word_dim = 50, hidden = 200, layers = 2;
  std::size_t lm_hidden = 128, lm_layers = 1, char_dim = 16, lm_output = 64, max_word_len = 20, highway = 2;
  std::vector<std::size_t> filter_widths{1, 2, 3, 4}, filter_counts{8, 8, 16, 16};
  std::size_t min_count = 1;
  std::size_t token_col = 0, tag_col = 1;
  bool freeze = false;
  bool unconstrained = false;
  std::string normalize = "reference";
  bool fold_case = false;
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot write " + path.string());
  f << text;
  if (!f) throw DataError("failed writing " + path.string());
}

fs::path out_dir(const Options& o) {
  fs::path dir(o.out);
  fs::create_directories(dir);
  return dir;
}

std::string lines(const std::vector<std::string>& items) {
  std::string s;
  for (const auto& l : items) s += l + '\n';
  return s;
}

BiLMConfig lm_config(const Options& o) {
  BiLMConfig c;
  c.encoder.char_dim = o.char_dim;
  c.encoder.widths = o.filter_widths;
  c.encoder.counts = o.filter_counts;
  c.encoder.highway_layers = o.highway;
  c.encoder.output_dim = o.lm_output;
  c.encoder.max_word_len = o.max_word_len;
  c.encoder.validate();
  c.hidden = o.lm_hidden;
  c.layers = o.lm_layers;
  return c;
}

LMTrainConfig lm_train(const Options& o, double anchor) {
  LMTrainConfig t;
  t.seed = o.seed;
  t.epochs = o.epochs;
  t.batch_size = o.batch_size;
  t.adam.lr = o.lr;
  t.clip_norm = o.clip;
  t.anchor_l2 = anchor;
  return t;
}

int pretrain_lm(const Options& o, std::ostream& out) {
  const auto corpus = read_token_lines_file(o.corpus);
  std::vector<std::vector<std::vector<std::string>>> corpora{corpus};
  for (const auto& path : o.share_chars) corpora.push_back(read_token_lines_file(path));
  const Vocabulary chars = build_shared_char_vocab(corpora);
  const Vocabulary words = build_vocab(corpus, o.min_count);
  const Checkpoint lm = train_lm(corpus, words, chars, lm_config(o), lm_train(o, 0.0));
  const auto dir = out_dir(o);
  save_checkpoint_file((dir / "lm.ckpt").string(), lm);
  const double ppl = perplexity(corpus, lm);
  write_text(dir / "metrics.txt", lines(lm.metrics) + "metric=perplexity value=" + format_double(ppl) + '\n');
  out << "wrote " << (dir / "lm.ckpt").string() << " perplexity=" << format_double(ppl) << '\n';
  return 0;
}

int finetune_lm(const Options& o, std::ostream& out) {
  const Checkpoint source = load_checkpoint_file(o.init);
  const auto corpus = read_token_lines_file(o.corpus);
  const Vocabulary words = build_vocab(corpus, o.min_count);
  const Checkpoint surgered = replace_vocab_head(source, words, o.seed);
  const double before = perplexity(corpus, surgered);
  const Checkpoint tuned =
      train_lm(corpus, words, surgered.chars, bilm_config_of(surgered), lm_train(o, o.anchor), &surgered);
  const double after = perplexity(corpus, tuned);
  const auto dir = out_dir(o);
  save_checkpoint_file((dir / "lm.ckpt").string(), tuned);
  write_text(dir / "metrics.txt", lines(tuned.metrics) + "metric=perplexity_before value=" + format_double(before) +
                                      "\nmetric=perplexity_after value=" + format_double(after) + '\n');
  out << "wrote " << (dir / "lm.ckpt").string() << " perplexity_before=" << format_double(before)
      << " perplexity_after=" << format_double(after) << '\n';
  return 0;
}

TaggerConfig tagger_config(const Options& o, TaggerHead default_head) {
  TaggerConfig c;
  c.word_dim = o.word_dim;
  c.hidden = o.hidden;
  c.layers = o.layers;
  c.head = o.head.empty() ? default_head : parse_head(o.head);
  c.freeze_embeddings = o.freeze;
  c.dropout = o.dropout;
  c.constrained = !o.unconstrained;
  return c;
}

// Builds the untrained target model, from scratch or from --init.
Checkpoint initial_tagger(const Options& o, const CLI::App& sub, const std::vector<LabeledSequence>& train,
                          TaggerHead default_head, const fs::path& dir) {
  TaggerConfig config = tagger_config(o, default_head);
  if (o.init.empty()) {
    const TaggerSpec spec = tagger_spec_from_data(train, config);
    if (o.vectors.empty()) return init_tagger(spec, o.seed);
    const WordVectors v = load_word_vectors_file(o.vectors, spec.words, config.word_dim, o.seed);
    log_line(LogLevel::kInfo, "event=vectors coverage=" + format_double(v.coverage));
    return init_tagger(spec, o.seed, nullptr, &v);
  }

  const Checkpoint source = load_checkpoint_file(o.init);
  const bool from_tagger = source.arch("kind") == "tagger";
  const bool has_bilm = !from_tagger || source.arch("bilm.attached") == "1";
  if (from_tagger) {
    // Trunk sizes follow the source unless given explicitly.
    const TaggerSpec src = tagger_spec_of(source);
    if (sub.count("--word-dim") == 0) config.word_dim = src.config.word_dim;
    if (sub.count("--hidden") == 0) config.hidden = src.config.hidden;
    if (sub.count("--layers") == 0) config.layers = src.config.layers;
  }
  const TaggerSpec spec = tagger_spec_from_data(train, config, has_bilm ? &source : nullptr);
  const TransferPolicy policy = parse_policy(o.policy, default_policy(source, spec));
  TransferResult result = transfer_init(source, spec, policy, o.seed);
  if (has_bilm) result.report.char_coverage = char_coverage(tokens_of(train), source.chars);
  if (!o.vectors.empty()) {
    bool reinitialized = false;
    for (const auto& [name, _] : result.report.reinitialized) reinitialized |= name == "tagger.word_embed";
    if (reinitialized) {
      result.model.params["tagger.word_embed"] =
          load_word_vectors_file(o.vectors, spec.words, config.word_dim, o.seed).embeddings;
    }
  }
  write_text(dir / "transfer_report.txt", format_report(result.report));
  return result.model;
}

std::string score_line(const Checkpoint& model, const std::vector<LabeledSequence>& data, const char* split) {
  const bool crf = model.arch("tagger.head") == "crf";
  return std::string("metric=") + (crf ? "f1" : "accuracy") + " split=" + split +
         " value=" + format_percent(tagger_score(data, model)) + '\n';
}

int train_tagger_command(const Options& o, const CLI::App& sub, TaggerHead default_head, std::ostream& out) {
  const auto train = read_conll_file(o.train, o.token_col, o.tag_col);
  std::vector<LabeledSequence> dev;
  if (!o.dev.empty()) dev = read_conll_file(o.dev, o.token_col, o.tag_col);
  const auto dir = out_dir(o);
  const Checkpoint initial = initial_tagger(o, sub, train, default_head, dir);

  TaggerTrainConfig t;
  t.seed = o.seed;
  t.epochs = o.epochs;
  t.patience = o.patience;
  t.batch_size = o.batch_size;
  t.adam.lr = o.lr;
  t.clip_norm = o.clip;
  t.anchor_l2 = o.anchor;
  t.unk_replace = o.unk_replace;
  const Checkpoint model = train_tagger(train, initial, t, dev);
  save_checkpoint_file((dir / "tagger.ckpt").string(), model);

  std::string metrics = lines(model.metrics) + score_line(model, train, "train");
  if (!dev.empty()) metrics += score_line(model, dev, "dev");
  if (!o.test.empty()) {
    const auto test = read_conll_file(o.test, o.token_col, o.tag_col);
    const auto pred = predict(tokens_of(test), model);
    write_conll_file((dir / "predictions.conll").string(), pred);
    metrics += score_line(model, test, "test");
    if (model.arch("tagger.head") == "crf") metrics += format_metrics(span_f1(test, pred), "test");
  }
  write_text(dir / "metrics.txt", metrics);
  out << "wrote " << (dir / "tagger.ckpt").string() << '\n' << metrics;
  return 0;
}

int transfer_init_command(const Options& o, const CLI::App& sub, std::ostream& out) {
  const auto train = read_conll_file(o.train, o.token_col, o.tag_col);
  const auto dir = out_dir(o);
  const Checkpoint model = initial_tagger(o, sub, train, TaggerHead::kCrf, dir);
  save_checkpoint_file((dir / "tagger.ckpt").string(), model);
  out << "wrote " << (dir / "tagger.ckpt").string() << " and " << (dir / "transfer_report.txt").string() << '\n';
  return 0;
}

int evaluate(const Options& o, std::ostream& out) {
  const auto gold = read_conll_file(o.gold, o.token_col, o.tag_col);
  std::vector<LabeledSequence> pred;
  if (!o.init.empty()) {
    pred = predict(tokens_of(gold), load_checkpoint_file(o.init));
  } else if (!o.pred.empty()) {
    pred = read_conll_file(o.pred, o.token_col, o.tag_col);
  } else {
    throw CLI::ValidationError("evaluate needs --pred or --init");
  }
  const std::string report = format_metrics(span_f1(gold, pred), "evaluation");
  out << report;
  if (!o.init.empty() || !o.eval_out.empty()) {
    Options where = o;
    if (!o.eval_out.empty()) where.out = o.eval_out;
    const auto dir = out_dir(where);
    write_text(dir / "metrics.txt", report);
    if (!o.init.empty()) write_conll_file((dir / "predictions.conll").string(), pred);
  }
  return 0;
}

int analyze(const Options& o, std::ostream& out) {
  const auto source = read_conll_file(o.corpus, o.token_col, o.tag_col);
  const auto reference = read_conll_file(o.reference, o.token_col, o.tag_col);
  OverlapOptions opts;
  opts.normalization = o.normalize == "source" ? OverlapNormalization::kSource : OverlapNormalization::kReference;
  opts.fold_case = o.fold_case;
  const double vocab = vocab_overlap(tokens_of(source), tokens_of(reference), opts);
  const std::string report = "source=" + o.corpus + "\nreference=" + o.reference + '\n' +
                             format_overlap(vocab, word_tag_overlap(source, reference, opts), opts) +
                             format_entity_counts(entity_counts(source), "source") +
                             format_entity_counts(entity_counts(reference), "reference");
  out << report;
  write_text(out_dir(o) / "overlap.txt", report);
  return 0;
}

int convert_bio(const Options& o, std::ostream& out) {
  auto data = read_conll_file(o.corpus, o.token_col, o.tag_col);
  for (auto& s : data) s.tags = contiguous_to_bio(s.tags);
  const auto path = out_dir(o) / "converted.conll";
  write_conll_file(path.string(), data);
  out << "wrote " << path.string() << " sentences=" << data.size() << '\n';
  return 0;
}

int predict_command(const Options& o, std::ostream& out) {
  const Checkpoint model = load_checkpoint_file(o.init);
  const auto sentences = read_token_lines_file(o.test);
  const auto pred = predict(sentences, model);
  const auto path = out_dir(o) / "predictions.conll";
  write_conll_file(path.string(), pred);
  out << "wrote " << path.string() << " sentences=" << pred.size() << '\n';
  return 0;
}

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  return s.substr(a, s.find_last_not_of(" \t\r") - a + 1);
}

// Replaces "--config FILE" with the file's key=value lines as flags,
// placed before the command-line flags. Keys already given on the command
// line are left out so the command line wins. '#' starts a comment.
std::vector<std::string> expand_config(std::vector<std::string> args) {
  std::vector<std::string> rest;
  std::string path;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config") {
      if (i + 1 >= args.size()) throw UsageError("--config needs a file name");
      path = args[++i];
    } else if (args[i].rfind("--config=", 0) == 0) {
      path = args[i].substr(9);
    } else {
      rest.push_back(args[i]);
    }
  }
  if (path.empty()) return args;
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read config file " + path);
  auto given = [&](const std::string& flag) {
    for (const auto& a : rest) {
      if (a == flag || a.rfind(flag + "=", 0) == 0) return true;
    }
    return false;
  };
  std::vector<std::string> extra;
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    line = trim(line.substr(0, line.find('#')));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw UsageError(path + ": line " + std::to_string(n) + ": expected key=value");
    std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.rfind("--", 0) != 0) key = "--" + key;
    if (given(key)) continue;
    if (value == "true" || value == "false") {
      if (value == "true") extra.push_back(key);
    } else {
      extra.push_back(key);
      extra.push_back(value);
    }
  }
  // rest[0] is the program name and rest[1] the subcommand.
  const std::size_t at = std::min<std::size_t>(rest.size(), 2);
  rest.insert(rest.begin() + static_cast<std::ptrdiff_t>(at), extra.begin(), extra.end());
  return rest;
}

void add_common(CLI::App* sub, Options& o) {
  sub->add_option("--seed", o.seed, "random seed")->capture_default_str();
  sub->add_option("--out", o.out, "output directory")->capture_default_str();
}

void add_columns(CLI::App* sub, Options& o) {
  sub->add_option("--token-col", o.token_col, "token column in CoNLL files")->capture_default_str();
  sub->add_option("--tag-col", o.tag_col, "tag column in CoNLL files")->capture_default_str();
}

void add_optimizer(CLI::App* sub, Options& o, std::size_t& epochs) {
  sub->add_option("--epochs", epochs)->check(CLI::PositiveNumber)->capture_default_str();
  sub->add_option("--batch-size", o.batch_size)->check(CLI::PositiveNumber)->capture_default_str();
  sub->add_option("--lr", o.lr)->check(CLI::NonNegativeNumber)->capture_default_str();
  sub->add_option("--clip", o.clip)->check(CLI::PositiveNumber)->capture_default_str();
}

void add_lm_dims(CLI::App* sub, Options& o) {
  sub->add_option("--lm-hidden", o.lm_hidden)->check(CLI::PositiveNumber)->capture_default_str();
  sub->add_option("--lm-layers", o.lm_layers)->check(CLI::PositiveNumber)->capture_default_str();
  sub->add_option("--char-dim", o.char_dim)->check(CLI::PositiveNumber)->capture_default_str();
  sub->add_option("--lm-output", o.lm_output, "character encoder and LM output width")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  sub->add_option("--highway", o.highway)->capture_default_str();
  sub->add_option("--filter-widths", o.filter_widths)->delimiter(',')->capture_default_str();
  sub->add_option("--filter-counts", o.filter_counts)->delimiter(',')->capture_default_str();
  sub->add_option("--max-word-len", o.max_word_len)->check(CLI::PositiveNumber)->capture_default_str();
  sub->add_option("--min-count", o.min_count)->check(CLI::PositiveNumber)->capture_default_str();
}

void add_tagger(CLI::App* sub, Options& o) {
  sub->add_option("--train", o.train, "training CoNLL file")->required()->check(CLI::ExistingFile);
  sub->add_option("--init", o.init, "language model or tagger checkpoint to start from")->check(CLI::ExistingFile);
  sub->add_option("--vectors", o.vectors, "word vectors, one 'word v1 ... vd' line each")->check(CLI::ExistingFile);
  sub->add_option("--head", o.head, "crf or softmax")->check(CLI::IsMember({"crf", "softmax"}));
  sub->add_option("--policy", o.policy, "group=action overrides, e.g. trunk=copy,crf=reinitialize");
  sub->add_option("--word-dim", o.word_dim)->check(CLI::PositiveNumber)->capture_default_str();
  sub->add_option("--hidden", o.hidden)->check(CLI::PositiveNumber)->capture_default_str();
  sub->add_option("--layers", o.layers)->check(CLI::PositiveNumber)->capture_default_str();
  sub->add_option("--dropout", o.dropout)->check(CLI::Range(0.0, 0.99))->capture_default_str();
  sub->add_option("--anchor-l2", o.anchor, "L2 pull of BiLM weights towards their start")->capture_default_str();
  sub->add_flag("--freeze-embeddings", o.freeze);
  sub->add_flag("--unconstrained", o.unconstrained, "let the CRF learn BIO-violating transitions");
  add_columns(sub, o);
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Character-aware BiLM and BiLSTM-CRF training with cross-lingual transfer", "seqxfer"};
  app.require_subcommand(1);
  app.footer("Every subcommand also accepts --config FILE: key=value lines (e.g. 'epochs = 3') read as flags;\n"
             "flags on the command line take precedence. SEQXFER_LOG=debug|info|warn sets log verbosity.");
  Options o;

  auto* pretrain = app.add_subcommand("pretrain-lm", "train a bidirectional language model");
  add_common(pretrain, o);
  add_optimizer(pretrain, o, o.epochs);
  add_lm_dims(pretrain, o);
  pretrain->add_option("--corpus", o.corpus, "one tokenized sentence per line")->required()->check(CLI::ExistingFile);
  pretrain->add_option("--share-chars", o.share_chars, "further corpora whose characters join the vocabulary")
      ->check(CLI::ExistingFile);

  auto* finetune = app.add_subcommand("finetune-lm", "replace the vocabulary head and fine-tune on a new language");
  add_common(finetune, o);
  add_optimizer(finetune, o, o.finetune_epochs);
  finetune->add_option("--init", o.init, "source language model")->required()->check(CLI::ExistingFile);
  finetune->add_option("--corpus", o.corpus, "target-language sentences")->required()->check(CLI::ExistingFile);
  finetune->add_option("--anchor-l2", o.anchor, "L2 pull towards the source weights")->capture_default_str();
  finetune->add_option("--min-count", o.min_count)->check(CLI::PositiveNumber)->capture_default_str();

  auto* ner = app.add_subcommand("train-ner", "train a named-entity tagger (CRF head by default)");
  auto* pos = app.add_subcommand("train-pos", "train a part-of-speech tagger (softmax head by default)");
  for (auto* sub : {ner, pos}) {
    add_common(sub, o);
    add_optimizer(sub, o, o.epochs);
    add_tagger(sub, o);
    sub->add_option("--dev", o.dev, "validation CoNLL file for early stopping")->check(CLI::ExistingFile);
    sub->add_option("--test", o.test, "test CoNLL file to predict and score")->check(CLI::ExistingFile);
    sub->add_option("--patience", o.patience, "stale epochs before stopping; 0 disables")->capture_default_str();
    sub->add_option("--unk-replace", o.unk_replace)->check(CLI::Range(0.0, 1.0))->capture_default_str();
  }

  auto* transfer = app.add_subcommand("transfer-init", "initialize a tagger from a checkpoint without training");
  add_common(transfer, o);
  add_tagger(transfer, o);
  transfer->get_option("--init")->required();

  auto* evaluate_cmd = app.add_subcommand("evaluate", "exact-match span scores");
  evaluate_cmd->add_option("--gold", o.gold)->required()->check(CLI::ExistingFile);
  evaluate_cmd->add_option("--pred", o.pred)->check(CLI::ExistingFile);
  evaluate_cmd->add_option("--init", o.init, "tagger checkpoint to predict with")->check(CLI::ExistingFile);
  evaluate_cmd->add_option("--out", o.eval_out, "directory for metrics.txt (and predictions.conll)");
  add_columns(evaluate_cmd, o);

  auto* analyze_cmd = app.add_subcommand("analyze", "vocabulary and word-tag overlap between corpora");
  add_common(analyze_cmd, o);
  analyze_cmd->add_option("--corpus", o.corpus, "source CoNLL corpus")->required()->check(CLI::ExistingFile);
  analyze_cmd->add_option("--reference", o.reference, "reference CoNLL corpus")->required()->check(CLI::ExistingFile);
  analyze_cmd->add_option("--normalize", o.normalize, "denominator vocabulary")
      ->check(CLI::IsMember({"reference", "source"}))
      ->capture_default_str();
  analyze_cmd->add_flag("--fold-case", o.fold_case);
  add_columns(analyze_cmd, o);

  auto* convert = app.add_subcommand("convert-bio", "turn contiguous entity labels into BIO");
  add_common(convert, o);
  convert->add_option("--corpus", o.corpus, "CoNLL file with prefix-free labels")->required()->check(CLI::ExistingFile);
  add_columns(convert, o);

  auto* predict_cmd = app.add_subcommand("predict", "tag tokenized sentences with a trained tagger");
  add_common(predict_cmd, o);
  predict_cmd->add_option("--init", o.init, "tagger checkpoint")->required()->check(CLI::ExistingFile);
  predict_cmd->add_option("--test", o.test, "one tokenized sentence per line")->required()->check(CLI::ExistingFile);

  try {
    std::vector<std::string> args(argv, argv + argc);
    args = expand_config(std::move(args));
    // CLI11 expects the arguments in reverse order, without the program name.
    std::vector<std::string> reversed(args.rbegin(), args.rend() - 1);
    app.parse(reversed);
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (pretrain->parsed()) return pretrain_lm(o, out);
    if (finetune->parsed()) {
      o.epochs = o.finetune_epochs;
      return finetune_lm(o, out);
    }
    if (ner->parsed()) return train_tagger_command(o, *ner, TaggerHead::kCrf, out);
    if (pos->parsed()) return train_tagger_command(o, *pos, TaggerHead::kSoftmax, out);
    if (transfer->parsed()) return transfer_init_command(o, *transfer, out);
    if (evaluate_cmd->parsed()) return evaluate(o, out);
    if (analyze_cmd->parsed()) return analyze(o, out);
    if (convert->parsed()) return convert_bio(o, out);
    if (predict_cmd->parsed()) return predict_command(o, out);
  } catch (const CLI::ValidationError& e) {
    err << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 2;
}

}  // namespace seqxfer::cli

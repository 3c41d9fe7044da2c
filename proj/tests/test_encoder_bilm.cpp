#include <cmath>
#include <sstream>

#include "doctest.h"
#include "seqxfer/bilm.hpp"
#include "seqxfer/errors.hpp"
#include "seqxfer/gradcheck.hpp"

using namespace seqxfer;

namespace {

Vocabulary chars_of(const std::vector<std::vector<std::string>>& corpus) {
  std::vector<std::vector<std::vector<std::string>>> corpora{corpus};
  return build_char_vocab(corpora);
}

EncoderConfig small_encoder() {
  EncoderConfig c;
  c.char_dim = 4;
  c.widths = {1, 2, 3};
  c.counts = {2, 3, 3};
  c.output_dim = 5;
  c.max_word_len = 8;
  return c;
}

BiLMConfig small_bilm() {
  BiLMConfig c;
  c.encoder = small_encoder();
  c.hidden = 6;
  return c;
}

const std::vector<std::vector<std::string>> kToy{
    {"the", "cat", "sat"}, {"a", "dog", "ran", "far"}, {"the", "dog", "sat"}, {"a", "cat", "ran"}};

Tensor random_tensor(const Shape& shape, std::uint64_t seed) {
  Tensor t(shape);
  Rng rng(seed);
  for (auto& v : t.values()) v = rng.uniform(-1.0, 1.0);
  return t;
}

ParamStore perturbed(ParamStore params, std::uint64_t seed, double amount = 0.3) {
  Rng rng(seed);
  for (auto& [_, t] : params) {
    for (auto& v : t.values()) v += rng.uniform(-amount, amount);
  }
  return params;
}

}  // namespace

TEST_CASE("char_ids padding, truncation and unknown characters") {
  Vocabulary chars(Vocabulary::Kind::kChar, {"a", "b", "c", "d", "e"});
  const auto id = [&](const char* c) { return static_cast<std::size_t>(chars.id(c)); };
  auto ab = char_ids("ab", chars, 6);
  CHECK(ab.ids == std::vector<std::size_t>{Vocabulary::kBos, id("a"), id("b"), Vocabulary::kEos, Vocabulary::kPad,
                                           Vocabulary::kPad});
  CHECK(ab.length == 4);
  CHECK(char_ids("aZ", chars, 6).ids[2] == static_cast<std::size_t>(Vocabulary::kUnk));
  CHECK(char_ids("abcdefgh", chars, 6).ids ==
        std::vector<std::size_t>{Vocabulary::kBos, id("a"), id("b"), id("c"), id("d"), Vocabulary::kEos});
  CHECK_THROWS_AS(char_ids("a", chars, 2), ContractError);
}

TEST_CASE("highway layer") {
  const std::size_t d = 4;
  HighwayLayer layer{random_tensor({d, d}, 1), random_tensor({d}, 2), random_tensor({d, d}, 3),
                     random_tensor({d}, 4)};
  const Tensor x = random_tensor({d}, 5);

  SUBCASE("matches a scalar evaluation") {
    const Tensor out = highway_forward(x, layer);
    for (std::size_t i = 0; i < d; ++i) {
      double gate_pre = layer.gate_bias[i];
      double transform = layer.transform_bias[i];
      for (std::size_t j = 0; j < d; ++j) {
        gate_pre += layer.gate_weight.at(i, j) * x[j];
        transform += layer.transform_weight.at(i, j) * x[j];
      }
      const double gate = 1.0 / (1.0 + std::exp(-gate_pre));
      CHECK(out[i] == doctest::Approx(gate * transform + (1.0 - gate) * x[i]).epsilon(1e-12));
    }
  }
  SUBCASE("carry and transform limits") {
    HighwayLayer carry = layer;
    carry.gate_bias.fill(-1e6);
    const Tensor kept = highway_forward(x, carry);
    for (std::size_t i = 0; i < d; ++i) CHECK(kept[i] == doctest::Approx(x[i]).epsilon(1e-12));

    HighwayLayer transform = layer;
    transform.gate_bias.fill(1e6);
    const Tensor moved = highway_forward(x, transform);
    for (std::size_t i = 0; i < d; ++i) {
      double expect = layer.transform_bias[i];
      for (std::size_t j = 0; j < d; ++j) expect += layer.transform_weight.at(i, j) * x[j];
      CHECK(moved[i] == doctest::Approx(expect).epsilon(1e-12));
    }
  }
  SUBCASE("dimension mismatch") {
    CHECK_THROWS_AS(highway_forward(random_tensor({3}, 6), layer), ContractError);
  }
  SUBCASE("gradients") {
    ParamStore p{{"x", random_tensor({3, d}, 7)},         {"gw", layer.gate_weight},
                 {"gb", layer.gate_bias},                 {"tw", layer.transform_weight},
                 {"tb", layer.transform_bias}};
    auto fn = [](Tape& t, const ParamStore& ps) {
      auto v = [&](const char* n) { return t.parameter(n, ps.at(n)); };
      Var y = highway(v("x"), v("gw"), v("gb"), v("tw"), v("tb"));
      return ad::sum(ad::mul(y, y));
    };
    CHECK(finite_difference_check(fn, p, 1e-5, 200).max_relative_error < 1e-4);
  }
}

TEST_CASE("character encoder") {
  const auto chars = chars_of(kToy);
  CharEncoder encoder(small_encoder(), "enc.");
  ParamStore params;
  encoder.initialize(params, chars.size(), 3);
  params = perturbed(params, 4, 0.1);

  SUBCASE("deterministic, context free, fixed width") {
    const auto a = encode_word(char_ids("cat", chars, 8), params, encoder);
    CHECK(a.size() == 5);
    CHECK(a == encode_word(char_ids("cat", chars, 8), params, encoder));
    CHECK(encode_word(char_ids("a", chars, 8), params, encoder).size() == 5);
    CHECK(encode_word(char_ids("thedogsatfar", chars, 8), params, encoder).size() == 5);
  }
  SUBCASE("words equal up to the truncation horizon encode identically") {
    CHECK(encode_word(char_ids("catsatdogx", chars, 8), params, encoder) ==
          encode_word(char_ids("catsatdogy", chars, 8), params, encoder));
  }
  SUBCASE("extra padding never changes the output") {
    EncoderConfig wide = small_encoder();
    wide.max_word_len = 15;
    CharEncoder wide_encoder(wide, "enc.");
    for (const char* w : {"a", "ab", "cat", "dogs"}) {
      CHECK(encode_word(char_ids(w, chars, 8), params, encoder) ==
            encode_word(char_ids(w, chars, 15), params, wide_encoder));
    }
  }
  SUBCASE("gradients") {
    const std::vector<std::string> words{"the", "a", "dog", "ran"};
    const auto seqs = char_ids(words, chars, 8);
    auto fn = [&](Tape& t, const ParamStore& ps) {
      Var y = encoder.encode(t, ps, seqs);
      return ad::sum(ad::mul(y, y));
    };
    const auto r = finite_difference_check(fn, params, 1e-5, 300, 11);
    CHECK_MESSAGE(r.max_relative_error < 1e-4, r.worst_parameter);
  }
}

TEST_CASE("bilm loss") {
  const auto chars = chars_of(kToy);
  const auto words = build_vocab(kToy, 1);
  BiLM model(small_bilm());
  const auto batches = lm_batches(kToy, words, chars, 8, 8, 1);
  REQUIRE(batches.size() == 1);

  SUBCASE("zero head predicts uniformly") {
    const ParamStore params = model.initialize(chars.size(), words.size(), 1);
    Tape tape;
    LMLoss loss = model.loss(tape, params, batches[0]);
    CHECK(std::abs(loss.mean.value().item() - std::log(static_cast<double>(words.size()))) < 1e-12);
    // Both directions carry equal loss, so one direction is half of the sum.
    const double f = loss.forward_nll.value().item();
    const double b = loss.backward_nll.value().item();
    CHECK(f == doctest::Approx(b).epsilon(1e-14));
    CHECK(f == doctest::Approx(0.5 * (f + b)).epsilon(1e-14));
  }
  SUBCASE("decomposes into independent direction terms") {
    const ParamStore params = perturbed(model.initialize(chars.size(), words.size(), 1), 5);
    Tape tape;
    LMLoss loss = model.loss(tape, params, batches[0]);
    const double total = loss.mean.value().item() * 2.0 * static_cast<double>(loss.positions);
    CHECK(std::abs(total - (loss.forward_nll.value().item() + loss.backward_nll.value().item())) < 1e-12);

    // Forward direction alone, evaluated sentence by sentence.
    double fwd = 0.0;
    for (const auto& sent : kToy) {
      Tape t;
      auto seqs = char_ids(sent, chars, 8);
      const std::size_t n = sent.size();
      auto dirs = model.run(t, params, seqs, std::span(&n, 1));
      std::vector<int> targets;
      for (std::size_t k = 0; k < n; ++k) targets.push_back(k + 1 < n ? words.id(sent[k + 1]) : Vocabulary::kEos);
      Var logits = ad::linear(dirs[0].forward, t.constant(params.at(BiLM::kHeadWeight)),
                              t.constant(params.at(BiLM::kHeadBias)));
      fwd += ad::softmax_cross_entropy(logits, targets).value().item();
    }
    CHECK(std::abs(fwd - loss.forward_nll.value().item()) < 1e-12);
  }
  SUBCASE("gradients match finite differences") {
    const ParamStore params = perturbed(model.initialize(chars.size(), words.size(), 1), 6);
    auto fn = [&](Tape& t, const ParamStore& ps) { return model.loss(t, ps, batches[0]).mean; };
    const auto r = finite_difference_check(fn, params, 1e-5, 300, 12);
    CHECK_MESSAGE(r.max_relative_error < 1e-4, r.worst_parameter);
  }
  SUBCASE("empty batch") {
    Tape tape;
    const ParamStore params = model.initialize(chars.size(), words.size(), 1);
    CHECK_THROWS_AS(model.loss(tape, params, LMBatch{}), ContractError);
  }
}

TEST_CASE("train_lm, contextual representations and perplexity") {
  const auto chars = chars_of(kToy);
  const auto words = build_vocab(kToy, 1);
  LMTrainConfig train;
  train.epochs = 1;
  train.batch_size = 2;

  const Checkpoint zero = make_lm_checkpoint(small_bilm(), words, chars,
                                             BiLM(small_bilm()).initialize(chars.size(), words.size(), train.seed));
  CHECK(perplexity(kToy, zero) == doctest::Approx(static_cast<double>(words.size())).epsilon(1e-12));

  SUBCASE("a fresh run starts from ln |V|") {
    const auto batches = lm_batches(kToy, words, chars, 2, 8, derive_seed(train.seed, "lm-epoch-1"));
    CHECK(std::abs(bilm_loss(batches[0], zero) - std::log(static_cast<double>(words.size()))) < 1e-12);
  }
  SUBCASE("fifty Adam steps reduce the loss and perplexity stays >= 1") {
    train.epochs = 25;
    train.adam.lr = 0.01;
    const Checkpoint trained = train_lm(kToy, words, chars, small_bilm(), train);
    CHECK(trained.metrics.size() == 25);
    const double ppl = perplexity(kToy, trained);
    CHECK(ppl < static_cast<double>(words.size()));
    CHECK(ppl >= 1.0);

    SUBCASE("resume continues from the initial weights") {
      LMTrainConfig more = train;
      more.epochs = 3;
      const Checkpoint resumed = train_lm(kToy, words, chars, small_bilm(), more, &trained);
      CHECK(resumed.metrics.size() == 3);
      CHECK(perplexity(kToy, resumed) < ppl);
    }
    SUBCASE("contextual representations") {
      const std::vector<std::string> sent{"the", "cat", "sat"};
      const Tensor a = contextual_repr(sent, trained);
      CHECK(a.shape() == Shape{3, 10});
      CHECK(a == contextual_repr(sent, trained));
      const std::vector<std::string> changed{"the", "cat", "ran"};
      const Tensor b = contextual_repr(changed, trained);
      bool other_position_differs = false;
      for (std::size_t c = 0; c < 10; ++c) other_position_differs |= a.at(0, c) != b.at(0, c);
      CHECK(other_position_differs);
    }
  }
  SUBCASE("architecture mismatch on resume") {
    BiLMConfig other = small_bilm();
    other.hidden = 7;
    try {
      train_lm(kToy, words, chars, other, train, &zero);
      FAIL("expected a TransferError");
    } catch (const TransferError& e) {
      CHECK(std::string(e.what()).find("bilm.fwd.0.w_hh") != std::string::npos);
    }
  }
  SUBCASE("perplexity decreases across epochs") {
    train.epochs = 6;
    train.adam.lr = 0.01;
    const Checkpoint trained = train_lm(kToy, words, chars, small_bilm(), train);
    double prev = 1e300;
    for (const auto& line : trained.metrics) {
      const auto pos = line.find("train_ppl=");
      const double ppl = std::stod(line.substr(pos + 10));
      CHECK(ppl < prev);
      prev = ppl;
    }
  }
}

TEST_CASE("replace_vocab_head") {
  const auto chars = chars_of(kToy);
  const auto words = build_vocab(kToy, 1);
  const Checkpoint src =
      make_lm_checkpoint(small_bilm(), words, chars, perturbed(BiLM(small_bilm()).initialize(chars.size(), words.size(), 1), 2));

  SUBCASE("same-size vocabulary keeps everything but the head") {
    const Checkpoint out = replace_vocab_head(src, words, 7);
    for (const auto& [name, t] : src.params) {
      if (name == BiLM::kHeadWeight) {
        CHECK(out.params.at(name) != t);
      } else if (name != BiLM::kHeadBias) {
        CHECK(checksum(out.params.at(name)) == checksum(t));
      }
    }
    CHECK(out.provenance.back().find("replaced=bilm.softmax.weight,bilm.softmax.bias") != std::string::npos);
  }
  SUBCASE("new head shape follows the target vocabulary") {
    std::vector<std::string> syms;
    for (int i = 0; i < 496; ++i) syms.push_back("w" + std::to_string(i));
    Vocabulary target(Vocabulary::Kind::kWord, syms);
    REQUIRE(target.size() == 500);
    const Checkpoint out = replace_vocab_head(src, target, 7);
    CHECK(out.params.at(BiLM::kHeadWeight).shape() == Shape{500, 5});
    CHECK(out.words == target);
  }
  SUBCASE("missing LM parameters") {
    Checkpoint broken = src;
    broken.params.erase("bilm.bwd.0.w_ih");
    CHECK_THROWS_AS(replace_vocab_head(broken, words, 1), TransferError);
  }
}

TEST_CASE("checkpoint persistence") {
  const auto chars = chars_of(kToy);
  const auto words = build_vocab(kToy, 1);
  Checkpoint ckpt = make_lm_checkpoint(small_bilm(), words, chars,
                                       perturbed(BiLM(small_bilm()).initialize(chars.size(), words.size(), 1), 2));
  ckpt.metrics.push_back("epoch=1 train_loss=" + format_double(0.1 + 0.2));
  ckpt.provenance.push_back("created by test");

  std::ostringstream first;
  save_checkpoint(first, ckpt);
  std::istringstream in(first.str());
  const Checkpoint loaded = load_checkpoint(in);
  CHECK(loaded == ckpt);
  std::ostringstream second;
  save_checkpoint(second, loaded);
  CHECK(first.str() == second.str());

  SUBCASE("truncated payload") {
    std::istringstream cut(first.str().substr(0, first.str().size() - 3));
    CHECK_THROWS_AS(load_checkpoint(cut), DataError);
  }
  SUBCASE("trailing bytes") {
    std::istringstream extra(first.str() + "x");
    CHECK_THROWS_AS(load_checkpoint(extra), DataError);
  }
  SUBCASE("bad magic") {
    std::istringstream bad("hello\n");
    CHECK_THROWS_AS(load_checkpoint(bad), DataError);
  }
  SUBCASE("doubles survive the manifest") {
    for (double v : {0.1, 1.0 / 3.0, 1e-300, 123456789.123456789}) CHECK(parse_double(format_double(v)) == v);
  }
}

#include <set>

#include <gtest/gtest.h>

#include "stlab/bridge.hpp"
#include "stlab/error.hpp"
#include "stlab/grad_check.hpp"
#include "stlab/losses.hpp"
#include "stlab/rng.hpp"
#include "test_util.hpp"

namespace stlab {
namespace {

using testing::random_tensor;

SpeechTranslationModel toy_model(PipelineFlags flags, std::size_t hidden = 4, std::uint64_t seed = 7) {
  ModelConfig c;
  c.hidden = hidden;
  c.asr_layers = 1;
  c.mt_encoder_layers = 1;
  c.adapter_layers = 3;
  c.init_scale = 0.5;
  return SpeechTranslationModel::create(c, flags, 3, CharVocab("ab"), TokenVocab({"ab", "ba"}, {"X", "Y"}), seed);
}

TEST(Adapter, LengthPreservingAndFinite) {
  Rng rng(1);
  const Adapter a = Adapter::create(4, 3, rng, 0.5);
  EXPECT_EQ(a.layers.size(), 3u);
  Tape t;
  EXPECT_EQ(a.forward(t, t.constant(random_tensor(1, 4, rng))).rows(), 1u);
  EXPECT_EQ(a.forward(t, t.constant(random_tensor(6, 4, rng))).rows(), 6u);
  a.forward(t, t.constant(Tensor::zeros(3, 4))).value().check_finite("adapter");
  EXPECT_THROW(a.forward(t, t.constant(Tensor::zeros(3, 6))), DimensionError);
}

TEST(Adapter, GradientMatchesFiniteDifferences) {
  Rng rng(2);
  Adapter a = Adapter::create(4, 3, rng, 0.5);
  std::vector<Parameter*> params;
  a.collect(params);
  ParameterGroup group("adapter", params);
  const Tensor x = random_tensor(3, 4, rng);
  auto loss = [&](Tape& t) {
    Rng wr(3);
    return sum(hadamard(a.forward(t, t.constant(x)), t.constant(random_tensor(3, 4, wr))));
  };
  EXPECT_LE(grad_check(loss, group, 1e-4).max_relative_error, 1e-4);
}

TEST(TargetForcing, PrependsEmbeddingRowOnly) {
  SpeechTranslationModel m = toy_model({});
  Rng rng(4);
  Tape t;
  const Tensor states = random_tensor(3, 4, rng);
  const Tensor with_tgt = prepend_target(t, m.mt, t.constant(states), TokenVocab::kTargetTag).value();
  const Tensor with_src = prepend_target(t, m.mt, t.constant(states), TokenVocab::kSourceTag).value();
  ASSERT_EQ(with_tgt.rows(), 4u);
  for (std::size_t j = 0; j < 4; ++j) {
    EXPECT_EQ(with_tgt(0, j), m.mt.embedding.value(TokenVocab::kTargetTag, j));
    EXPECT_EQ(with_src(0, j), m.mt.embedding.value(TokenVocab::kSourceTag, j));
  }
  for (std::size_t r = 1; r < 4; ++r) {
    for (std::size_t j = 0; j < 4; ++j) {
      EXPECT_EQ(with_tgt(r, j), states(r - 1, j));
      EXPECT_EQ(with_src(r, j), with_tgt(r, j));
    }
  }
  const Tensor empty = prepend_target(t, m.mt, t.constant(Tensor::zeros(0, 4)), TokenVocab::kTargetTag).value();
  EXPECT_EQ(empty.shape(), (Shape{1, 4}));
  EXPECT_THROW(prepend_target(t, m.mt, t.constant(states), TokenVocab::kBos), VocabError);
}

TEST(DimensionContract, MismatchIsRejected) {
  SpeechTranslationModel m = toy_model({.use_adapter = true});
  EXPECT_NO_THROW(m.validate());
  SpeechTranslationModel bad = m;
  Rng rng(5);
  bad.adapter = Adapter::create(6, 3, rng, 0.1);
  EXPECT_THROW(bad.validate(), DimensionError);
  bad = m;
  ModelConfig wide = m.config;
  wide.hidden = 6;
  bad.asr = AsrModule::create(3, 2, wide, rng);
  EXPECT_THROW(bad.validate(), DimensionError);
}

TEST(E2eForward, AllFlagsOffEqualsManualComposition) {
  SpeechTranslationModel m = toy_model({.use_compression = false});
  Rng rng(6);
  const Tensor x = random_tensor(5, 3, rng);
  const std::vector<std::size_t> dec{TokenVocab::kTargetTag, 8, 9};
  Tape t;
  const Tensor via_pipeline = e2e_forward(t, m, x, dec).value();
  Var hidden = m.asr.forward(t, x).hidden;
  const Tensor manual = m.mt.decode_teacher_forced(t, m.mt.encode_states(t, hidden), dec).value();
  EXPECT_TRUE(via_pipeline.bitwise_equal(manual));
}

TEST(E2eForward, CompressionShortensEncoderInput) {
  SpeechTranslationModel m = toy_model({.use_compression = true});
  Rng rng(7);
  const Tensor x = random_tensor(8, 3, rng);
  Tape t;
  AsrView asr = run_asr(t, m, x);
  FrontEnd front = e2e_front_end(t, m, asr);
  EXPECT_EQ(front.encoder_input.rows(), front.segments.runs.size());
  EXPECT_LE(front.encoder_input.rows(), 8u);
  EXPECT_EQ(front.segments.frames(), 8u);
}

TEST(E2eForward, TargetForcingTouchesOnlyRowZero) {
  SpeechTranslationModel m = toy_model({.use_adapter = true, .use_target_forcing = true});
  Rng rng(8);
  const Tensor x = random_tensor(6, 3, rng);
  Tape t;
  AsrView asr = run_asr(t, m, x);
  const Tensor tagged = e2e_front_end(t, m, asr).encoder_input.value();
  const Tensor plain = e2e_front_end(t, m, asr, false).encoder_input.value();
  ASSERT_EQ(tagged.rows(), plain.rows() + 1);
  for (std::size_t r = 0; r < plain.rows(); ++r)
    for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(tagged(r + 1, j), plain(r, j));
}

TEST(E2eForward, FullPathGradientWithAllFlagsOn) {
  SpeechTranslationModel m = toy_model({.use_compression = true, .use_adapter = true, .use_target_forcing = true});
  Rng rng(9);
  const Tensor x = random_tensor(2, 3, rng);
  const std::vector<std::size_t> dec_in{TokenVocab::kTargetTag, 8};
  const std::vector<std::size_t> dec_out{8, TokenVocab::kEos};
  auto loss = [&](Tape& t) { return cross_entropy(e2e_forward(t, m, x, dec_in), dec_out); };
  for (auto& g : m.groups()) {
    EXPECT_LE(grad_check(loss, g, 1e-4).max_relative_error, 1e-4) << g.name();
  }
}

TEST(Cascade, AllBlankAsrTranslatesFromEmptySource) {
  SpeechTranslationModel m = toy_model({});
  m.asr.head.bias.value(0, m.chars.blank()) = 100.0;
  Rng rng(10);
  const Tensor x = random_tensor(4, 3, rng);
  const CascadeOutput out = cascade_translate(m, x, 5);
  EXPECT_EQ(out.transcript, "");
  EXPECT_EQ(out.source_ids, (std::vector<std::size_t>{TokenVocab::kBos}));
  EXPECT_LE(out.translation.size(), 5u);
}

TEST(Cascade, EqualsManualChainOfStages) {
  SpeechTranslationModel m = toy_model({});
  Rng rng(11);
  for (int trial = 0; trial < 5; ++trial) {
    const Tensor x = random_tensor(7, 3, rng);
    Tape t;
    const auto path = ctc_greedy_path(m.asr.forward(t, x).log_probs.value());
    const std::string transcript = collapse(path, m.chars);
    std::vector<std::size_t> ids;
    for (const auto& w : split_words(transcript)) ids.push_back(m.tokens.id_or_unk(w));
    if (ids.empty()) ids.push_back(TokenVocab::kBos);
    const auto manual = m.mt.generate_greedy(m.mt.encode(t, ids).value(), TokenVocab::kTargetTag, 6);
    const CascadeOutput out = cascade_translate(m, x, 6);
    EXPECT_EQ(out.transcript, transcript);
    EXPECT_EQ(out.translation, manual);
  }
}

TEST(Cascade, UnknownWordsMapToUnk) {
  const TokenVocab v({"ab"}, {"X"});
  EXPECT_EQ(transcript_to_source_ids(v, "ab zz ab"),
            (std::vector<std::size_t>{v.id("ab"), TokenVocab::kUnk, v.id("ab")}));
  EXPECT_EQ(transcript_to_source_ids(v, ""), (std::vector<std::size_t>{TokenVocab::kBos}));
}

TEST(Cascade, PerfectRecognizerReproducesTranscript) {
  SpeechTranslationModel m = toy_model({});
  // Features are the one-hot characters of "ab ba"; drive the CTC head from the
  // input projection so the argmax equals the input channel.
  const std::string text = "ab ba";
  const CharVocab chars("ab ");
  ModelConfig c = m.config;
  c.asr_layers = 0;
  c.hidden = 4;
  Rng rng(12);
  SpeechTranslationModel p = SpeechTranslationModel::create(c, {}, 3, chars, m.tokens, 3);
  for (double& v : p.asr.input.weight.value.values()) v = 0.0;
  for (double& v : p.asr.head.weight.value.values()) v = 0.0;
  for (std::size_t k = 0; k < 3; ++k) {
    p.asr.input.weight.value(k, k) = 1.0;
    p.asr.head.weight.value(k, k) = 10.0;
  }
  Tensor x = Tensor::zeros(text.size() * 2, 3);
  for (std::size_t i = 0; i < text.size(); ++i) {
    x(2 * i, chars.id(text[i])) = 1.0;
    x(2 * i + 1, chars.id(text[i])) = 1.0;
  }
  EXPECT_EQ(recognize(p, x), text);
}

TEST(ParameterGroups, CoverEveryParameterOnce) {
  SpeechTranslationModel m = toy_model({.use_adapter = true});
  std::size_t total = 0;
  std::set<const Parameter*> seen;
  for (auto& g : m.groups()) {
    for (const Parameter* p : g.params()) EXPECT_TRUE(seen.insert(p).second) << p->name;
    total += g.count();
  }
  EXPECT_EQ(m.group_names(), (std::vector<std::string>{"asr", "mt.embedding", "mt.encoder", "mt.decoder", "adapter"}));
  EXPECT_GT(total, 0u);
}

}  // namespace
}  // namespace stlab

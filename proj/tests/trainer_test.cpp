#include <bit>
#include <cmath>
#include <limits>
#include <set>

#include <gtest/gtest.h>

#include "stlab/checkpoint.hpp"
#include "stlab/error.hpp"
#include "stlab/trainer.hpp"

namespace stlab {
namespace {

Corpus tiny_corpus(std::uint64_t seed = 3) {
  CorpusConfig c;
  c.n_examples = 24;
  c.n_test = 4;
  c.seed = seed;
  c.n_words = 4;
  c.alphabet = "abcd";
  c.word_len_range = {2, 3};
  c.sentence_len_range = {1, 3};
  c.dur_range = {1, 2};
  return generate_corpus(c);
}

SpeechTranslationModel tiny_model(const Corpus& corpus, bool adapter, std::uint64_t seed = 5) {
  ModelConfig c;
  c.hidden = 6;
  c.asr_layers = 1;
  c.adapter_layers = 1;
  c.init_scale = 0.3;
  PipelineFlags f;
  f.use_adapter = adapter;
  f.use_target_forcing = true;
  f.encoder_language_tag = true;
  f.decoder_starts_with_tag = false;
  return SpeechTranslationModel::create(c, f, corpus.feature_dim(), corpus.char_vocab(), corpus.token_vocab(), seed);
}

std::map<std::string, std::vector<double>> snapshot(SpeechTranslationModel& m) {
  std::map<std::string, std::vector<double>> out;
  for (auto& g : m.groups()) {
    std::vector<double> values;
    for (const Parameter* p : g.params()) values.insert(values.end(), p->value.values().begin(), p->value.values().end());
    out[g.name()] = values;
  }
  return out;
}

void set_values(Parameter& p, std::vector<double> v) { std::copy(v.begin(), v.end(), p.value.values().begin()); }

std::vector<double> values_of(const Parameter& p) { return {p.value.values().begin(), p.value.values().end()}; }

bool bitwise_equal(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::bit_cast<std::uint64_t>(a[i]) != std::bit_cast<std::uint64_t>(b[i])) return false;
  }
  return true;
}

Stage stage(const std::string& name, Task task, FreezePreset freeze, std::size_t steps, double lr = 1e-2) {
  Stage s;
  s.name = name;
  s.task = task;
  s.freeze = freeze;
  s.steps = steps;
  s.lr = lr;
  s.batch = 2;
  return s;
}

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  Parameter p = make_zero_parameter("p", 2, 2);
  set_values(p, {1.0, -2.0, 3.0, 0.5});
  const auto before = values_of(p);
  Parameter* params[] = {&p};
  AdamState state;
  for (std::size_t step = 0; step < 5; ++step) adam_step(params, state, 0.1, step);
  EXPECT_TRUE(bitwise_equal(values_of(p), before));
}

TEST(Adam, FrozenParameterIsBitwiseUntouched) {
  Parameter p = make_zero_parameter("p", 1, 3);
  set_values(p, {0.1, 0.2, 0.3});
  p.grad(0, 0) = 1.0;
  p.grad(0, 1) = -1.0;
  p.grad(0, 2) = 5.0;
  p.trainable = false;
  const auto before = values_of(p);
  Parameter* params[] = {&p};
  AdamState state;
  adam_step(params, state, 0.1, 0);
  EXPECT_TRUE(bitwise_equal(values_of(p), before));
}

TEST(Adam, QuadraticConvergesWithin200Steps) {
  // f(x) = x^2 has its minimum at 0.
  Parameter p = make_zero_parameter("x", 1, 1);
  p.value(0, 0) = 1.0;
  Parameter* params[] = {&p};
  AdamState state;
  for (std::size_t step = 0; step < 200; ++step) {
    p.grad(0, 0) = 2.0 * p.value(0, 0);
    adam_step(params, state, 0.05, step);
  }
  EXPECT_LT(std::abs(p.value(0, 0)), 1e-2);
}

TEST(Adam, NonFiniteGradientNamesTheStep) {
  Parameter p = make_zero_parameter("x", 1, 1);
  p.grad(0, 0) = std::numeric_limits<double>::quiet_NaN();
  Parameter* params[] = {&p};
  AdamState state;
  try {
    adam_step(params, state, 0.1, 17);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("17"), std::string::npos);
  }
}

TEST(Adam, ClipBoundsTheGlobalNorm) {
  Parameter a = make_zero_parameter("a", 1, 1);
  Parameter b = make_zero_parameter("b", 1, 1);
  a.grad(0, 0) = 3.0;
  b.grad(0, 0) = 4.0;
  Parameter* params[] = {&a, &b};
  EXPECT_DOUBLE_EQ(clip_grad_norm(params, 1.0), 5.0);
  EXPECT_NEAR(a.grad(0, 0), 0.6, 1e-15);
  EXPECT_NEAR(b.grad(0, 0), 0.8, 1e-15);
}

TEST(FreezeSpec, PresetsCoverEveryGroup) {
  const std::vector<std::string> names{"asr", "mt.embedding", "mt.encoder", "mt.decoder", "adapter"};
  const auto enc = FreezeSpec::resolve(FreezePreset::kMtEncoderOnly, names).trainable();
  EXPECT_EQ(enc.size(), names.size());
  EXPECT_TRUE(enc.at("mt.encoder"));
  EXPECT_FALSE(enc.at("mt.decoder"));
  EXPECT_FALSE(enc.at("adapter"));
  const auto mt = FreezeSpec::resolve(FreezePreset::kMtOnly, names).trainable();
  EXPECT_TRUE(mt.at("mt.embedding") && mt.at("mt.encoder") && mt.at("mt.decoder"));
  EXPECT_FALSE(mt.at("asr"));
  EXPECT_THROW(FreezeSpec::resolve(FreezePreset::kAdapterOnly, {"asr", "mt.embedding", "mt.encoder", "mt.decoder"}),
               ConfigError);
  EXPECT_EQ(freeze_preset_from_string("ADAPTER_ONLY"), FreezePreset::kAdapterOnly);
  EXPECT_THROW(freeze_preset_from_string("SOME"), ConfigError);
}

TEST(FreezeSpec, ApplyRejectsIncompleteCoverage) {
  const Corpus corpus = tiny_corpus();
  SpeechTranslationModel m = tiny_model(corpus, false);
  EXPECT_THROW(FreezeSpec({{"asr", true}}).apply(m), ConfigError);
}

TEST(RunPlan, ZeroStepsLeavesModelUnchanged) {
  const Corpus corpus = tiny_corpus();
  SpeechTranslationModel m = tiny_model(corpus, true);
  const std::string before = checkpoint_to_string(m);
  const TrainReport r =
      run_plan(StagePlan{{stage("e2e", Task::kE2eXent, FreezePreset::kAll, 0)}}, m, corpus.train(), 1);
  EXPECT_TRUE(r.curve.empty());
  EXPECT_EQ(checkpoint_to_string(m), before);
}

TEST(RunPlan, SameSeedIsBitwiseReproducible) {
  const Corpus corpus = tiny_corpus();
  const StagePlan plan{{stage("asr", Task::kAsrCtc, FreezePreset::kAsrOnly, 3),
                        stage("mt", Task::kMtXent, FreezePreset::kMtOnly, 3),
                        stage("e2e", Task::kE2eXent, FreezePreset::kAdapterOnly, 3)}};
  SpeechTranslationModel a = tiny_model(corpus, true);
  SpeechTranslationModel b = tiny_model(corpus, true);
  const TrainReport ra = run_plan(plan, a, corpus.train(), 9);
  const TrainReport rb = run_plan(plan, b, corpus.train(), 9);
  EXPECT_EQ(ra.to_jsonl(false), rb.to_jsonl(false));
  EXPECT_EQ(checkpoint_to_string(a), checkpoint_to_string(b));
  EXPECT_EQ(ra.curve.size(), 9u);

  SpeechTranslationModel c = tiny_model(corpus, true);
  const TrainReport rc = run_plan(plan, c, corpus.train(), 10);
  EXPECT_NE(ra.to_jsonl(false), rc.to_jsonl(false));
}

TEST(RunPlan, StageStreamsFollowTheStageName) {
  // A stage trained alone or after an empty stage sees the same batches.
  const Corpus corpus = tiny_corpus();
  SpeechTranslationModel a = tiny_model(corpus, false);
  SpeechTranslationModel b = tiny_model(corpus, false);
  run_plan(StagePlan{{stage("mt", Task::kMtXent, FreezePreset::kMtOnly, 4)}}, a, corpus.train(), 2);
  run_plan(StagePlan{{stage("warm", Task::kMtXent, FreezePreset::kMtOnly, 0),
                      stage("mt", Task::kMtXent, FreezePreset::kMtOnly, 4)}},
           b, corpus.train(), 2);
  EXPECT_EQ(checkpoint_to_string(a), checkpoint_to_string(b));
}

void expect_freeze_contract(FreezePreset preset, const std::set<std::string>& trainable) {
  const Corpus corpus = tiny_corpus();
  SpeechTranslationModel m = tiny_model(corpus, true);
  const auto before = snapshot(m);
  const TrainReport r =
      run_plan(StagePlan{{stage("e2e", Task::kE2eXent, preset, 100)}}, m, corpus.train(), 4);
  const auto after = snapshot(m);
  for (const auto& [group, values] : before) {
    if (trainable.count(group)) {
      EXPECT_FALSE(bitwise_equal(values, after.at(group))) << group << " should have changed";
    } else {
      EXPECT_TRUE(bitwise_equal(values, after.at(group))) << group << " should be untouched";
    }
  }
  std::size_t expected = 0;
  for (auto& g : m.groups()) {
    if (trainable.count(g.name())) expected += g.count();
  }
  EXPECT_EQ(r.census_total, expected);
}

TEST(RunPlan, FreezeContractMtEncoderOnly) { expect_freeze_contract(FreezePreset::kMtEncoderOnly, {"mt.encoder"}); }

TEST(RunPlan, FreezeContractAdapterOnly) { expect_freeze_contract(FreezePreset::kAdapterOnly, {"adapter"}); }

TEST(RunPlan, CensusMatchesHandCountForDefaultSizes) {
  // H = 32, 9 feature channels, 9 characters + blank, 6 reserved tokens + 24 + 24 words.
  // BLSTM H -> H: 2 directions x (32x64 + 16x64 + 64) = 6272.
  // ASR: input 9x32+32 = 320, two BLSTM layers 12544, CTC head 32x10+10 = 330.
  // Decoder: LSTM 32x128 + 32x128 + 128 = 8320, attention 1024, combine 64x32+32 = 2080,
  // output 32x54 + 54 = 1782.
  CorpusConfig cc;
  cc.n_examples = 3;
  cc.n_test = 1;
  const Corpus corpus = generate_corpus(cc);
  ModelConfig c;
  PipelineFlags f;
  f.use_adapter = true;
  SpeechTranslationModel m =
      SpeechTranslationModel::create(c, f, corpus.feature_dim(), corpus.char_vocab(), corpus.token_vocab(), 1);
  std::map<std::string, std::size_t> counts;
  for (auto& g : m.groups()) counts[g.name()] = g.count();
  EXPECT_EQ(counts.at("asr"), 13194u);
  EXPECT_EQ(counts.at("mt.embedding"), 1728u);
  EXPECT_EQ(counts.at("mt.encoder"), 6272u);
  EXPECT_EQ(counts.at("mt.decoder"), 13206u);
  EXPECT_EQ(counts.at("adapter"), 18816u);
}

TEST(RunPlan, BadDataFailsBeforeAnyStep) {
  Corpus corpus = tiny_corpus();
  std::vector<SyntheticExample> data(corpus.train().begin(), corpus.train().end());
  data[3].translation = "NOTAWORD";
  SpeechTranslationModel m = tiny_model(corpus, false);
  const std::string before = checkpoint_to_string(m);
  const StagePlan plan{{stage("asr", Task::kAsrCtc, FreezePreset::kAsrOnly, 2),
                        stage("mt", Task::kMtXent, FreezePreset::kMtOnly, 2)}};
  try {
    run_plan(plan, m, data, 1);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find(data[3].id), std::string::npos);
  }
  EXPECT_EQ(checkpoint_to_string(m), before);
}

TEST(RunPlan, InfeasibleCtcExampleIsNamed) {
  Corpus corpus = tiny_corpus();
  std::vector<SyntheticExample> data(corpus.train().begin(), corpus.train().end());
  data[1].features = Tensor::zeros(1, corpus.feature_dim());
  SpeechTranslationModel m = tiny_model(corpus, false);
  try {
    run_plan(StagePlan{{stage("asr", Task::kAsrCtc, FreezePreset::kAsrOnly, 1)}}, m, data, 1);
    FAIL() << "expected InfeasibleAlignmentError";
  } catch (const InfeasibleAlignmentError& e) {
    EXPECT_NE(std::string(e.what()).find(data[1].id), std::string::npos);
  }
}

TEST(RunPlan, InvalidPlansAreRejected) {
  const Corpus corpus = tiny_corpus();
  SpeechTranslationModel m = tiny_model(corpus, false);
  EXPECT_THROW(run_plan(StagePlan{}, m, corpus.train(), 1), ConfigError);
  Stage s = stage("mt", Task::kMtXent, FreezePreset::kMtOnly, 1);
  s.portion = 0.0;
  EXPECT_THROW(run_plan(StagePlan{{s}}, m, corpus.train(), 1), ConfigError);
  s.portion = 1.5;
  EXPECT_THROW(run_plan(StagePlan{{s}}, m, corpus.train(), 1), ConfigError);
  Stage sim = stage("sim", Task::kE2eSimilarity, FreezePreset::kAll, 1);
  EXPECT_THROW(run_plan(StagePlan{{sim}}, m, corpus.train(), 1), ConfigError);
  sim.freeze = FreezePreset::kAdapterOnly;
  EXPECT_THROW(run_plan(StagePlan{{sim}}, m, corpus.train(), 1), ConfigError);  // no adapter
  EXPECT_THROW(task_from_string("e2e_magic"), ConfigError);
}

TEST(Subset, PortionOneIsIdentity) {
  const auto idx = subset_indices(10, 1.0, 3);
  for (std::size_t i = 0; i < idx.size(); ++i) EXPECT_EQ(idx[i], i);
}

TEST(Subset, SizeIsRoundedPortion) {
  EXPECT_EQ(subset_indices(1000, 0.2, 1).size(), 200u);
  EXPECT_EQ(subset_indices(1000, 0.15, 1).size(), 150u);
  EXPECT_EQ(subset_indices(7, 0.5, 1).size(), 4u);
}

TEST(Subset, PortionsNestUnderOneSeed) {
  const auto a = subset_indices(1000, 0.10, 8);
  const auto b = subset_indices(1000, 0.15, 8);
  const auto c = subset_indices(1000, 0.20, 8);
  const std::set<std::size_t> sb(b.begin(), b.end()), sc(c.begin(), c.end());
  for (std::size_t i : a) EXPECT_TRUE(sb.count(i));
  for (std::size_t i : b) EXPECT_TRUE(sc.count(i));
  EXPECT_EQ(std::set<std::size_t>(a.begin(), a.end()).size(), a.size());
}

TEST(Subset, SeedControlsTheSample) {
  EXPECT_EQ(subset_indices(1000, 0.2, 8), subset_indices(1000, 0.2, 8));
  EXPECT_NE(subset_indices(1000, 0.2, 8), subset_indices(1000, 0.2, 9));
  EXPECT_THROW(subset_indices(10, 0.0, 1), ConfigError);
  EXPECT_THROW(subset_indices(10, 1.01, 1), ConfigError);
}

TEST(Subset, DataFollowsIndices) {
  const Corpus corpus = tiny_corpus();
  const auto idx = subset_indices(corpus.train().size(), 0.5, 4);
  const auto data = subset_data(corpus.train(), 0.5, 4);
  ASSERT_EQ(data.size(), idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) EXPECT_EQ(data[i].id, corpus.train()[idx[i]].id);
}

TEST(Similarity, NeedsAnAdapter) {
  const Corpus corpus = tiny_corpus();
  SpeechTranslationModel m = tiny_model(corpus, false);
  EXPECT_THROW(similarity_phase(m, corpus.train(), 1, 1e-2, 1), ConfigError);
}

TEST(Similarity, OnlyTheAdapterMoves) {
  const Corpus corpus = tiny_corpus();
  SpeechTranslationModel m = tiny_model(corpus, true);
  const auto before = snapshot(m);
  const TrainReport r = similarity_phase(m, corpus.train(), 100, 1e-2, 1, 2);
  const auto after = snapshot(m);
  for (const auto& [group, values] : before) {
    if (group == "adapter") {
      EXPECT_FALSE(bitwise_equal(values, after.at(group)));
    } else {
      EXPECT_TRUE(bitwise_equal(values, after.at(group))) << group;
    }
  }
  EXPECT_EQ(r.stages.at(0).freeze, "ADAPTER_ONLY");
}

TEST(Similarity, OverfitsOneFixedBatch) {
  const Corpus corpus = tiny_corpus();
  SpeechTranslationModel m = tiny_model(corpus, true);
  const auto batch = corpus.train().first(2);
  const TrainReport r = similarity_phase(m, batch, 500, 1e-2, 1, 2);
  EXPECT_LT(r.curve.back().loss, r.curve.front().loss);
}

TEST(Report, JsonLinesEndWithSummary) {
  const Corpus corpus = tiny_corpus();
  SpeechTranslationModel m = tiny_model(corpus, false);
  const TrainReport r =
      run_plan(StagePlan{{stage("mt", Task::kMtXent, FreezePreset::kMtOnly, 3)}}, m, corpus.train(), 1);
  const std::string text = r.to_jsonl(false);
  std::size_t lines = 0;
  for (char c : text) lines += c == '\n';
  EXPECT_EQ(lines, 4u);
  EXPECT_NE(text.find("\"summary\""), std::string::npos);
  EXPECT_NE(text.find("\"census_total\""), std::string::npos);
  EXPECT_EQ(text.find("wall_seconds"), std::string::npos);
}

}  // namespace
}  // namespace stlab

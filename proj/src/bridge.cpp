#include "stlab/bridge.hpp"

#include "stlab/error.hpp"
#include "stlab/rng.hpp"

namespace stlab {

Adapter Adapter::create(std::size_t width, std::size_t depth, Rng& rng, double scale) {
  if (depth == 0) throw ConfigError("adapter needs at least one layer");
  Adapter a;
  for (std::size_t l = 0; l < depth; ++l) {
    a.layers.push_back(BlstmLayer::create("adapter.blstm" + std::to_string(l), width, width, rng, scale));
  }
  return a;
}

Var Adapter::forward(Tape& tape, Var states) const {
  if (states.cols() != width()) {
    throw DimensionError("adapter expects width " + std::to_string(width()) + ", got " +
                         std::to_string(states.cols()));
  }
  return apply_stack(tape, layers, states);
}

void Adapter::collect(std::vector<Parameter*>& out) {
  for (auto& l : layers) l.collect(out);
}

SpeechTranslationModel SpeechTranslationModel::create(const ModelConfig& config, const PipelineFlags& flags,
                                                      std::size_t feature_dim, CharVocab chars, TokenVocab tokens,
                                                      std::uint64_t seed) {
  SpeechTranslationModel m;
  m.config = config;
  m.flags = flags;
  m.chars = std::move(chars);
  m.tokens = std::move(tokens);
  // Independent streams keep each module's initialization stable when
  // another module's size changes.
  Rng asr_rng(derive_seed(seed, 1));
  Rng mt_rng(derive_seed(seed, 2));
  Rng adapter_rng(derive_seed(seed, 3));
  m.asr = AsrModule::create(feature_dim, m.chars.size(), config, asr_rng);
  m.mt = MtModule::create(m.tokens.size(), config, mt_rng);
  if (flags.use_adapter) m.adapter = Adapter::create(config.hidden, config.adapter_layers, adapter_rng, config.init_scale);
  m.validate();
  return m;
}

void SpeechTranslationModel::validate() const {
  const std::size_t h = mt.embedding.value.cols();
  auto fail = [&](const std::string& what, std::size_t w) {
    throw DimensionError("dimension contract violated: " + what + " width " + std::to_string(w) +
                         " != MT embedding width " + std::to_string(h));
  };
  if (asr.hidden != h) fail("ASR hidden", asr.hidden);
  if (mt.hidden != h) fail("MT encoder", mt.hidden);
  if (adapter && adapter->width() != h) fail("adapter", adapter->width());
  if (flags.use_adapter && !adapter) throw ConfigError("use_adapter set but the model has no adapter");
  if (asr.labels != chars.size() + 1) throw DimensionError("CTC head width does not match the alphabet");
  if (mt.vocab_size != tokens.size()) throw DimensionError("MT vocabulary size does not match the token table");
}

std::size_t SpeechTranslationModel::decoder_start() const {
  return flags.decoder_starts_with_tag ? TokenVocab::kTargetTag : TokenVocab::kBos;
}

std::vector<ParameterGroup> SpeechTranslationModel::groups() {
  std::vector<ParameterGroup> out;
  std::vector<Parameter*> p;
  asr.collect(p);
  out.emplace_back("asr", std::move(p));
  p = {};
  mt.collect_embedding(p);
  out.emplace_back("mt.embedding", std::move(p));
  p = {};
  mt.collect_encoder(p);
  out.emplace_back("mt.encoder", std::move(p));
  p = {};
  mt.collect_decoder(p);
  out.emplace_back("mt.decoder", std::move(p));
  if (adapter) {
    p = {};
    adapter->collect(p);
    out.emplace_back("adapter", std::move(p));
  }
  return out;
}

std::vector<std::string> SpeechTranslationModel::group_names() const {
  std::vector<std::string> names{"asr", "mt.embedding", "mt.encoder", "mt.decoder"};
  if (adapter) names.emplace_back("adapter");
  return names;
}

AsrView run_asr(Tape& tape, const SpeechTranslationModel& model, const Tensor& features) {
  const auto out = model.asr.forward(tape, features);
  return AsrView{out.hidden, ctc_greedy_path(out.log_probs.value())};
}

std::vector<std::size_t> text_encoder_input(const SpeechTranslationModel& model, std::span<const std::size_t> ids,
                                            std::size_t tag) {
  std::vector<std::size_t> out;
  if (model.flags.encoder_language_tag) out.push_back(tag);
  out.insert(out.end(), ids.begin(), ids.end());
  return out;
}

Var prepend_target(Tape& tape, const MtModule& mt, Var states, std::size_t tag) {
  if (tag != TokenVocab::kSourceTag && tag != TokenVocab::kTargetTag) {
    throw VocabError("token id " + std::to_string(tag) + " is not a language tag");
  }
  const std::size_t ids[] = {tag};
  const Var parts[] = {mt.embed(tape, ids), states};
  return concat_rows(parts);
}

FrontEnd e2e_front_end(Tape& tape, const SpeechTranslationModel& model, const AsrView& asr,
                       std::optional<bool> target_forcing) {
  const PipelineFlags& f = model.flags;
  FrontEnd front;
  Var x = asr.hidden;
  if (f.use_compression) {
    Compressed c = compress(x, asr.path, model.chars.blank(), f.drop_blank_segments);
    x = c.states;
    front.segments = std::move(c.map);
  } else {
    front.segments = segment(asr.path);
  }
  if (f.use_adapter) {
    if (!model.adapter) throw ConfigError("use_adapter set but the model has no adapter");
    x = model.adapter->forward(tape, x);
  }
  if (target_forcing.value_or(f.use_target_forcing)) {
    x = prepend_target(tape, model.mt, x, TokenVocab::kTargetTag);
    front.tag_rows = 1;
  }
  front.encoder_input = x;
  return front;
}

Var e2e_forward(Tape& tape, const SpeechTranslationModel& model, const AsrView& asr,
                std::span<const std::size_t> decoder_input) {
  FrontEnd front = e2e_front_end(tape, model, asr);
  Var encoded = model.mt.encode_states(tape, front.encoder_input);
  return model.mt.decode_teacher_forced(tape, encoded, decoder_input);
}

Var e2e_forward(Tape& tape, const SpeechTranslationModel& model, const Tensor& features,
                std::span<const std::size_t> decoder_input) {
  return e2e_forward(tape, model, run_asr(tape, model, features), decoder_input);
}

std::vector<std::size_t> e2e_translate(const SpeechTranslationModel& model, const Tensor& features,
                                       std::size_t max_len) {
  Tape tape;
  FrontEnd front = e2e_front_end(tape, model, run_asr(tape, model, features));
  const Tensor encoded = model.mt.encode_states(tape, front.encoder_input).value();
  return model.mt.generate_greedy(encoded, model.decoder_start(), max_len);
}

std::vector<std::size_t> transcript_to_source_ids(const TokenVocab& tokens, const std::string& transcript) {
  std::vector<std::size_t> ids;
  for (const auto& w : split_words(transcript)) ids.push_back(tokens.id_or_unk(w));
  if (ids.empty()) ids.push_back(TokenVocab::kBos);
  return ids;
}

std::string recognize(const SpeechTranslationModel& model, const Tensor& features) {
  Tape tape;
  const auto out = model.asr.forward(tape, features);
  return collapse(ctc_greedy_path(out.log_probs.value()), model.chars);
}

std::vector<std::size_t> translate_text(const SpeechTranslationModel& model, std::span<const std::size_t> source_ids,
                                        std::size_t max_len) {
  Tape tape;
  const Tensor encoded = model.mt.encode(tape, text_encoder_input(model, source_ids, TokenVocab::kTargetTag)).value();
  return model.mt.generate_greedy(encoded, model.decoder_start(), max_len);
}

CascadeOutput cascade_translate(const SpeechTranslationModel& model, const Tensor& features, std::size_t max_len) {
  CascadeOutput out;
  out.transcript = recognize(model, features);
  out.source_ids = transcript_to_source_ids(model.tokens, out.transcript);
  out.translation = translate_text(model, out.source_ids, max_len);
  return out;
}

}  // namespace stlab

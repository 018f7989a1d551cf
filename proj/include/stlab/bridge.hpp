#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stlab/asr.hpp"
#include "stlab/ctc.hpp"
#include "stlab/mt.hpp"
#include "stlab/vocab.hpp"

namespace stlab {

// Three BLSTM layers of width H -> H between the recognizer and the translator.
struct Adapter {
  std::vector<BlstmLayer> layers;

  static Adapter create(std::size_t width, std::size_t depth, Rng& rng, double scale);
  std::size_t width() const { return layers.front().output_width(); }
  // Length-preserving; throws DimensionError on a width mismatch.
  Var forward(Tape& tape, Var states) const;
  void collect(std::vector<Parameter*>& out);
};

struct PipelineFlags {
  bool use_compression = true;
  bool use_adapter = false;
  bool use_target_forcing = false;
  bool drop_blank_segments = false;
  // Decoder input starts with the target-language tag rather than <bos>.
  bool decoder_starts_with_tag = true;
  // Exclude the prepended tag row when pooling audio-path encoder states.
  bool pool_excludes_tag = false;
  // Similarity text path encodes the transcript instead of the translation.
  bool text_path_source = false;
  // Text fed to the translator's encoder is prefixed with the tag of the
  // language the decoder should produce.
  bool encoder_language_tag = false;
};

// Recognizer, translator and optional adapter plus the vocabularies that tie
// them together. Copies are deep.
struct SpeechTranslationModel {
  ModelConfig config;
  PipelineFlags flags;
  CharVocab chars;
  TokenVocab tokens;
  AsrModule asr;
  MtModule mt;
  std::optional<Adapter> adapter;

  // Validates the dimension contract and builds all modules from one seed.
  // The adapter is created whenever flags.use_adapter is set.
  static SpeechTranslationModel create(const ModelConfig& config, const PipelineFlags& flags,
                                       std::size_t feature_dim, CharVocab chars, TokenVocab tokens,
                                       std::uint64_t seed);

  // Throws DimensionError when ASR hidden, MT embedding, MT encoder and
  // adapter widths disagree.
  void validate() const;

  std::size_t decoder_start() const;
  // Named parameter groups: asr, mt.embedding, mt.encoder, mt.decoder, and
  // adapter when present.
  std::vector<ParameterGroup> groups();
  std::vector<std::string> group_names() const;
};

// Recognizer outputs consumed by the end-to-end front end. When the ASR is
// frozen these can be computed once and replayed as constants.
struct AsrView {
  Var hidden;
  std::vector<std::size_t> path;  // greedy CTC labels per frame
};

AsrView run_asr(Tape& tape, const SpeechTranslationModel& model, const Tensor& features);

// Encoder input for text: the ids, prefixed with `tag` when
// flags.encoder_language_tag is set.
std::vector<std::size_t> text_encoder_input(const SpeechTranslationModel& model, std::span<const std::size_t> ids,
                                            std::size_t tag);

// Tag embedding as row 0, then the states unchanged. The tag row is read
// from the translator's embedding table. Throws VocabError for a non-tag id.
Var prepend_target(Tape& tape, const MtModule& mt, Var states, std::size_t tag);

struct FrontEnd {
  Var encoder_input;
  SegmentMap segments;
  std::size_t tag_rows = 0;
};

// ASR hidden -> [compress] -> [adapter] -> [prepend tag] according to the flags.
FrontEnd e2e_front_end(Tape& tape, const SpeechTranslationModel& model, const AsrView& asr,
                       std::optional<bool> target_forcing = std::nullopt);

// Teacher-forced logits for the full speech-to-translation path.
Var e2e_forward(Tape& tape, const SpeechTranslationModel& model, const Tensor& features,
                std::span<const std::size_t> decoder_input);
Var e2e_forward(Tape& tape, const SpeechTranslationModel& model, const AsrView& asr,
                std::span<const std::size_t> decoder_input);

std::vector<std::size_t> e2e_translate(const SpeechTranslationModel& model, const Tensor& features,
                                       std::size_t max_len);

// MT source ids for a transcript: word tokenization with unknown words mapped
// to <unk>; an empty transcript becomes a single <bos>.
std::vector<std::size_t> transcript_to_source_ids(const TokenVocab& tokens, const std::string& transcript);

struct CascadeOutput {
  std::string transcript;
  std::vector<std::size_t> source_ids;
  std::vector<std::size_t> translation;
};

CascadeOutput cascade_translate(const SpeechTranslationModel& model, const Tensor& features, std::size_t max_len);
std::string recognize(const SpeechTranslationModel& model, const Tensor& features);
std::vector<std::size_t> translate_text(const SpeechTranslationModel& model, std::span<const std::size_t> source_ids,
                                        std::size_t max_len);

}  // namespace stlab

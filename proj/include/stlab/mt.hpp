#pragma once

#include <optional>
#include <span>
#include <vector>

#include "stlab/layers.hpp"
#include "stlab/model_config.hpp"

namespace stlab {

// Single-head self-attention block with residual connections and a tanh
// feed-forward sublayer.
struct SelfAttentionLayer {
  Parameter query;
  Parameter key;
  Parameter value;
  Parameter output;
  Linear ffn_in;
  Linear ffn_out;

  static SelfAttentionLayer create(const std::string& prefix, std::size_t width, Rng& rng, double scale);
  Var apply(Tape& tape, Var x) const;
  void collect(std::vector<Parameter*>& out);
};

// Word-level encoder-decoder translator. The embedding table is shared by
// the encoder input, the decoder input and (optionally) the output layer.
//
// Decoder step u: an LSTM reads the embedding of target_ids[u]; its state
// queries the encoder states through a bilinear single-head attention; the
// state and the context are combined by tanh(W [s; c] + b) and projected to
// vocabulary logits.
struct MtModule {
  std::size_t hidden = 0;
  std::size_t vocab_size = 0;
  EncoderKind encoder_kind = EncoderKind::kBlstm;

  Parameter embedding;  // V x H
  std::vector<BlstmLayer> blstm_encoder;
  std::vector<SelfAttentionLayer> attention_encoder;
  LstmWeights decoder;
  Parameter attention;  // H x H
  Linear combine;       // 2H -> H
  std::optional<Parameter> output_weight;  // H x V, absent when tied to the embedding
  Parameter output_bias;                   // 1 x V

  static MtModule create(std::size_t vocab_size, const ModelConfig& config, Rng& rng);

  bool tied() const { return !output_weight.has_value(); }

  Var embed(Tape& tape, std::span<const std::size_t> ids) const;
  // S token ids -> S x H encoder states. Throws VocabError on unknown ids.
  Var encode(Tape& tape, std::span<const std::size_t> ids) const;
  // Runs the encoder stack on externally supplied S x H vectors.
  Var encode_states(Tape& tape, Var states) const;
  // U decoder input ids -> U x V logits; row u depends on ids[0..u] only.
  Var decode_teacher_forced(Tape& tape, Var encoded, std::span<const std::size_t> target_ids) const;
  // Argmax decoding (ties to the lowest id) until EOS or max_len tokens.
  // The start token and EOS are not part of the result.
  std::vector<std::size_t> generate_greedy(const Tensor& encoded, std::size_t start_token,
                                           std::size_t max_len) const;

  void collect_embedding(std::vector<Parameter*>& out);
  void collect_encoder(std::vector<Parameter*>& out);
  void collect_decoder(std::vector<Parameter*>& out);
};

std::size_t argmax_lowest(std::span<const double> row);

}  // namespace stlab

#include "stlab/mt.hpp"

#include <cmath>

#include "stlab/error.hpp"
#include "stlab/rng.hpp"
#include "stlab/vocab.hpp"

namespace stlab {

namespace {

Tensor sinusoid_positions(std::size_t rows, std::size_t width) {
  Tensor p = Tensor::zeros(rows, width);
  for (std::size_t pos = 0; pos < rows; ++pos) {
    for (std::size_t i = 0; i < width; ++i) {
      const double rate = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(width));
      const double angle = static_cast<double>(pos) * rate;
      p(pos, i) = i % 2 == 0 ? std::sin(angle) : std::cos(angle);
    }
  }
  return p;
}

}  // namespace

SelfAttentionLayer SelfAttentionLayer::create(const std::string& prefix, std::size_t width, Rng& rng,
                                              double scale) {
  SelfAttentionLayer l;
  l.query = make_uniform_parameter(prefix + ".query", width, width, rng, scale);
  l.key = make_uniform_parameter(prefix + ".key", width, width, rng, scale);
  l.value = make_uniform_parameter(prefix + ".value", width, width, rng, scale);
  l.output = make_uniform_parameter(prefix + ".output", width, width, rng, scale);
  l.ffn_in = Linear::create(prefix + ".ffn_in", width, width, rng, scale);
  l.ffn_out = Linear::create(prefix + ".ffn_out", width, width, rng, scale);
  return l;
}

Var SelfAttentionLayer::apply(Tape& tape, Var x) const {
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(x.cols()));
  Var q = matmul(x, tape.param(query));
  Var k = matmul(x, tape.param(key));
  Var v = matmul(x, tape.param(value));
  Var weights = softmax_rows(scale(matmul(q, transpose(k)), inv_sqrt));
  Var z = add(x, matmul(matmul(weights, v), tape.param(output)));
  return add(z, ffn_out.apply(tape, tanh(ffn_in.apply(tape, z))));
}

void SelfAttentionLayer::collect(std::vector<Parameter*>& out) {
  out.push_back(&query);
  out.push_back(&key);
  out.push_back(&value);
  out.push_back(&output);
  ffn_in.collect(out);
  ffn_out.collect(out);
}

MtModule MtModule::create(std::size_t vocab_size, const ModelConfig& config, Rng& rng) {
  MtModule m;
  const std::size_t h = config.hidden;
  const double s = config.init_scale;
  m.hidden = h;
  m.vocab_size = vocab_size;
  m.encoder_kind = config.mt_encoder;
  m.embedding = make_uniform_parameter("mt.embedding", vocab_size, h, rng, s);
  for (std::size_t l = 0; l < config.mt_encoder_layers; ++l) {
    const std::string prefix = "mt.encoder" + std::to_string(l);
    if (config.mt_encoder == EncoderKind::kBlstm) {
      m.blstm_encoder.push_back(BlstmLayer::create(prefix, h, h, rng, s));
    } else {
      m.attention_encoder.push_back(SelfAttentionLayer::create(prefix, h, rng, s));
    }
  }
  m.decoder = LstmWeights::create("mt.decoder.lstm", h, h, rng, s);
  m.attention = make_uniform_parameter("mt.decoder.attention", h, h, rng, s);
  m.combine = Linear::create("mt.decoder.combine", 2 * h, h, rng, s);
  if (!config.tie_output) m.output_weight = make_uniform_parameter("mt.decoder.output", h, vocab_size, rng, s);
  m.output_bias = make_zero_parameter("mt.decoder.output_bias", 1, vocab_size);
  return m;
}

Var MtModule::embed(Tape& tape, std::span<const std::size_t> ids) const {
  for (std::size_t id : ids) {
    if (id >= vocab_size) {
      throw VocabError("token id " + std::to_string(id) + " outside vocabulary of " + std::to_string(vocab_size));
    }
  }
  return gather_rows(tape.param(embedding), ids);
}

Var MtModule::encode(Tape& tape, std::span<const std::size_t> ids) const {
  return encode_states(tape, embed(tape, ids));
}

Var MtModule::encode_states(Tape& tape, Var states) const {
  if (states.cols() != hidden) {
    throw DimensionError("MT encoder expects width " + std::to_string(hidden) + ", got " +
                         std::to_string(states.cols()));
  }
  if (encoder_kind == EncoderKind::kBlstm) return apply_stack(tape, blstm_encoder, states);
  Var x = add(states, tape.constant(sinusoid_positions(states.rows(), hidden)));
  for (const auto& layer : attention_encoder) x = layer.apply(tape, x);
  return x;
}

Var MtModule::decode_teacher_forced(Tape& tape, Var encoded, std::span<const std::size_t> target_ids) const {
  if (target_ids.empty()) throw DomainError("decoder input is empty");
  if (encoded.rows() == 0) throw DomainError("decoder needs at least one encoder state");
  if (encoded.cols() != hidden) throw DimensionError("encoder states have the wrong width");
  const std::size_t first = target_ids.front();
  if (first != TokenVocab::kBos && first != TokenVocab::kSourceTag && first != TokenVocab::kTargetTag) {
    throw DomainError("decoder input must start with <bos> or a language tag");
  }
  Var states = decoder.apply(tape, embed(tape, target_ids), false);
  Var scores = matmul(matmul(states, tape.param(attention)), transpose(encoded));
  Var context = matmul(softmax_rows(scores), encoded);
  Var mixed = tanh(combine.apply(tape, concat_cols(states, context)));
  Var projected = tied() ? matmul(mixed, transpose(tape.param(embedding)))
                         : matmul(mixed, tape.param(*output_weight));
  return add_row(projected, tape.param(output_bias));
}

std::vector<std::size_t> MtModule::generate_greedy(const Tensor& encoded, std::size_t start_token,
                                                   std::size_t max_len) const {
  std::vector<std::size_t> prefix{start_token};
  std::vector<std::size_t> result;
  while (result.size() < max_len) {
    Tape tape;
    Var logits = decode_teacher_forced(tape, tape.constant(encoded), prefix);
    const std::size_t next = argmax_lowest(logits.value().row(logits.rows() - 1));
    if (next == TokenVocab::kEos) break;
    result.push_back(next);
    prefix.push_back(next);
  }
  return result;
}

void MtModule::collect_embedding(std::vector<Parameter*>& out) { out.push_back(&embedding); }

void MtModule::collect_encoder(std::vector<Parameter*>& out) {
  for (auto& l : blstm_encoder) l.collect(out);
  for (auto& l : attention_encoder) l.collect(out);
}

void MtModule::collect_decoder(std::vector<Parameter*>& out) {
  decoder.collect(out);
  out.push_back(&attention);
  combine.collect(out);
  if (output_weight) out.push_back(&*output_weight);
  out.push_back(&output_bias);
}

std::size_t argmax_lowest(std::span<const double> row) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < row.size(); ++j) {
    if (row[j] > row[best]) best = j;
  }
  return best;
}

}  // namespace stlab

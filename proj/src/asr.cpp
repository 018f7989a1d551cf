#include "stlab/asr.hpp"

#include "stlab/error.hpp"
#include "stlab/rng.hpp"

namespace stlab {

AsrModule AsrModule::create(std::size_t feature_dim, std::size_t alphabet_size, const ModelConfig& config,
                            Rng& rng) {
  AsrModule m;
  m.feature_dim = feature_dim;
  m.hidden = config.hidden;
  m.labels = alphabet_size + 1;
  m.input = Linear::create("asr.input", feature_dim, config.hidden, rng, config.init_scale);
  for (std::size_t l = 0; l < config.asr_layers; ++l) {
    m.layers.push_back(BlstmLayer::create("asr.blstm" + std::to_string(l), config.hidden, config.hidden, rng,
                                          config.init_scale));
  }
  m.head = Linear::create("asr.ctc_head", config.hidden, m.labels, rng, config.init_scale);
  return m;
}

AsrModule::Output AsrModule::forward(Tape& tape, const Tensor& features) const {
  if (features.rows() == 0) throw DimensionError("asr_forward needs at least one frame");
  if (features.cols() != feature_dim) {
    throw DimensionError("asr_forward expects feature width " + std::to_string(feature_dim) + ", got " +
                         std::to_string(features.cols()));
  }
  Var x = input.apply(tape, tape.constant(features));
  Var h = apply_stack(tape, layers, x);
  return Output{h, log_softmax_rows(head.apply(tape, h))};
}

void AsrModule::collect(std::vector<Parameter*>& out) {
  input.collect(out);
  for (auto& layer : layers) layer.collect(out);
  head.collect(out);
}

}  // namespace stlab

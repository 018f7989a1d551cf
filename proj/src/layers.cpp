#include "stlab/layers.hpp"

#include "stlab/error.hpp"
#include "stlab/rng.hpp"

namespace stlab {

Linear Linear::create(const std::string& prefix, std::size_t in, std::size_t out, Rng& rng, double scale) {
  return Linear{make_uniform_parameter(prefix + ".weight", in, out, rng, scale),
                make_zero_parameter(prefix + ".bias", 1, out)};
}

Var Linear::apply(Tape& tape, Var x) const {
  return add_row(matmul(x, tape.param(weight)), tape.param(bias));
}

void Linear::collect(std::vector<Parameter*>& out) {
  out.push_back(&weight);
  out.push_back(&bias);
}

LstmWeights LstmWeights::create(const std::string& prefix, std::size_t in, std::size_t hidden, Rng& rng,
                                double scale) {
  LstmWeights w{make_uniform_parameter(prefix + ".wx", in, 4 * hidden, rng, scale),
                make_uniform_parameter(prefix + ".wh", hidden, 4 * hidden, rng, scale),
                make_zero_parameter(prefix + ".bias", 1, 4 * hidden)};
  for (std::size_t j = hidden; j < 2 * hidden; ++j) w.bias.value(0, j) = 1.0;
  return w;
}

Var LstmWeights::apply(Tape& tape, Var x, bool reverse) const {
  return lstm(x, tape.param(wx), tape.param(wh), tape.param(bias), reverse);
}

void LstmWeights::collect(std::vector<Parameter*>& out) {
  out.push_back(&wx);
  out.push_back(&wh);
  out.push_back(&bias);
}

BlstmLayer BlstmLayer::create(const std::string& prefix, std::size_t in, std::size_t out, Rng& rng,
                              double scale) {
  if (out == 0 || out % 2 != 0) throw DimensionError("BLSTM width must be even, got " + std::to_string(out));
  BlstmLayer layer;
  layer.forward = LstmWeights::create(prefix + ".fw", in, out / 2, rng, scale);
  layer.backward = LstmWeights::create(prefix + ".bw", in, out / 2, rng, scale);
  return layer;
}

Var BlstmLayer::apply(Tape& tape, Var x) const {
  if (x.cols() != input_width()) {
    throw DimensionError("BLSTM expects width " + std::to_string(input_width()) + ", got " +
                         std::to_string(x.cols()));
  }
  return concat_cols(forward.apply(tape, x, false), backward.apply(tape, x, true));
}

void BlstmLayer::collect(std::vector<Parameter*>& out) {
  forward.collect(out);
  backward.collect(out);
}

Var apply_stack(Tape& tape, const std::vector<BlstmLayer>& layers, Var x) {
  for (const auto& layer : layers) x = layer.apply(tape, x);
  return x;
}

}  // namespace stlab

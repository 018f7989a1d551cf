#pragma once

#include <string>
#include <vector>

#include "stlab/parameter.hpp"
#include "stlab/tape.hpp"

namespace stlab {

class Rng;

struct Linear {
  Parameter weight;  // in x out
  Parameter bias;    // 1 x out

  static Linear create(const std::string& prefix, std::size_t in, std::size_t out, Rng& rng, double scale);
  Var apply(Tape& tape, Var x) const;
  void collect(std::vector<Parameter*>& out);
};

struct LstmWeights {
  Parameter wx;    // in x 4h
  Parameter wh;    // h x 4h
  Parameter bias;  // 1 x 4h, forget-gate slice starts at +1

  static LstmWeights create(const std::string& prefix, std::size_t in, std::size_t hidden, Rng& rng,
                            double scale);
  std::size_t hidden() const { return wh.value.rows(); }
  Var apply(Tape& tape, Var x, bool reverse) const;
  void collect(std::vector<Parameter*>& out);
};

// Bidirectional LSTM whose two halves are concatenated, so a layer of width
// `out` runs two LSTMs of width out/2.
struct BlstmLayer {
  LstmWeights forward;
  LstmWeights backward;

  static BlstmLayer create(const std::string& prefix, std::size_t in, std::size_t out, Rng& rng,
                           double scale);
  std::size_t input_width() const { return forward.wx.value.rows(); }
  std::size_t output_width() const { return 2 * forward.hidden(); }
  Var apply(Tape& tape, Var x) const;
  void collect(std::vector<Parameter*>& out);
};

Var apply_stack(Tape& tape, const std::vector<BlstmLayer>& layers, Var x);

}  // namespace stlab

#pragma once

#include <vector>

#include "stlab/layers.hpp"
#include "stlab/model_config.hpp"
#include "stlab/tensor.hpp"

namespace stlab {

// Speech encoder with a CTC head: linear input projection, a stack of BLSTM
// layers, and a projection to |alphabet| + 1 log-probabilities (blank last).
// One hidden state per input frame.
struct AsrModule {
  std::size_t feature_dim = 0;
  std::size_t hidden = 0;
  std::size_t labels = 0;  // alphabet size + blank
  Linear input;
  std::vector<BlstmLayer> layers;
  Linear head;

  static AsrModule create(std::size_t feature_dim, std::size_t alphabet_size, const ModelConfig& config,
                          Rng& rng);

  struct Output {
    Var hidden;     // T x H
    Var log_probs;  // T x (V + 1), rows are log-softmax outputs
  };
  // Throws DimensionError on a feature width mismatch or an empty input.
  Output forward(Tape& tape, const Tensor& features) const;
  void collect(std::vector<Parameter*>& out);
};

}  // namespace stlab

#pragma once

#include "stlab/rng.hpp"
#include "stlab/tensor.hpp"

namespace stlab::testing {

inline Tensor random_tensor(std::size_t rows, std::size_t cols, Rng& rng, double scale = 1.0) {
  Tensor t = Tensor::zeros(rows, cols);
  for (double& v : t.values()) v = rng.uniform(-scale, scale);
  return t;
}

}  // namespace stlab::testing

#pragma once

#include <functional>

#include "stlab/parameter.hpp"
#include "stlab/tape.hpp"

namespace stlab {

// Builds a scalar loss on the given tape from the current parameter values.
using LossBuilder = std::function<Var(Tape&)>;

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
};

// Compares the tape gradient with central differences at +-step for every
// entry of every parameter in the group:
//   error = |analytic - numeric| / max(1, |analytic|)
// The group is made trainable for the duration of the check. Throws
// NumericError if the loss is not finite.
GradCheckResult grad_check(const LossBuilder& loss, ParameterGroup& group, double step);

}  // namespace stlab

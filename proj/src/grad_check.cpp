#include "stlab/grad_check.hpp"

#include <cmath>

#include "stlab/error.hpp"

namespace stlab {

namespace {

double evaluate(const LossBuilder& loss) {
  Tape tape;
  const double v = loss(tape).value()(0, 0);
  if (!std::isfinite(v)) throw NumericError("grad_check: loss is not finite");
  return v;
}

}  // namespace

GradCheckResult grad_check(const LossBuilder& loss, ParameterGroup& group, double step) {
  if (!(step > 0.0)) throw DomainError("grad_check: step must be positive");
  std::vector<bool> saved;
  for (const Parameter* p : group.params()) saved.push_back(p->trainable);
  group.set_trainable(true);
  group.zero_grad();
  {
    Tape tape;
    Var l = loss(tape);
    if (!std::isfinite(l.value()(0, 0))) throw NumericError("grad_check: loss is not finite");
    tape.backward(l);
  }

  GradCheckResult result;
  for (Parameter* p : group.params()) {
    auto values = p->value.values();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double original = values[i];
      values[i] = original + step;
      const double plus = evaluate(loss);
      values[i] = original - step;
      const double minus = evaluate(loss);
      values[i] = original;
      const double numeric = (plus - minus) / (2.0 * step);
      const double analytic = p->grad.values()[i];
      const double err = std::abs(analytic - numeric) / std::max(1.0, std::abs(analytic));
      ++result.checked;
      if (err > result.max_relative_error) {
        result.max_relative_error = err;
        result.worst_parameter = p->name;
        result.worst_index = i;
      }
    }
  }
  std::size_t k = 0;
  for (Parameter* p : group.params()) p->trainable = saved[k++];
  return result;
}

}  // namespace stlab

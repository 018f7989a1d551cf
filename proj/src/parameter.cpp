#include "stlab/parameter.hpp"

#include "stlab/rng.hpp"

namespace stlab {

void Parameter::zero_grad() {
  if (grad.shape() != value.shape()) {
    grad = Tensor::zeros(value.rows(), value.cols());
  } else {
    std::fill(grad.values().begin(), grad.values().end(), 0.0);
  }
}

Parameter make_uniform_parameter(std::string name, std::size_t rows, std::size_t cols, Rng& rng,
                                 double scale) {
  Tensor value = Tensor::zeros(rows, cols);
  for (double& v : value.values()) v = rng.uniform(-scale, scale);
  Parameter p{std::move(name), std::move(value), Tensor{}, true};
  p.zero_grad();
  return p;
}

Parameter make_zero_parameter(std::string name, std::size_t rows, std::size_t cols) {
  Parameter p{std::move(name), Tensor::zeros(rows, cols), Tensor{}, true};
  p.zero_grad();
  return p;
}

std::size_t ParameterGroup::count() const {
  std::size_t n = 0;
  for (const Parameter* p : params_) n += p->value.size();
  return n;
}

bool ParameterGroup::trainable() const {
  for (const Parameter* p : params_) {
    if (!p->trainable) return false;
  }
  return true;
}

void ParameterGroup::set_trainable(bool trainable) {
  for (Parameter* p : params_) p->trainable = trainable;
}

void ParameterGroup::zero_grad() {
  for (Parameter* p : params_) p->zero_grad();
}

}  // namespace stlab

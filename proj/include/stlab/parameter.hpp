#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "stlab/tensor.hpp"

namespace stlab {

class Rng;

// A trainable tensor together with its gradient accumulator.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  bool trainable = true;

  void zero_grad();
};

Parameter make_uniform_parameter(std::string name, std::size_t rows, std::size_t cols, Rng& rng,
                                 double scale);
Parameter make_zero_parameter(std::string name, std::size_t rows, std::size_t cols);

// Named view over parameters owned by a module. The freeze flag of a group is
// the trainable flag shared by all of its members.
class ParameterGroup {
 public:
  ParameterGroup(std::string name, std::vector<Parameter*> params)
      : name_(std::move(name)), params_(std::move(params)) {}

  const std::string& name() const { return name_; }
  std::span<Parameter* const> params() const { return params_; }
  std::size_t count() const;
  bool trainable() const;
  void set_trainable(bool trainable);
  void zero_grad();

 private:
  std::string name_;
  std::vector<Parameter*> params_;
};

}  // namespace stlab

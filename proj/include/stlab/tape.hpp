#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <utility>
#include <deque>
#include <vector>

#include "stlab/parameter.hpp"
#include "stlab/tensor.hpp"

namespace stlab {

class Tape;

// Handle to a value recorded on a Tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }
  bool requires_grad() const;
};

// Reverse-mode gradient tape. Nodes are appended in evaluation order, so the
// reverse of insertion order is a valid backward schedule. Nodes that do not
// depend on a trainable parameter carry no gradient and are skipped.
class Tape {
 public:
  // Receives the gradient of the node's output and accumulates into inputs.
  using Backprop = std::function<void(Tape&, std::span<const double>)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  // Leaf bound to a parameter; gradients flow only if the parameter is trainable.
  Var param(const Parameter& p);
  Var push(Tensor value, bool requires_grad, Backprop backprop);

  const Tensor& value(std::size_t id) const;
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  // Gradient buffer of a node, allocated on first use.
  std::span<double> grad(std::size_t id);
  std::size_t size() const { return nodes_.size(); }

  // Backpropagates from a 1x1 loss node and adds leaf gradients into the
  // bound parameters' accumulators.
  void backward(Var loss);

 private:
  struct Node {
    Tensor owned;
    const Tensor* external = nullptr;
    Parameter* parameter = nullptr;
    bool requires_grad = false;
    std::vector<double> grad;
    Backprop backprop;
  };
  std::deque<Node> nodes_;
};

inline const Tensor& Var::value() const { return tape->value(id); }
inline bool Var::requires_grad() const { return tape->requires_grad(id); }

// Numerically stable log(sum(exp(x))). Throws DomainError on empty input.
double logsumexp(std::span<const double> x);

// Differentiable primitives. All operate on rank-2 values.
Var matmul(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var hadamard(Var a, Var b);
Var scale(Var a, double factor);
// Adds a 1xN row to every row of an MxN value.
Var add_row(Var a, Var row);
Var tanh(Var a);
Var sigmoid(Var a);
Var concat_cols(Var a, Var b);
Var concat_rows(std::span<const Var> parts);
Var slice_rows(Var a, std::size_t begin, std::size_t end);
// Embedding lookup: row i of the result is row ids[i] of the table.
Var gather_rows(Var table, std::span<const std::size_t> ids);
Var softmax_rows(Var a);
Var log_softmax_rows(Var a);
// 1xN mean of the first `count` rows.
Var mean_rows(Var a, std::size_t count);
// Row r of the result is the mean of rows [runs[r].first, runs[r].second).
Var segment_mean(Var a, std::span<const std::pair<std::size_t, std::size_t>> runs);
Var sum(Var a);

// Unidirectional LSTM over the rows of x with gate layout [input, forget,
// cell, output]. Shapes: x T x I, wx I x 4h, wh h x 4h, bias 1 x 4h. Returns
// T x h hidden states; `reverse` runs from the last row to the first while
// keeping outputs aligned with their input rows. Backward is hand-derived BPTT.
Var lstm(Var x, Var wx, Var wh, Var bias, bool reverse);

}  // namespace stlab

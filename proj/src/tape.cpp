#include "stlab/tape.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

#include "stlab/error.hpp"

namespace stlab {

namespace {

void require_same_tape(Var a, Var b) {
  if (a.tape != b.tape) throw DomainError("operands recorded on different tapes");
}

void require_shape(bool ok, const char* op, const Tensor& a, const Tensor& b) {
  if (!ok) {
    throw DimensionError(std::string(op) + ": incompatible shapes " + shape_string(a.shape()) +
                         " and " + shape_string(b.shape()));
  }
}

// out[m x n] += a[m x k] * b[k x n]
void gemm_nn(const double* a, const double* b, double* out, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* o = out + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      if (av == 0.0) continue;
      const double* br = b + p * n;
      for (std::size_t j = 0; j < n; ++j) o[j] += av * br[j];
    }
  }
}

// out[m x k] += g[m x n] * b[k x n]^T
void gemm_nt(const double* g, const double* b, double* out, std::size_t m, std::size_t n,
             std::size_t k) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* gr = g + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double* br = b + p * n;
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += gr[j] * br[j];
      out[i * k + p] += acc;
    }
  }
}

// out[k x n] += a[m x k]^T * g[m x n]
void gemm_tn(const double* a, const double* g, double* out, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* gr = g + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      if (av == 0.0) continue;
      double* o = out + p * n;
      for (std::size_t j = 0; j < n; ++j) o[j] += av * gr[j];
    }
  }
}

double sigmoid_scalar(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Var Tape::constant(Tensor value) {
  Node node;
  node.owned = std::move(value);
  nodes_.push_back(std::move(node));
  return Var{this, nodes_.size() - 1};
}

Var Tape::param(const Parameter& p) {
  Node node;
  node.external = &p.value;
  node.parameter = const_cast<Parameter*>(&p);
  node.requires_grad = p.trainable;
  nodes_.push_back(std::move(node));
  return Var{this, nodes_.size() - 1};
}

Var Tape::push(Tensor value, bool requires_grad, Backprop backprop) {
  value.check_finite("tape op output");
  Node node;
  node.owned = std::move(value);
  node.requires_grad = requires_grad;
  if (requires_grad) node.backprop = std::move(backprop);
  nodes_.push_back(std::move(node));
  return Var{this, nodes_.size() - 1};
}

const Tensor& Tape::value(std::size_t id) const {
  const Node& n = nodes_[id];
  return n.external ? *n.external : n.owned;
}

std::span<double> Tape::grad(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) n.grad.assign(value(id).size(), 0.0);
  return n.grad;
}

void Tape::backward(Var loss) {
  if (loss.tape != this) throw DomainError("backward on a foreign tape");
  const Tensor& lv = value(loss.id);
  if (lv.size() != 1) throw DimensionError("backward requires a scalar loss, got " + shape_string(lv.shape()));
  if (!nodes_[loss.id].requires_grad) return;
  grad(loss.id)[0] += 1.0;
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.empty()) continue;
    if (n.backprop) n.backprop(*this, n.grad);
    if (n.parameter != nullptr) {
      Parameter& p = *n.parameter;
      if (p.grad.shape() != p.value.shape()) p.zero_grad();
      auto g = p.grad.values();
      for (std::size_t k = 0; k < g.size(); ++k) g[k] += n.grad[k];
    }
  }
}

double logsumexp(std::span<const double> x) {
  if (x.empty()) throw DomainError("logsumexp of an empty sequence");
  const double m = *std::max_element(x.begin(), x.end());
  if (m == -std::numeric_limits<double>::infinity()) return m;
  double s = 0.0;
  for (double v : x) s += std::exp(v - m);
  return m + std::log(s);
}

Var matmul(Var a, Var b) {
  require_same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_shape(av.cols() == bv.rows(), "matmul", av, bv);
  const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
  Tensor out = Tensor::zeros(m, n);
  gemm_nn(av.values().data(), bv.values().data(), out.values().data(), m, k, n);
  const bool rg = a.requires_grad() || b.requires_grad();
  return a.tape->push(std::move(out), rg, [a, b, m, k, n](Tape& t, std::span<const double> g) {
    if (t.requires_grad(a.id)) {
      gemm_nt(g.data(), t.value(b.id).values().data(), t.grad(a.id).data(), m, n, k);
    }
    if (t.requires_grad(b.id)) {
      gemm_tn(t.value(a.id).values().data(), g.data(), t.grad(b.id).data(), m, k, n);
    }
  });
}

Var transpose(Var a) {
  const Tensor& av = a.value();
  const std::size_t m = av.rows(), n = av.cols();
  Tensor out = Tensor::zeros(n, m);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out(j, i) = av(i, j);
  return a.tape->push(std::move(out), a.requires_grad(), [a, m, n](Tape& t, std::span<const double> g) {
    auto ga = t.grad(a.id);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[j * m + i];
  });
}

namespace {

template <typename Fwd, typename BwdA, typename BwdB>
Var elementwise_binary(const char* name, Var a, Var b, Fwd fwd, BwdA bwd_a, BwdB bwd_b) {
  require_same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_shape(av.rows() == bv.rows() && av.cols() == bv.cols(), name, av, bv);
  Tensor out = Tensor::zeros(av.rows(), av.cols());
  auto o = out.values();
  auto x = av.values();
  auto y = bv.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = fwd(x[i], y[i]);
  const bool rg = a.requires_grad() || b.requires_grad();
  return a.tape->push(std::move(out), rg, [a, b, bwd_a, bwd_b](Tape& t, std::span<const double> g) {
    auto x = t.value(a.id).values();
    auto y = t.value(b.id).values();
    if (t.requires_grad(a.id)) {
      auto ga = t.grad(a.id);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bwd_a(x[i], y[i]);
    }
    if (t.requires_grad(b.id)) {
      auto gb = t.grad(b.id);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * bwd_b(x[i], y[i]);
    }
  });
}

}  // namespace

Var add(Var a, Var b) {
  return elementwise_binary(
      "add", a, b, [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

Var sub(Var a, Var b) {
  return elementwise_binary(
      "sub", a, b, [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

Var hadamard(Var a, Var b) {
  return elementwise_binary(
      "hadamard", a, b, [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

Var scale(Var a, double factor) {
  const Tensor& av = a.value();
  Tensor out = Tensor::zeros(av.rows(), av.cols());
  auto o = out.values();
  auto x = av.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] * factor;
  return a.tape->push(std::move(out), a.requires_grad(), [a, factor](Tape& t, std::span<const double> g) {
    auto ga = t.grad(a.id);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * factor;
  });
}

Var add_row(Var a, Var row) {
  require_same_tape(a, row);
  const Tensor& av = a.value();
  const Tensor& rv = row.value();
  require_shape(rv.rows() == 1 && rv.cols() == av.cols(), "add_row", av, rv);
  const std::size_t m = av.rows(), n = av.cols();
  Tensor out = Tensor::zeros(m, n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out(i, j) = av(i, j) + rv(0, j);
  const bool rg = a.requires_grad() || row.requires_grad();
  return a.tape->push(std::move(out), rg, [a, row, m, n](Tape& t, std::span<const double> g) {
    if (t.requires_grad(a.id)) {
      auto ga = t.grad(a.id);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (t.requires_grad(row.id)) {
      auto gr = t.grad(row.id);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) gr[j] += g[i * n + j];
    }
  });
}

Var tanh(Var a) {
  const Tensor& av = a.value();
  Tensor out = Tensor::zeros(av.rows(), av.cols());
  auto o = out.values();
  auto x = av.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = std::tanh(x[i]);
  Tape* tape = a.tape;
  const std::size_t self = tape->size();
  return tape->push(std::move(out), a.requires_grad(), [a, self](Tape& t, std::span<const double> g) {
    auto y = t.value(self).values();
    auto ga = t.grad(a.id);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (1.0 - y[i] * y[i]);
  });
}

Var sigmoid(Var a) {
  const Tensor& av = a.value();
  Tensor out = Tensor::zeros(av.rows(), av.cols());
  auto o = out.values();
  auto x = av.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = sigmoid_scalar(x[i]);
  Tape* tape = a.tape;
  const std::size_t self = tape->size();
  return tape->push(std::move(out), a.requires_grad(), [a, self](Tape& t, std::span<const double> g) {
    auto y = t.value(self).values();
    auto ga = t.grad(a.id);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i] * (1.0 - y[i]);
  });
}

Var concat_cols(Var a, Var b) {
  require_same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_shape(av.rows() == bv.rows(), "concat_cols", av, bv);
  const std::size_t m = av.rows(), na = av.cols(), nb = bv.cols();
  Tensor out = Tensor::zeros(m, na + nb);
  for (std::size_t i = 0; i < m; ++i) {
    std::copy_n(av.row(i).begin(), na, out.row(i).begin());
    std::copy_n(bv.row(i).begin(), nb, out.row(i).begin() + na);
  }
  const bool rg = a.requires_grad() || b.requires_grad();
  return a.tape->push(std::move(out), rg, [a, b, m, na, nb](Tape& t, std::span<const double> g) {
    const std::size_t n = na + nb;
    if (t.requires_grad(a.id)) {
      auto ga = t.grad(a.id);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < na; ++j) ga[i * na + j] += g[i * n + j];
    }
    if (t.requires_grad(b.id)) {
      auto gb = t.grad(b.id);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < nb; ++j) gb[i * nb + j] += g[i * n + na + j];
    }
  });
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw DomainError("concat_rows of no parts");
  Tape* tape = parts.front().tape;
  const std::size_t n = parts.front().cols();
  std::size_t m = 0;
  bool rg = false;
  for (const Var& p : parts) {
    if (p.tape != tape) throw DomainError("operands recorded on different tapes");
    if (p.cols() != n) require_shape(false, "concat_rows", parts.front().value(), p.value());
    m += p.rows();
    rg = rg || p.requires_grad();
  }
  Tensor out = Tensor::zeros(m, n);
  std::size_t offset = 0;
  for (const Var& p : parts) {
    auto src = p.value().values();
    std::copy(src.begin(), src.end(), out.values().begin() + static_cast<std::ptrdiff_t>(offset));
    offset += src.size();
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  return tape->push(std::move(out), rg, [inputs](Tape& t, std::span<const double> g) {
    std::size_t offset = 0;
    for (const Var& p : inputs) {
      const std::size_t len = t.value(p.id).size();
      if (t.requires_grad(p.id)) {
        auto gp = t.grad(p.id);
        for (std::size_t i = 0; i < len; ++i) gp[i] += g[offset + i];
      }
      offset += len;
    }
  });
}

Var slice_rows(Var a, std::size_t begin, std::size_t end) {
  const Tensor& av = a.value();
  if (begin > end || end > av.rows()) {
    throw DimensionError("slice_rows [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") out of range for " + shape_string(av.shape()));
  }
  const std::size_t n = av.cols();
  Tensor out = Tensor::zeros(end - begin, n);
  std::copy_n(av.values().begin() + static_cast<std::ptrdiff_t>(begin * n), (end - begin) * n,
              out.values().begin());
  return a.tape->push(std::move(out), a.requires_grad(), [a, begin, n](Tape& t, std::span<const double> g) {
    auto ga = t.grad(a.id);
    for (std::size_t i = 0; i < g.size(); ++i) ga[begin * n + i] += g[i];
  });
}

Var gather_rows(Var table, std::span<const std::size_t> ids) {
  const Tensor& tv = table.value();
  const std::size_t n = tv.cols();
  Tensor out = Tensor::zeros(ids.size(), n);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= tv.rows()) {
      throw DimensionError("gather_rows: id " + std::to_string(ids[i]) + " outside table of " +
                           std::to_string(tv.rows()) + " rows");
    }
    std::copy_n(tv.row(ids[i]).begin(), n, out.row(i).begin());
  }
  std::vector<std::size_t> idv(ids.begin(), ids.end());
  return table.tape->push(std::move(out), table.requires_grad(),
                          [table, idv, n](Tape& t, std::span<const double> g) {
                            auto gt = t.grad(table.id);
                            for (std::size_t i = 0; i < idv.size(); ++i)
                              for (std::size_t j = 0; j < n; ++j) gt[idv[i] * n + j] += g[i * n + j];
                          });
}

Var softmax_rows(Var a) {
  const Tensor& av = a.value();
  const std::size_t m = av.rows(), n = av.cols();
  Tensor out = Tensor::zeros(m, n);
  for (std::size_t i = 0; i < m; ++i) {
    const double lse = logsumexp(av.row(i));
    for (std::size_t j = 0; j < n; ++j) out(i, j) = std::exp(av(i, j) - lse);
  }
  Tape* tape = a.tape;
  const std::size_t self = tape->size();
  return tape->push(std::move(out), a.requires_grad(), [a, self, m, n](Tape& t, std::span<const double> g) {
    const Tensor& y = t.value(self);
    auto ga = t.grad(a.id);
    for (std::size_t i = 0; i < m; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += g[i * n + j] * y(i, j);
      for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += y(i, j) * (g[i * n + j] - dot);
    }
  });
}

Var log_softmax_rows(Var a) {
  const Tensor& av = a.value();
  const std::size_t m = av.rows(), n = av.cols();
  Tensor out = Tensor::zeros(m, n);
  for (std::size_t i = 0; i < m; ++i) {
    const double lse = logsumexp(av.row(i));
    for (std::size_t j = 0; j < n; ++j) out(i, j) = av(i, j) - lse;
  }
  Tape* tape = a.tape;
  const std::size_t self = tape->size();
  return tape->push(std::move(out), a.requires_grad(), [a, self, m, n](Tape& t, std::span<const double> g) {
    const Tensor& y = t.value(self);
    auto ga = t.grad(a.id);
    for (std::size_t i = 0; i < m; ++i) {
      double gsum = 0.0;
      for (std::size_t j = 0; j < n; ++j) gsum += g[i * n + j];
      for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[i * n + j] - std::exp(y(i, j)) * gsum;
    }
  });
}

Var mean_rows(Var a, std::size_t count) {
  const Tensor& av = a.value();
  if (count == 0 || count > av.rows()) {
    throw DomainError("mean_rows over " + std::to_string(count) + " of " +
                      std::to_string(av.rows()) + " rows");
  }
  const std::size_t n = av.cols();
  Tensor out = Tensor::zeros(1, n);
  for (std::size_t i = 0; i < count; ++i)
    for (std::size_t j = 0; j < n; ++j) out(0, j) += av(i, j);
  const double inv = 1.0 / static_cast<double>(count);
  for (double& v : out.values()) v *= inv;
  return a.tape->push(std::move(out), a.requires_grad(), [a, count, n, inv](Tape& t, std::span<const double> g) {
    auto ga = t.grad(a.id);
    for (std::size_t i = 0; i < count; ++i)
      for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[j] * inv;
  });
}

Var segment_mean(Var a, std::span<const std::pair<std::size_t, std::size_t>> runs) {
  const Tensor& av = a.value();
  const std::size_t n = av.cols();
  Tensor out = Tensor::zeros(runs.size(), n);
  for (std::size_t r = 0; r < runs.size(); ++r) {
    const auto [begin, end] = runs[r];
    if (begin >= end || end > av.rows()) throw DimensionError("segment_mean: bad run");
    auto o = out.row(r);
    for (std::size_t i = begin; i < end; ++i)
      for (std::size_t j = 0; j < n; ++j) o[j] += av(i, j);
    const double inv = 1.0 / static_cast<double>(end - begin);
    for (double& v : o) v *= inv;
  }
  std::vector<std::pair<std::size_t, std::size_t>> rv(runs.begin(), runs.end());
  return a.tape->push(std::move(out), a.requires_grad(), [a, rv, n](Tape& t, std::span<const double> g) {
    auto ga = t.grad(a.id);
    for (std::size_t r = 0; r < rv.size(); ++r) {
      const auto [begin, end] = rv[r];
      const double inv = 1.0 / static_cast<double>(end - begin);
      for (std::size_t i = begin; i < end; ++i)
        for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[r * n + j] * inv;
    }
  });
}

Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().values()) s += v;
  Tensor out = Tensor::zeros(1, 1);
  out(0, 0) = s;
  return a.tape->push(std::move(out), a.requires_grad(), [a](Tape& t, std::span<const double> g) {
    auto ga = t.grad(a.id);
    for (double& v : ga) v += g[0];
  });
}

namespace {

struct LstmCache {
  std::size_t steps = 0;
  std::size_t input = 0;
  std::size_t hidden = 0;
  bool reverse = false;
  std::vector<double> gates;  // post-activation i, f, g, o per step, T x 4h
  std::vector<double> cells;  // c_t per step, T x h
  std::vector<double> cell_tanh;
};

}  // namespace

Var lstm(Var x, Var wx, Var wh, Var bias, bool reverse) {
  require_same_tape(x, wx);
  require_same_tape(x, wh);
  require_same_tape(x, bias);
  const Tensor& xv = x.value();
  const Tensor& wxv = wx.value();
  const Tensor& whv = wh.value();
  const Tensor& bv = bias.value();
  const std::size_t T = xv.rows(), I = xv.cols(), h = whv.rows();
  require_shape(wxv.rows() == I && wxv.cols() == 4 * h, "lstm input weights", xv, wxv);
  require_shape(whv.cols() == 4 * h, "lstm recurrent weights", whv, whv);
  require_shape(bv.rows() == 1 && bv.cols() == 4 * h, "lstm bias", bv, whv);

  auto cache = std::make_shared<LstmCache>();
  cache->steps = T;
  cache->input = I;
  cache->hidden = h;
  cache->reverse = reverse;
  cache->gates.assign(T * 4 * h, 0.0);
  cache->cells.assign(T * h, 0.0);
  cache->cell_tanh.assign(T * h, 0.0);

  // Input contribution for every step at once.
  std::vector<double> z(T * 4 * h, 0.0);
  gemm_nn(xv.values().data(), wxv.values().data(), z.data(), T, I, 4 * h);

  Tensor out = Tensor::zeros(T, h);
  std::vector<double> h_prev(h, 0.0), c_prev(h, 0.0);
  for (std::size_t s = 0; s < T; ++s) {
    const std::size_t t = reverse ? T - 1 - s : s;
    double* zt = z.data() + t * 4 * h;
    for (std::size_t j = 0; j < 4 * h; ++j) zt[j] += bv(0, j);
    gemm_nn(h_prev.data(), whv.values().data(), zt, 1, h, 4 * h);
    double* gt = cache->gates.data() + t * 4 * h;
    double* ct = cache->cells.data() + t * h;
    double* tt = cache->cell_tanh.data() + t * h;
    for (std::size_t j = 0; j < h; ++j) {
      const double ig = sigmoid_scalar(zt[j]);
      const double fg = sigmoid_scalar(zt[h + j]);
      const double gg = std::tanh(zt[2 * h + j]);
      const double og = sigmoid_scalar(zt[3 * h + j]);
      gt[j] = ig;
      gt[h + j] = fg;
      gt[2 * h + j] = gg;
      gt[3 * h + j] = og;
      ct[j] = fg * c_prev[j] + ig * gg;
      tt[j] = std::tanh(ct[j]);
      out(t, j) = og * tt[j];
    }
    std::copy_n(ct, h, c_prev.begin());
    std::copy_n(out.row(t).begin(), h, h_prev.begin());
  }

  Tape* tape = x.tape;
  const std::size_t self = tape->size();
  const bool rg = x.requires_grad() || wx.requires_grad() || wh.requires_grad() || bias.requires_grad();
  return tape->push(std::move(out), rg, [x, wx, wh, bias, self, cache](Tape& tp, std::span<const double> g) {
    const std::size_t T = cache->steps, I = cache->input, h = cache->hidden;
    const Tensor& hv = tp.value(self);
    const Tensor& whv = tp.value(wh.id);
    std::vector<double> dz(T * 4 * h, 0.0);
    std::vector<double> dh_next(h, 0.0), dc_next(h, 0.0);
    for (std::size_t s = T; s-- > 0;) {
      const std::size_t t = cache->reverse ? T - 1 - s : s;
      // Step processed just before t in forward order, if any.
      const bool has_prev = s > 0;
      const std::size_t tp_idx = cache->reverse ? t + 1 : t - 1;
      const double* gt = cache->gates.data() + t * 4 * h;
      const double* tt = cache->cell_tanh.data() + t * h;
      double* dzt = dz.data() + t * 4 * h;
      for (std::size_t j = 0; j < h; ++j) {
        const double ig = gt[j], fg = gt[h + j], gg = gt[2 * h + j], og = gt[3 * h + j];
        const double dh = g[t * h + j] + dh_next[j];
        const double dc = dh * og * (1.0 - tt[j] * tt[j]) + dc_next[j];
        const double c_prev = has_prev ? cache->cells[tp_idx * h + j] : 0.0;
        dzt[j] = dc * gg * ig * (1.0 - ig);
        dzt[h + j] = dc * c_prev * fg * (1.0 - fg);
        dzt[2 * h + j] = dc * ig * (1.0 - gg * gg);
        dzt[3 * h + j] = dh * tt[j] * og * (1.0 - og);
        dc_next[j] = dc * fg;
      }
      std::fill(dh_next.begin(), dh_next.end(), 0.0);
      gemm_nt(dzt, whv.values().data(), dh_next.data(), 1, 4 * h, h);
      if (has_prev && tp.requires_grad(wh.id)) {
        gemm_tn(hv.values().data() + tp_idx * h, dzt, tp.grad(wh.id).data(), 1, h, 4 * h);
      }
    }
    if (tp.requires_grad(bias.id)) {
      auto gb = tp.grad(bias.id);
      for (std::size_t t = 0; t < T; ++t)
        for (std::size_t j = 0; j < 4 * h; ++j) gb[j] += dz[t * 4 * h + j];
    }
    if (tp.requires_grad(wx.id)) {
      gemm_tn(tp.value(x.id).values().data(), dz.data(), tp.grad(wx.id).data(), T, I, 4 * h);
    }
    if (tp.requires_grad(x.id)) {
      gemm_nt(dz.data(), tp.value(wx.id).values().data(), tp.grad(x.id).data(), T, 4 * h, I);
    }
  });
}

}  // namespace stlab

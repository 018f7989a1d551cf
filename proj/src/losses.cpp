#include "stlab/losses.hpp"

#include <cmath>
#include <map>
#include <memory>

#include "stlab/error.hpp"

namespace stlab {

Var cross_entropy(Var logits, std::span<const std::size_t> targets, std::span<const bool> mask) {
  const Tensor& lv = logits.value();
  const std::size_t U = lv.rows(), V = lv.cols();
  if (targets.size() != U) {
    throw DimensionError("cross_entropy: " + std::to_string(targets.size()) + " targets for " + std::to_string(U) +
                         " logit rows");
  }
  if (!mask.empty() && mask.size() != U) throw DimensionError("cross_entropy: mask length mismatch");
  std::size_t active = 0;
  for (std::size_t u = 0; u < U; ++u) active += mask.empty() || mask[u] ? 1 : 0;
  if (active == 0) throw DomainError("cross_entropy: every position is masked");

  auto probs = std::make_shared<std::vector<double>>(U * V, 0.0);
  double total = 0.0;
  for (std::size_t u = 0; u < U; ++u) {
    if (targets[u] >= V) throw DimensionError("cross_entropy: target id outside logit width");
    const double lse = logsumexp(lv.row(u));
    for (std::size_t k = 0; k < V; ++k) (*probs)[u * V + k] = std::exp(lv(u, k) - lse);
    if (mask.empty() || mask[u]) total -= lv(u, targets[u]) - lse;
  }
  const double inv = 1.0 / static_cast<double>(active);
  Tensor out = Tensor::zeros(1, 1);
  out(0, 0) = total * inv;
  std::vector<std::size_t> tv(targets.begin(), targets.end());
  std::vector<bool> mv(mask.begin(), mask.end());
  return logits.tape->push(std::move(out), logits.requires_grad(),
                           [logits, probs, tv, mv, U, V, inv](Tape& t, std::span<const double> g) {
                             auto gl = t.grad(logits.id);
                             for (std::size_t u = 0; u < U; ++u) {
                               if (!mv.empty() && !mv[u]) continue;
                               for (std::size_t k = 0; k < V; ++k) {
                                 const double d = (*probs)[u * V + k] - (k == tv[u] ? 1.0 : 0.0);
                                 gl[u * V + k] += g[0] * inv * d;
                               }
                             }
                           });
}

Var similarity_loss(Var audio_pool, Var text_pool) {
  if (audio_pool.rows() != 1 || text_pool.rows() != 1 || audio_pool.cols() != text_pool.cols()) {
    throw DimensionError("similarity_loss: pooled widths " + shape_string(audio_pool.value().shape()) + " and " +
                         shape_string(text_pool.value().shape()));
  }
  Var diff = sub(audio_pool, text_pool);
  return scale(sum(hadamard(diff, diff)), kSimilarityScale / static_cast<double>(diff.cols()));
}

Var pool_encoder_states(Var states, std::size_t valid_len) {
  if (valid_len == 0) throw DomainError("pool_encoder_states: valid_len must be at least 1");
  if (valid_len > states.rows()) {
    throw DomainError("pool_encoder_states: valid_len " + std::to_string(valid_len) + " exceeds " +
                      std::to_string(states.rows()) + " states");
  }
  return mean_rows(states, valid_len);
}

std::size_t edit_distance(std::span<const std::string> a, std::span<const std::string> b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t sub_cost = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({sub_cost, prev[j] + 1, cur[j - 1] + 1});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double wer(std::span<const std::string> ref, std::span<const std::string> hyp) {
  if (ref.empty()) throw DomainError("wer: empty reference");
  return static_cast<double>(edit_distance(ref, hyp)) / static_cast<double>(ref.size());
}

namespace {

using NgramCounts = std::map<std::vector<std::string>, std::size_t>;

NgramCounts count_ngrams(const std::vector<std::string>& words, std::size_t n) {
  NgramCounts counts;
  for (std::size_t i = 0; i + n <= words.size(); ++i) {
    ++counts[std::vector<std::string>(words.begin() + static_cast<std::ptrdiff_t>(i),
                                      words.begin() + static_cast<std::ptrdiff_t>(i + n))];
  }
  return counts;
}

}  // namespace

double bleu(const std::vector<std::vector<std::string>>& refs, const std::vector<std::vector<std::string>>& hyps) {
  if (refs.size() != hyps.size()) {
    throw DomainError("bleu: " + std::to_string(refs.size()) + " references for " + std::to_string(hyps.size()) +
                      " hypotheses");
  }
  if (refs.empty()) throw DomainError("bleu: empty corpus");
  constexpr std::size_t kOrder = 4;
  std::size_t matches[kOrder] = {}, totals[kOrder] = {};
  std::size_t hyp_len = 0, ref_len = 0;
  for (std::size_t i = 0; i < refs.size(); ++i) {
    hyp_len += hyps[i].size();
    ref_len += refs[i].size();
    for (std::size_t n = 1; n <= kOrder; ++n) {
      const NgramCounts h = count_ngrams(hyps[i], n);
      const NgramCounts r = count_ngrams(refs[i], n);
      for (const auto& [gram, count] : h) {
        totals[n - 1] += count;
        auto it = r.find(gram);
        if (it != r.end()) matches[n - 1] += std::min(count, it->second);
      }
    }
  }
  if (hyp_len == 0 || matches[0] == 0) return 0.0;
  double log_precision = std::log(static_cast<double>(matches[0]) / static_cast<double>(totals[0]));
  for (std::size_t n = 1; n < kOrder; ++n) {
    log_precision += std::log(static_cast<double>(matches[n] + 1) / static_cast<double>(totals[n] + 1));
  }
  const double bp = hyp_len > ref_len
                        ? 1.0
                        : std::exp(1.0 - static_cast<double>(ref_len) / static_cast<double>(hyp_len));
  return 100.0 * bp * std::exp(log_precision / static_cast<double>(kOrder));
}

}  // namespace stlab

#include "stlab/ctc.hpp"

#include <cmath>
#include <limits>
#include <memory>
#include <sstream>

#include "stlab/error.hpp"
#include "stlab/vocab.hpp"

namespace stlab {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

}  // namespace

std::size_t ctc_min_frames(std::span<const std::size_t> labels) {
  std::size_t n = labels.size();
  for (std::size_t i = 1; i < labels.size(); ++i) {
    if (labels[i] == labels[i - 1]) ++n;
  }
  return n;
}

CtcResult ctc_loss(const Tensor& log_probs, std::span<const std::size_t> labels) {
  const std::size_t T = log_probs.rows();
  const std::size_t K = log_probs.cols();
  if (K < 2) throw DimensionError("CTC needs at least one label column plus blank");
  const std::size_t blank = K - 1;
  if (labels.empty()) throw DomainError("CTC label sequence is empty");
  for (std::size_t l : labels) {
    if (l >= blank) throw DomainError("CTC label id " + std::to_string(l) + " is not below the blank id");
  }
  const std::size_t need = ctc_min_frames(labels);
  if (T < need) {
    throw InfeasibleAlignmentError("CTC alignment infeasible: " + std::to_string(T) + " frames for " +
                                   std::to_string(labels.size()) + " labels needing " + std::to_string(need));
  }

  const std::size_t S = 2 * labels.size() + 1;
  std::vector<std::size_t> ext(S, blank);
  for (std::size_t i = 0; i < labels.size(); ++i) ext[2 * i + 1] = labels[i];
  auto skip_allowed = [&](std::size_t s) { return s >= 2 && ext[s] != blank && ext[s] != ext[s - 2]; };

  std::vector<double> alpha(T * S, kNegInf), beta(T * S, kNegInf);
  alpha[0] = log_probs(0, ext[0]);
  alpha[1] = log_probs(0, ext[1]);
  for (std::size_t t = 1; t < T; ++t) {
    for (std::size_t s = 0; s < S; ++s) {
      double a = alpha[(t - 1) * S + s];
      if (s >= 1) a = log_add(a, alpha[(t - 1) * S + s - 1]);
      if (skip_allowed(s)) a = log_add(a, alpha[(t - 1) * S + s - 2]);
      alpha[t * S + s] = a == kNegInf ? kNegInf : a + log_probs(t, ext[s]);
    }
  }
  const double log_total = log_add(alpha[(T - 1) * S + S - 1], alpha[(T - 1) * S + S - 2]);
  if (!std::isfinite(log_total)) throw NumericError("CTC total path probability underflowed");

  beta[(T - 1) * S + S - 1] = log_probs(T - 1, ext[S - 1]);
  beta[(T - 1) * S + S - 2] = log_probs(T - 1, ext[S - 2]);
  for (std::size_t t = T - 1; t-- > 0;) {
    for (std::size_t s = 0; s < S; ++s) {
      double b = beta[(t + 1) * S + s];
      if (s + 1 < S) b = log_add(b, beta[(t + 1) * S + s + 1]);
      if (s + 2 < S && skip_allowed(s + 2)) b = log_add(b, beta[(t + 1) * S + s + 2]);
      beta[t * S + s] = b == kNegInf ? kNegInf : b + log_probs(t, ext[s]);
    }
  }

  Tensor grad = Tensor::zeros(T, K);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t s = 0; s < S; ++s) {
      const double ab = alpha[t * S + s] + beta[t * S + s];
      if (ab == kNegInf) continue;
      grad(t, ext[s]) -= std::exp(ab - log_probs(t, ext[s]) - log_total);
    }
  }
  return CtcResult{-log_total, std::move(grad)};
}

Var ctc_loss(Var log_probs, std::span<const std::size_t> labels) {
  CtcResult r = ctc_loss(log_probs.value(), labels);
  Tensor out = Tensor::zeros(1, 1);
  out(0, 0) = r.loss;
  auto gradient = std::make_shared<Tensor>(std::move(r.gradient));
  return log_probs.tape->push(std::move(out), log_probs.requires_grad(),
                              [log_probs, gradient](Tape& t, std::span<const double> g) {
                                auto gl = t.grad(log_probs.id);
                                auto local = gradient->values();
                                for (std::size_t i = 0; i < gl.size(); ++i) gl[i] += g[0] * local[i];
                              });
}

std::vector<std::size_t> ctc_greedy_path(const Tensor& log_probs) {
  std::vector<std::size_t> path(log_probs.rows());
  for (std::size_t t = 0; t < log_probs.rows(); ++t) {
    auto row = log_probs.row(t);
    std::size_t best = 0;
    for (std::size_t k = 1; k < row.size(); ++k) {
      if (row[k] > row[best]) best = k;
    }
    path[t] = best;
  }
  return path;
}

std::vector<std::size_t> collapse(std::span<const std::size_t> frame_labels, std::size_t blank) {
  std::vector<std::size_t> out;
  for (std::size_t t = 0; t < frame_labels.size(); ++t) {
    if (t > 0 && frame_labels[t] == frame_labels[t - 1]) continue;
    if (frame_labels[t] != blank) out.push_back(frame_labels[t]);
  }
  return out;
}

std::string collapse(std::span<const std::size_t> frame_labels, const CharVocab& vocab) {
  return vocab.decode(collapse(frame_labels, vocab.blank()));
}

std::string SegmentMap::to_string() const {
  std::ostringstream out;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    if (i) out << ',';
    out << runs[i].label << ':' << runs[i].start << '-' << runs[i].end;
  }
  return out.str();
}

SegmentMap SegmentMap::parse(const std::string& text) {
  SegmentMap map;
  std::istringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    SegmentRun run;
    char colon = 0, dash = 0;
    std::istringstream fields(item);
    if (!(fields >> run.label >> colon >> run.start >> dash >> run.end) || colon != ':' || dash != '-') {
      throw IoError("malformed segment '" + item + "'");
    }
    map.runs.push_back(run);
  }
  return map;
}

SegmentMap segment(std::span<const std::size_t> frame_labels) {
  SegmentMap map;
  for (std::size_t t = 0; t < frame_labels.size(); ++t) {
    if (map.runs.empty() || map.runs.back().label != frame_labels[t]) {
      map.runs.push_back(SegmentRun{t, t + 1, frame_labels[t]});
    } else {
      map.runs.back().end = t + 1;
    }
  }
  return map;
}

Compressed compress(Var hidden, std::span<const std::size_t> frame_labels, std::size_t blank, bool drop_blank) {
  if (hidden.rows() == 0) throw DomainError("compress needs at least one frame");
  if (frame_labels.size() != hidden.rows()) {
    throw DimensionError("compress: " + std::to_string(frame_labels.size()) + " labels for " +
                         std::to_string(hidden.rows()) + " frames");
  }
  SegmentMap map = segment(frame_labels);
  std::vector<std::pair<std::size_t, std::size_t>> spans;
  for (const auto& run : map.runs) {
    if (drop_blank && run.label == blank) continue;
    spans.emplace_back(run.start, run.end);
  }
  if (spans.empty()) {
    for (const auto& run : map.runs) spans.emplace_back(run.start, run.end);
  }
  return Compressed{segment_mean(hidden, spans), std::move(map)};
}

}  // namespace stlab

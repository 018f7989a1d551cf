#pragma once

#include <span>
#include <string>
#include <vector>

#include "stlab/tape.hpp"
#include "stlab/tensor.hpp"

namespace stlab {

class CharVocab;

struct CtcResult {
  double loss = 0.0;
  Tensor gradient;  // d loss / d log_probs, same shape as the input
};

// Negative log of the total probability of all frame paths that collapse to
// `labels`, via the log-space forward-backward recursion over the extended
// sequence (blank, l1, blank, ..., lU, blank). The blank is the last column.
// Throws InfeasibleAlignmentError when T is smaller than U plus the number of
// adjacent repeated labels, and DomainError for an empty or out-of-range label.
CtcResult ctc_loss(const Tensor& log_probs, std::span<const std::size_t> labels);

// Tape form: a 1x1 loss whose gradient flows into `log_probs`.
Var ctc_loss(Var log_probs, std::span<const std::size_t> labels);

// Minimum number of frames needed to emit `labels`.
std::size_t ctc_min_frames(std::span<const std::size_t> labels);

// Per-frame argmax; ties go to the lowest id.
std::vector<std::size_t> ctc_greedy_path(const Tensor& log_probs);

// Merges adjacent duplicates, then removes blanks.
std::vector<std::size_t> collapse(std::span<const std::size_t> frame_labels, std::size_t blank);
std::string collapse(std::span<const std::size_t> frame_labels, const CharVocab& vocab);

struct SegmentRun {
  std::size_t start = 0;
  std::size_t end = 0;  // exclusive
  std::size_t label = 0;

  std::size_t length() const { return end - start; }
  bool operator==(const SegmentRun&) const = default;
};

// Maximal runs of equal labels; contiguous, covering [0, T), adjacent labels differ.
struct SegmentMap {
  std::vector<SegmentRun> runs;

  std::size_t frames() const { return runs.empty() ? 0 : runs.back().end; }
  // Debug form "label:start-end,..." with numeric label ids.
  std::string to_string() const;
  static SegmentMap parse(const std::string& text);
};

SegmentMap segment(std::span<const std::size_t> frame_labels);

struct Compressed {
  Var states;  // R x H
  SegmentMap map;
};

// Averages the hidden rows of each run. With `drop_blank` set, runs labelled
// `blank` are removed from the output (the map still lists every run) unless
// that would remove all of them. Throws DomainError on T == 0 and
// DimensionError when the label count differs from the row count.
Compressed compress(Var hidden, std::span<const std::size_t> frame_labels, std::size_t blank,
                    bool drop_blank = false);

}  // namespace stlab

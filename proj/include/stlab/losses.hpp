#pragma once

#include <span>
#include <string>
#include <vector>

#include "stlab/tape.hpp"

namespace stlab {

// Mean over unmasked positions of -log softmax(logits[u])[targets[u]].
// An empty mask means every position counts. Throws DomainError when every
// position is masked and DimensionError when lengths disagree.
Var cross_entropy(Var logits, std::span<const std::size_t> targets, std::span<const bool> mask = {});

// Similarity losses are scaled by this factor.
inline constexpr double kSimilarityScale = 100.0;

// 100 * mean_i (a_i - b_i)^2 between two 1 x H pooled representations.
Var similarity_loss(Var audio_pool, Var text_pool);

// Time average of the first valid_len encoder states (1 x H).
// Throws DomainError unless 1 <= valid_len <= rows.
Var pool_encoder_states(Var states, std::size_t valid_len);

// Unit-cost Levenshtein distance.
std::size_t edit_distance(std::span<const std::string> a, std::span<const std::string> b);

// Edit distance divided by the reference length. Throws DomainError on an empty reference.
double wer(std::span<const std::string> ref, std::span<const std::string> hyp);

// Corpus BLEU-4 on a 0-100 scale.
//   p_1 = clipped unigram matches / hypothesis unigrams (no smoothing)
//   p_n = (clipped n-gram matches + 1) / (hypothesis n-grams + 1), n = 2..4
//   BP  = 1 if c > r else exp(1 - r / c), c and r the total hypothesis and
//         reference lengths; BLEU = 0 when c == 0 or there is no unigram match
//   BLEU = 100 * BP * exp(mean_n log p_n)
// Throws DomainError for zero pairs or a count mismatch.
double bleu(const std::vector<std::vector<std::string>>& refs, const std::vector<std::vector<std::string>>& hyps);

}  // namespace stlab

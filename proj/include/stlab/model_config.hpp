#pragma once

#include <cstddef>
#include <string>

namespace stlab {

enum class EncoderKind { kBlstm, kSelfAttention };

std::string to_string(EncoderKind kind);
EncoderKind encoder_kind_from_string(const std::string& name);

// Architecture sizes shared by the recognizer, translator and adapter. The
// hidden width is the single dimension contract between all three.
struct ModelConfig {
  std::size_t hidden = 32;
  std::size_t asr_layers = 2;
  std::size_t mt_encoder_layers = 1;
  EncoderKind mt_encoder = EncoderKind::kBlstm;
  std::size_t adapter_layers = 3;
  bool tie_output = false;
  double init_scale = 0.1;
};

}  // namespace stlab

#include "stlab/model_config.hpp"

#include "stlab/error.hpp"

namespace stlab {

std::string to_string(EncoderKind kind) { return kind == EncoderKind::kBlstm ? "blstm" : "attention"; }

EncoderKind encoder_kind_from_string(const std::string& name) {
  if (name == "blstm") return EncoderKind::kBlstm;
  if (name == "attention") return EncoderKind::kSelfAttention;
  throw ConfigError("unknown MT encoder type '" + name + "' (expected blstm or attention)");
}

}  // namespace stlab

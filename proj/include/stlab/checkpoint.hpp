#pragma once

#include <filesystem>
#include <string>

#include "stlab/bridge.hpp"

namespace stlab {

inline constexpr int kCheckpointVersion = 1;

// Self-describing JSON document: format tag and version, model config,
// pipeline flags, feature width, both vocabularies, and every parameter as
// {name, shape, hex of the IEEE-754 bit patterns}. Keys are emitted in sorted
// order, so equal models give byte-identical text.
std::string checkpoint_to_string(const SpeechTranslationModel& model);
SpeechTranslationModel checkpoint_from_string(const std::string& text);  // throws IoError

void save_checkpoint(const SpeechTranslationModel& model, const std::filesystem::path& path);
SpeechTranslationModel load_checkpoint(const std::filesystem::path& path);

}  // namespace stlab

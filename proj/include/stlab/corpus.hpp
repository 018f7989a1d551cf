#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "stlab/tensor.hpp"
#include "stlab/vocab.hpp"

namespace stlab {

using Range = std::pair<std::size_t, std::size_t>;  // inclusive

struct CorpusConfig {
  std::size_t n_examples = 2200;  // total, the last n_test are held out
  std::size_t n_test = 200;
  std::uint64_t seed = 1;
  std::size_t n_words = 24;  // entries in each lexicon
  Range word_len_range{2, 4};
  Range sentence_len_range{3, 6};
  Range dur_range{1, 3};
  double noise_sigma = 0.1;
  std::string alphabet = "abcdefgh";
  // Word i of the lexicon is drawn with weight (i + 1)^-zipf_exponent; 0 is uniform.
  double zipf_exponent = 0.0;

  // Throws ConfigError describing the first invalid field.
  void validate() const;
};

// One (speech, transcript, translation) triple.
struct SyntheticExample {
  std::string id;
  Tensor features;  // T x (|alphabet| + 1)
  std::string transcript;
  std::string translation;

  bool operator==(const SyntheticExample& other) const;
};

struct Corpus {
  CorpusConfig config;
  std::vector<std::string> source_lexicon;
  std::vector<std::string> target_lexicon;
  std::vector<SyntheticExample> examples;

  std::size_t feature_dim() const { return config.alphabet.size() + 1; }
  // Letters followed by the word separator; feature channel k is character id k.
  CharVocab char_vocab() const { return CharVocab(config.alphabet + " "); }
  TokenVocab token_vocab() const { return TokenVocab(source_lexicon, target_lexicon); }
  std::span<const SyntheticExample> train() const;
  std::span<const SyntheticExample> test() const;

  // Word-by-word lexicon lookup followed by order reversal.
  std::string translate(const std::string& transcript) const;

  bool operator==(const Corpus& other) const;
};

// Draws two disjoint lexicons (lowercase source, uppercase target, no letter
// repeated back to back inside a word), then n_examples sentences. Each
// character of the transcript is rendered as a one-hot row repeated for a
// duration drawn from dur_range, plus Gaussian noise of std noise_sigma.
Corpus generate_corpus(const CorpusConfig& config);

// Draws fresh sentences over the lexicons of `base` using the sampling fields
// of `config` (its alphabet must match). Used for out-of-domain text.
Corpus resample_corpus(const Corpus& base, const CorpusConfig& config);

// 64-bit FNV-1a over the lexicon words, each followed by a newline.
std::uint64_t lexicon_hash(const std::vector<std::string>& words);

inline constexpr int kManifestVersion = 1;

// Line-oriented manifest:
//   stlab-manifest <version>
//   header <json: version, feature_dim, alphabet, lexicons and hashes, generator config, seed>
//   example<TAB>id<TAB>T<TAB>F<TAB>features<TAB>transcript<TAB>translation
//   ...
//   end <count>
// Features are the IEEE-754 bit patterns of the row-major values, 16 lowercase
// hex digits per value, so a round trip is bit-exact.
void save_manifest(const Corpus& corpus, const std::filesystem::path& path);
// Throws IoError naming the line on a corrupt or truncated file, and on a
// version mismatch naming both versions.
Corpus load_manifest(const std::filesystem::path& path);

std::string encode_hex_doubles(std::span<const double> values);
std::vector<double> decode_hex_doubles(const std::string& text);

}  // namespace stlab

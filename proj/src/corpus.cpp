#include "stlab/corpus.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "stlab/error.hpp"
#include "stlab/rng.hpp"

namespace stlab {

using nlohmann::json;

namespace {

void check_range(const Range& r, std::size_t min_lo, const char* name) {
  if (r.first < min_lo || r.second < r.first) {
    throw ConfigError(std::string("invalid ") + name + " [" + std::to_string(r.first) + ", " +
                      std::to_string(r.second) + "]");
  }
}

std::string draw_word(Rng& rng, const std::string& letters, const Range& len_range) {
  const auto len = static_cast<std::size_t>(
      rng.between(static_cast<std::int64_t>(len_range.first), static_cast<std::int64_t>(len_range.second)));
  std::string w;
  while (w.size() < len) {
    const char c = letters[rng.below(letters.size())];
    if (!w.empty() && w.back() == c) continue;
    w.push_back(c);
  }
  return w;
}

std::vector<std::string> draw_lexicon(Rng& rng, const std::string& letters, const CorpusConfig& c) {
  std::set<std::string> seen;
  std::vector<std::string> words;
  std::size_t attempts = 0;
  while (words.size() < c.n_words) {
    if (++attempts > 1000 * c.n_words) {
      throw ConfigError("cannot draw " + std::to_string(c.n_words) + " distinct words from the alphabet");
    }
    std::string w = draw_word(rng, letters, c.word_len_range);
    if (seen.insert(w).second) words.push_back(std::move(w));
  }
  return words;
}

json config_to_json(const CorpusConfig& c) {
  return json{{"n_examples", c.n_examples},
              {"n_test", c.n_test},
              {"seed", c.seed},
              {"n_words", c.n_words},
              {"word_len_range", {c.word_len_range.first, c.word_len_range.second}},
              {"sentence_len_range", {c.sentence_len_range.first, c.sentence_len_range.second}},
              {"dur_range", {c.dur_range.first, c.dur_range.second}},
              {"noise_sigma", encode_hex_doubles(std::span<const double>(&c.noise_sigma, 1))},
              {"alphabet", c.alphabet},
              {"zipf_exponent", encode_hex_doubles(std::span<const double>(&c.zipf_exponent, 1))}};
}

Range range_from_json(const json& j) { return {j.at(0).get<std::size_t>(), j.at(1).get<std::size_t>()}; }

CorpusConfig config_from_json(const json& j) {
  CorpusConfig c;
  c.n_examples = j.at("n_examples").get<std::size_t>();
  c.n_test = j.at("n_test").get<std::size_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.n_words = j.at("n_words").get<std::size_t>();
  c.word_len_range = range_from_json(j.at("word_len_range"));
  c.sentence_len_range = range_from_json(j.at("sentence_len_range"));
  c.dur_range = range_from_json(j.at("dur_range"));
  c.noise_sigma = decode_hex_doubles(j.at("noise_sigma").get<std::string>()).at(0);
  c.alphabet = j.at("alphabet").get<std::string>();
  c.zipf_exponent = decode_hex_doubles(j.at("zipf_exponent").get<std::string>()).at(0);
  return c;
}

std::string hash_string(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void draw_sentences(Corpus& corpus, Rng& rng);

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t tab = line.find('\t', start);
    fields.push_back(line.substr(start, tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return fields;
}

}  // namespace

void CorpusConfig::validate() const {
  if (n_examples == 0) throw ConfigError("n_examples must be positive");
  if (n_test >= n_examples) throw ConfigError("n_test must be smaller than n_examples");
  if (n_words == 0) throw ConfigError("n_words must be positive");
  check_range(word_len_range, 1, "word_len_range");
  check_range(sentence_len_range, 1, "sentence_len_range");
  check_range(dur_range, 1, "dur_range");
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) throw ConfigError("noise_sigma must be finite and >= 0");
  if (!(zipf_exponent >= 0.0) || !std::isfinite(zipf_exponent)) throw ConfigError("zipf_exponent must be finite and >= 0");
  if (alphabet.size() < 2) throw ConfigError("alphabet needs at least two letters");
  std::set<char> letters;
  for (char c : alphabet) {
    if (!std::islower(static_cast<unsigned char>(c))) throw ConfigError("alphabet must be lowercase letters");
    if (!letters.insert(c).second) throw ConfigError("alphabet has a repeated letter");
  }
}

bool SyntheticExample::operator==(const SyntheticExample& other) const {
  return id == other.id && features.bitwise_equal(other.features) && transcript == other.transcript &&
         translation == other.translation;
}

std::span<const SyntheticExample> Corpus::train() const {
  return std::span<const SyntheticExample>(examples).first(examples.size() - config.n_test);
}

std::span<const SyntheticExample> Corpus::test() const {
  return std::span<const SyntheticExample>(examples).last(config.n_test);
}

std::string Corpus::translate(const std::string& transcript) const {
  std::vector<std::string> out;
  for (const auto& w : split_words(transcript)) {
    const auto it = std::find(source_lexicon.begin(), source_lexicon.end(), w);
    if (it == source_lexicon.end()) throw VocabError("word '" + w + "' is not in the source lexicon");
    out.push_back(target_lexicon[static_cast<std::size_t>(it - source_lexicon.begin())]);
  }
  std::reverse(out.begin(), out.end());
  return join_words(out);
}

bool Corpus::operator==(const Corpus& other) const {
  return config_to_json(config) == config_to_json(other.config) && source_lexicon == other.source_lexicon &&
         target_lexicon == other.target_lexicon && examples == other.examples;
}

Corpus generate_corpus(const CorpusConfig& config) {
  config.validate();
  Corpus corpus;
  corpus.config = config;
  Rng rng(config.seed);
  std::string upper = config.alphabet;
  for (char& c : upper) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  corpus.source_lexicon = draw_lexicon(rng, config.alphabet, config);
  corpus.target_lexicon = draw_lexicon(rng, upper, config);
  for (const auto& w : corpus.source_lexicon) {
    if (std::find(corpus.target_lexicon.begin(), corpus.target_lexicon.end(), w) != corpus.target_lexicon.end()) {
      throw ConfigError("lexicons overlap on '" + w + "'");
    }
  }

  draw_sentences(corpus, rng);
  return corpus;
}

Corpus resample_corpus(const Corpus& base, const CorpusConfig& config) {
  config.validate();
  if (config.alphabet != base.config.alphabet) throw ConfigError("resampling needs the base alphabet");
  if (config.n_words != base.source_lexicon.size()) throw ConfigError("resampling needs the base lexicon size");
  Corpus corpus;
  corpus.config = config;
  corpus.source_lexicon = base.source_lexicon;
  corpus.target_lexicon = base.target_lexicon;
  Rng rng(config.seed);
  draw_sentences(corpus, rng);
  return corpus;
}

namespace {

void draw_sentences(Corpus& corpus, Rng& rng) {
  const CorpusConfig& config = corpus.config;
  const CharVocab chars = corpus.char_vocab();
  const std::size_t F = corpus.feature_dim();
  std::vector<double> cumulative;
  double total = 0.0;
  for (std::size_t i = 0; i < config.n_words; ++i) {
    total += std::pow(static_cast<double>(i + 1), -config.zipf_exponent);
    cumulative.push_back(total);
  }
  auto draw_word = [&]() -> const std::string& {
    if (config.zipf_exponent == 0.0) return corpus.source_lexicon[rng.below(config.n_words)];
    const double u = rng.uniform() * total;
    const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
    return corpus.source_lexicon[std::min<std::size_t>(it - cumulative.begin(), config.n_words - 1)];
  };
  for (std::size_t n = 0; n < config.n_examples; ++n) {
    const auto len = static_cast<std::size_t>(rng.between(static_cast<std::int64_t>(config.sentence_len_range.first),
                                                          static_cast<std::int64_t>(config.sentence_len_range.second)));
    std::vector<std::string> words;
    for (std::size_t i = 0; i < len; ++i) words.push_back(draw_word());
    SyntheticExample ex;
    char id[32];
    std::snprintf(id, sizeof id, "utt%05zu", n);
    ex.id = id;
    ex.transcript = join_words(words);
    ex.translation = corpus.translate(ex.transcript);

    std::vector<std::size_t> frames;
    for (char c : ex.transcript) {
      const auto dur = static_cast<std::size_t>(
          rng.between(static_cast<std::int64_t>(config.dur_range.first), static_cast<std::int64_t>(config.dur_range.second)));
      frames.insert(frames.end(), dur, chars.id(c));
    }
    Tensor features = Tensor::zeros(frames.size(), F);
    for (std::size_t t = 0; t < frames.size(); ++t) {
      for (std::size_t k = 0; k < F; ++k) {
        const double noise = config.noise_sigma > 0.0 ? config.noise_sigma * rng.normal() : 0.0;
        features(t, k) = (k == frames[t] ? 1.0 : 0.0) + noise;
      }
    }
    ex.features = std::move(features);
    corpus.examples.push_back(std::move(ex));
  }
}

}  // namespace

std::uint64_t lexicon_hash(const std::vector<std::string>& words) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&h](unsigned char c) {
    h ^= c;
    h *= 0x100000001b3ULL;
  };
  for (const auto& w : words) {
    for (char c : w) mix(static_cast<unsigned char>(c));
    mix('\n');
  }
  return h;
}

std::string encode_hex_doubles(std::span<const double> values) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out(values.size() * 16, '0');
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::uint64_t bits = std::bit_cast<std::uint64_t>(values[i]);
    for (int d = 15; d >= 0; --d) {
      out[i * 16 + static_cast<std::size_t>(d)] = kDigits[bits & 0xf];
      bits >>= 4;
    }
  }
  return out;
}

std::vector<double> decode_hex_doubles(const std::string& text) {
  if (text.size() % 16 != 0) throw IoError("hex payload length " + std::to_string(text.size()) + " is not a multiple of 16");
  std::vector<double> values(text.size() / 16);
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::uint64_t bits = 0;
    for (std::size_t d = 0; d < 16; ++d) {
      const char c = text[i * 16 + d];
      int v = -1;
      if (c >= '0' && c <= '9') v = c - '0';
      if (c >= 'a' && c <= 'f') v = c - 'a' + 10;
      if (v < 0) throw IoError(std::string("invalid hex digit '") + c + "'");
      bits = (bits << 4) | static_cast<std::uint64_t>(v);
    }
    values[i] = std::bit_cast<double>(bits);
  }
  return values;
}

void save_manifest(const Corpus& corpus, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  json header{{"version", kManifestVersion},
              {"feature_dim", corpus.feature_dim()},
              {"alphabet", corpus.config.alphabet},
              {"source_lexicon", corpus.source_lexicon},
              {"target_lexicon", corpus.target_lexicon},
              {"source_vocab_hash", hash_string(lexicon_hash(corpus.source_lexicon))},
              {"target_vocab_hash", hash_string(lexicon_hash(corpus.target_lexicon))},
              {"generator", config_to_json(corpus.config)},
              {"seed", corpus.config.seed}};
  out << "stlab-manifest " << kManifestVersion << '\n';
  out << "header " << header.dump() << '\n';
  for (const auto& ex : corpus.examples) {
    out << "example\t" << ex.id << '\t' << ex.features.rows() << '\t' << ex.features.cols() << '\t'
        << encode_hex_doubles(ex.features.values()) << '\t' << ex.transcript << '\t' << ex.translation << '\n';
  }
  out << "end " << corpus.examples.size() << '\n';
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

Corpus load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open manifest '" + path.string() + "'");
  const std::string where = path.string() + ":";
  std::string line;
  std::size_t line_no = 0;
  auto next = [&]() -> bool {
    if (!std::getline(in, line)) return false;
    ++line_no;
    return true;
  };
  auto fail = [&](const std::string& what) -> IoError {
    return IoError(where + std::to_string(line_no) + ": " + what);
  };

  if (!next() || line.rfind("stlab-manifest ", 0) != 0) throw fail("missing manifest signature");
  const std::string version = line.substr(15);
  if (version != std::to_string(kManifestVersion)) {
    throw fail("manifest version " + version + " does not match supported version " + std::to_string(kManifestVersion));
  }
  if (!next() || line.rfind("header ", 0) != 0) throw fail("missing header line");
  Corpus corpus;
  try {
    const json header = json::parse(line.substr(7));
    if (header.at("version").get<int>() != kManifestVersion) {
      throw fail("header version " + std::to_string(header.at("version").get<int>()) +
                 " does not match supported version " + std::to_string(kManifestVersion));
    }
    corpus.config = config_from_json(header.at("generator"));
    corpus.source_lexicon = header.at("source_lexicon").get<std::vector<std::string>>();
    corpus.target_lexicon = header.at("target_lexicon").get<std::vector<std::string>>();
    if (header.at("source_vocab_hash").get<std::string>() != hash_string(lexicon_hash(corpus.source_lexicon)) ||
        header.at("target_vocab_hash").get<std::string>() != hash_string(lexicon_hash(corpus.target_lexicon))) {
      throw fail("lexicon hash mismatch");
    }
    if (header.at("feature_dim").get<std::size_t>() != corpus.feature_dim()) throw fail("feature_dim mismatch");
  } catch (const json::exception& e) {
    throw fail(std::string("malformed header: ") + e.what());
  }

  bool ended = false;
  while (next()) {
    if (line.rfind("end ", 0) == 0) {
      std::size_t count = 0;
      try {
        count = std::stoul(line.substr(4));
      } catch (const std::exception&) {
        throw fail("malformed end marker");
      }
      if (count != corpus.examples.size()) {
        throw fail("end marker announces " + std::to_string(count) + " examples but " +
                   std::to_string(corpus.examples.size()) + " were read");
      }
      ended = true;
      break;
    }
    const auto fields = split_tabs(line);
    if (fields.size() != 7 || fields[0] != "example") throw fail("malformed example record");
    SyntheticExample ex;
    ex.id = fields[1];
    std::size_t rows = 0, cols = 0;
    try {
      rows = std::stoul(fields[2]);
      cols = std::stoul(fields[3]);
    } catch (const std::exception&) {
      throw fail("malformed feature shape");
    }
    if (cols != corpus.feature_dim()) throw fail("feature width " + std::to_string(cols) + " does not match header");
    std::vector<double> values;
    try {
      values = decode_hex_doubles(fields[4]);
    } catch (const IoError& e) {
      throw fail(e.what());
    }
    if (values.size() != rows * cols) throw fail("feature payload holds " + std::to_string(values.size()) + " values");
    try {
      ex.features = Tensor({rows, cols}, std::move(values));
    } catch (const Error& e) {
      throw fail(e.what());
    }
    ex.transcript = fields[5];
    ex.translation = fields[6];
    corpus.examples.push_back(std::move(ex));
  }
  if (!ended) throw fail("truncated manifest: no end marker");
  if (next()) throw fail("trailing data after end marker");
  if (corpus.examples.size() <= corpus.config.n_test) throw fail("fewer examples than the held-out count");
  return corpus;
}

}  // namespace stlab

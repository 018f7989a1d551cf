#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <gtest/gtest.h>
#include <unistd.h>

#include "stlab/corpus.hpp"
#include "stlab/error.hpp"

namespace stlab {
namespace {

namespace fs = std::filesystem;

CorpusConfig small_config() {
  CorpusConfig c;
  c.n_examples = 40;
  c.n_test = 8;
  c.seed = 11;
  c.n_words = 10;
  return c;
}

fs::path temp_path(const std::string& name) {
  return fs::temp_directory_path() / ("stlab_" + std::to_string(::getpid()) + "_" + name);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

TEST(Corpus, NoiselessUnitDurationIsExactOneHot) {
  CorpusConfig c = small_config();
  c.noise_sigma = 0.0;
  c.dur_range = {1, 1};
  const Corpus corpus = generate_corpus(c);
  const CharVocab chars = corpus.char_vocab();
  for (const auto& ex : corpus.examples) {
    ASSERT_EQ(ex.features.rows(), ex.transcript.size());
    ASSERT_EQ(ex.features.cols(), corpus.feature_dim());
    std::string recovered;
    for (std::size_t t = 0; t < ex.features.rows(); ++t) {
      std::size_t ones = 0, hot = 0;
      for (std::size_t k = 0; k < ex.features.cols(); ++k) {
        const double v = ex.features(t, k);
        ASSERT_TRUE(v == 0.0 || v == 1.0);
        if (v == 1.0) {
          ++ones;
          hot = k;
        }
      }
      ASSERT_EQ(ones, 1u);
      recovered.push_back(chars.symbol(hot));
    }
    EXPECT_EQ(recovered, ex.transcript);
  }
}

TEST(Corpus, SameSeedIsBitwiseIdentical) {
  const Corpus a = generate_corpus(small_config());
  const Corpus b = generate_corpus(small_config());
  EXPECT_TRUE(a == b);
  CorpusConfig other = small_config();
  other.seed = 12;
  EXPECT_FALSE(a == generate_corpus(other));
}

TEST(Corpus, MappingTableOracle) {
  Corpus corpus;
  corpus.source_lexicon = {"ab", "cd"};
  corpus.target_lexicon = {"AB", "CD"};
  EXPECT_EQ(corpus.translate("ab cd"), "CD AB");
  EXPECT_EQ(corpus.translate("cd cd ab"), "AB CD CD");
  EXPECT_THROW(corpus.translate("ab zz"), VocabError);
}

TEST(Corpus, Invariants) {
  const Corpus corpus = generate_corpus(small_config());
  const std::set<std::string> src(corpus.source_lexicon.begin(), corpus.source_lexicon.end());
  EXPECT_EQ(src.size(), corpus.source_lexicon.size());
  for (const auto& w : corpus.target_lexicon) EXPECT_EQ(src.count(w), 0u);
  for (const auto& w : corpus.source_lexicon) {
    for (std::size_t i = 1; i < w.size(); ++i) EXPECT_NE(w[i], w[i - 1]) << w;
  }
  for (const auto& ex : corpus.examples) {
    EXPECT_GE(ex.features.rows(), ex.transcript.size());
    EXPECT_LE(ex.features.rows(), 3 * ex.transcript.size());
    EXPECT_EQ(ex.translation, corpus.translate(ex.transcript));
    const auto n = split_words(ex.transcript).size();
    EXPECT_GE(n, 3u);
    EXPECT_LE(n, 6u);
  }
  EXPECT_EQ(corpus.train().size(), 32u);
  EXPECT_EQ(corpus.test().size(), 8u);
  EXPECT_EQ(corpus.test().front().id, corpus.examples[32].id);
}

TEST(Corpus, InvalidConfigs) {
  auto bad = [](auto mutate) {
    CorpusConfig c = small_config();
    mutate(c);
    return c;
  };
  EXPECT_THROW(generate_corpus(bad([](CorpusConfig& c) { c.word_len_range = {3, 2}; })), ConfigError);
  EXPECT_THROW(generate_corpus(bad([](CorpusConfig& c) { c.dur_range = {0, 2}; })), ConfigError);
  EXPECT_THROW(generate_corpus(bad([](CorpusConfig& c) { c.noise_sigma = -0.1; })), ConfigError);
  EXPECT_THROW(generate_corpus(bad([](CorpusConfig& c) { c.n_test = 40; })), ConfigError);
  EXPECT_THROW(generate_corpus(bad([](CorpusConfig& c) { c.alphabet = "aab"; })), ConfigError);
  EXPECT_THROW(generate_corpus(bad([](CorpusConfig& c) {
                 c.alphabet = "ab";
                 c.word_len_range = {2, 2};
               })),
               ConfigError);
}

TEST(Manifest, RoundTripIsBitExact) {
  const Corpus corpus = generate_corpus(small_config());
  const fs::path p = temp_path("roundtrip.manifest");
  save_manifest(corpus, p);
  const Corpus back = load_manifest(p);
  EXPECT_TRUE(back == corpus);
  const fs::path q = temp_path("roundtrip2.manifest");
  save_manifest(back, q);
  EXPECT_EQ(slurp(p), slurp(q));
  fs::remove(p);
  fs::remove(q);
}

TEST(Manifest, HexEncoding) {
  const double v[] = {1.0, -0.0, 0.1};
  const std::string hex = encode_hex_doubles(v);
  EXPECT_EQ(hex, "3ff00000000000008000000000000000" "3fb999999999999a");
  const auto back = decode_hex_doubles(hex);
  ASSERT_EQ(back.size(), 3u);
  EXPECT_TRUE(std::signbit(back[1]));
  EXPECT_EQ(back[2], 0.1);
  EXPECT_THROW(decode_hex_doubles("123"), IoError);
  EXPECT_THROW(decode_hex_doubles("zzzzzzzzzzzzzzzz"), IoError);
}

TEST(Manifest, TruncatedFileIsRejected) {
  const Corpus corpus = generate_corpus(small_config());
  const fs::path p = temp_path("trunc.manifest");
  save_manifest(corpus, p);
  std::string text = slurp(p);
  {
    // Drop the end marker and the last record.
    std::string cut = text.substr(0, text.rfind('\n', text.size() - 2));
    cut = cut.substr(0, cut.rfind('\n') + 1);
    std::ofstream(p, std::ios::binary) << cut;
  }
  try {
    load_manifest(p);
    FAIL() << "expected IoError";
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("truncated"), std::string::npos) << e.what();
  }
  {
    // Cut in the middle of a record.
    std::ofstream(p, std::ios::binary) << text.substr(0, text.size() / 2);
  }
  EXPECT_THROW(load_manifest(p), IoError);
  fs::remove(p);
}

TEST(Manifest, VersionMismatchNamesBothVersions) {
  const Corpus corpus = generate_corpus(small_config());
  const fs::path p = temp_path("version.manifest");
  save_manifest(corpus, p);
  std::string text = slurp(p);
  text.replace(0, text.find('\n'), "stlab-manifest 7");
  std::ofstream(p, std::ios::binary) << text;
  try {
    load_manifest(p);
    FAIL() << "expected IoError";
  } catch (const IoError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("7"), std::string::npos) << msg;
    EXPECT_NE(msg.find("1"), std::string::npos) << msg;
    EXPECT_NE(msg.find(":1:"), std::string::npos) << msg;
  }
  fs::remove(p);
}

TEST(Manifest, CorruptRecordReportsLine) {
  const Corpus corpus = generate_corpus(small_config());
  const fs::path p = temp_path("corrupt.manifest");
  save_manifest(corpus, p);
  std::string text = slurp(p);
  // Third record starts on line 5.
  std::size_t pos = 0;
  for (int i = 0; i < 4; ++i) pos = text.find('\n', pos) + 1;
  const std::size_t tab = text.find('\t', text.find('\t', pos) + 1);
  text[tab + 1] = 'x';
  std::ofstream(p, std::ios::binary) << text;
  try {
    load_manifest(p);
    FAIL() << "expected IoError";
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find(":5:"), std::string::npos) << e.what();
  }
  fs::remove(p);
}

}  // namespace
}  // namespace stlab

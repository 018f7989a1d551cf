#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace stlab {

// Character inventory of the recognizer. Ids are dense from 0 in alphabet
// order; the CTC blank takes the id one past the last character.
class CharVocab {
 public:
  CharVocab() = default;
  explicit CharVocab(std::string alphabet);

  std::size_t size() const { return alphabet_.size(); }
  std::size_t blank() const { return alphabet_.size(); }
  std::size_t id(char c) const;
  char symbol(std::size_t id) const;
  bool contains(char c) const;
  const std::string& alphabet() const { return alphabet_; }

  std::vector<std::size_t> encode(std::string_view text) const;
  // Blank ids are skipped.
  std::string decode(const std::vector<std::size_t>& ids) const;

 private:
  std::string alphabet_;
  std::vector<int> index_ = std::vector<int>(256, -1);
};

enum class TokenKind { kSpecial, kTag, kSource, kTarget };

// Shared source/target word inventory of the translator.
//   0 <pad>, 1 <bos>, 2 <eos>, 3 <unk>, 4 <src>, 5 <tgt>,
//   then source words, then target words.
class TokenVocab {
 public:
  static constexpr std::size_t kPad = 0;
  static constexpr std::size_t kBos = 1;
  static constexpr std::size_t kEos = 2;
  static constexpr std::size_t kUnk = 3;
  static constexpr std::size_t kSourceTag = 4;
  static constexpr std::size_t kTargetTag = 5;
  static constexpr std::size_t kReserved = 6;

  TokenVocab() = default;
  TokenVocab(const std::vector<std::string>& source_words, const std::vector<std::string>& target_words);

  std::size_t size() const { return symbols_.size(); }
  std::size_t id(std::string_view symbol) const;  // throws VocabError
  std::size_t id_or_unk(std::string_view symbol) const;
  std::optional<std::size_t> find(std::string_view symbol) const;
  const std::string& symbol(std::size_t id) const;  // throws VocabError
  TokenKind kind(std::size_t id) const;
  bool is_tag(std::size_t id) const { return id == kSourceTag || id == kTargetTag; }
  void check(std::size_t id) const;  // throws VocabError when out of range

  std::size_t source_count() const { return source_count_; }
  std::size_t target_count() const { return target_count_; }
  const std::vector<std::string>& symbols() const { return symbols_; }

  std::vector<std::size_t> encode_words(const std::vector<std::string>& words) const;
  std::vector<std::string> decode_words(const std::vector<std::size_t>& ids) const;

 private:
  std::vector<std::string> symbols_;
  std::unordered_map<std::string, std::size_t> index_;
  std::size_t source_count_ = 0;
  std::size_t target_count_ = 0;
};

// Whitespace tokenization; empty fields are dropped.
std::vector<std::string> split_words(std::string_view text);
std::string join_words(const std::vector<std::string>& words);

}  // namespace stlab

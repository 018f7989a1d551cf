#include "stlab/vocab.hpp"

#include "stlab/error.hpp"

namespace stlab {

CharVocab::CharVocab(std::string alphabet) : alphabet_(std::move(alphabet)) {
  for (std::size_t i = 0; i < alphabet_.size(); ++i) {
    auto& slot = index_[static_cast<unsigned char>(alphabet_[i])];
    if (slot != -1) throw VocabError(std::string("duplicate character '") + alphabet_[i] + "' in alphabet");
    slot = static_cast<int>(i);
  }
}

std::size_t CharVocab::id(char c) const {
  const int i = index_[static_cast<unsigned char>(c)];
  if (i < 0) throw VocabError(std::string("character '") + c + "' not in alphabet");
  return static_cast<std::size_t>(i);
}

char CharVocab::symbol(std::size_t id) const {
  if (id >= alphabet_.size()) throw VocabError("character id " + std::to_string(id) + " out of range");
  return alphabet_[id];
}

bool CharVocab::contains(char c) const { return index_[static_cast<unsigned char>(c)] >= 0; }

std::vector<std::size_t> CharVocab::encode(std::string_view text) const {
  std::vector<std::size_t> ids;
  ids.reserve(text.size());
  for (char c : text) ids.push_back(id(c));
  return ids;
}

std::string CharVocab::decode(const std::vector<std::size_t>& ids) const {
  std::string out;
  for (std::size_t i : ids) {
    if (i != blank()) out.push_back(symbol(i));
  }
  return out;
}

TokenVocab::TokenVocab(const std::vector<std::string>& source_words,
                       const std::vector<std::string>& target_words)
    : symbols_{"<pad>", "<bos>", "<eos>", "<unk>", "<src>", "<tgt>"},
      source_count_(source_words.size()),
      target_count_(target_words.size()) {
  symbols_.insert(symbols_.end(), source_words.begin(), source_words.end());
  symbols_.insert(symbols_.end(), target_words.begin(), target_words.end());
  for (std::size_t i = 0; i < symbols_.size(); ++i) {
    if (!index_.emplace(symbols_[i], i).second) {
      throw VocabError("token '" + symbols_[i] + "' appears twice in the vocabulary");
    }
  }
}

std::optional<std::size_t> TokenVocab::find(std::string_view symbol) const {
  auto it = index_.find(std::string(symbol));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t TokenVocab::id(std::string_view symbol) const {
  if (auto i = find(symbol)) return *i;
  throw VocabError("unknown token '" + std::string(symbol) + "'");
}

std::size_t TokenVocab::id_or_unk(std::string_view symbol) const { return find(symbol).value_or(kUnk); }

const std::string& TokenVocab::symbol(std::size_t id) const {
  check(id);
  return symbols_[id];
}

void TokenVocab::check(std::size_t id) const {
  if (id >= symbols_.size()) {
    throw VocabError("token id " + std::to_string(id) + " outside vocabulary of " +
                     std::to_string(symbols_.size()));
  }
}

TokenKind TokenVocab::kind(std::size_t id) const {
  check(id);
  if (id < kSourceTag) return TokenKind::kSpecial;
  if (id < kReserved) return TokenKind::kTag;
  if (id < kReserved + source_count_) return TokenKind::kSource;
  return TokenKind::kTarget;
}

std::vector<std::size_t> TokenVocab::encode_words(const std::vector<std::string>& words) const {
  std::vector<std::size_t> ids;
  ids.reserve(words.size());
  for (const auto& w : words) ids.push_back(id(w));
  return ids;
}

std::vector<std::string> TokenVocab::decode_words(const std::vector<std::size_t>& ids) const {
  std::vector<std::string> words;
  words.reserve(ids.size());
  for (std::size_t i : ids) words.push_back(symbol(i));
  return words;
}

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> words;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && text[i] == ' ') ++i;
    std::size_t j = i;
    while (j < text.size() && text[j] != ' ') ++j;
    if (j > i) words.emplace_back(text.substr(i, j - i));
    i = j;
  }
  return words;
}

std::string join_words(const std::vector<std::string>& words) {
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) out.push_back(' ');
    out += words[i];
  }
  return out;
}

}  // namespace stlab

// SPDX-License-Identifier: Apache-2.0
#include "sde/tokenizer.hpp"

#include <fstream>
#include <stdexcept>

namespace sde {

namespace {

bool is_ws(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
}

// Whitespace runs cannot be expressed in a one-word-per-line file, so the
// common ones are added to every word-augmented vocabulary up front.
const std::vector<std::string>& builtin_whitespace() {
  static const std::vector<std::string> kRuns = {" ", "\n", "\n\n", "  ", "\t"};
  return kRuns;
}

}  // namespace

Tokenizer::Tokenizer(const std::vector<std::string>& words) {
  words_.reserve(words.size());
  for (const std::string& w : words) {
    if (w.empty()) {
      throw std::invalid_argument("tokenizer: empty word table entry");
    }
    const TokenId id = static_cast<TokenId>(kByteVocab + words_.size());
    if (!word_ids_.emplace(w, id).second) {
      throw std::invalid_argument("tokenizer: duplicate word table entry: " + w);
    }
    words_.push_back(w);
  }
}

Tokenizer Tokenizer::from_word_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("tokenizer: cannot open word file: " + path);
  }
  std::vector<std::string> words = builtin_whitespace();
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') {
      line.pop_back();
    }
    if (!line.empty()) {
      words.push_back(line);
    }
  }
  return Tokenizer(words);
}

std::vector<TokenId> Tokenizer::tokenize(std::string_view text) const {
  std::vector<TokenId> out;
  out.reserve(text.size() / 4 + 1);
  std::size_t i = 0;
  while (i < text.size()) {
    std::size_t j = i + 1;
    const bool ws = is_ws(text[i]);
    while (j < text.size() && is_ws(text[j]) == ws) {
      ++j;
    }
    const std::string_view run = text.substr(i, j - i);
    bool emitted = false;
    if (!words_.empty()) {
      auto it = word_ids_.find(std::string(run));
      if (it != word_ids_.end()) {
        out.push_back(it->second);
        emitted = true;
      }
    }
    if (!emitted) {
      for (char c : run) {
        out.push_back(static_cast<TokenId>(static_cast<unsigned char>(c)));
      }
    }
    i = j;
  }
  return out;
}

std::string Tokenizer::detokenize(std::span<const TokenId> ids) const {
  std::string out;
  for (TokenId id : ids) {
    out += token_text(id);
  }
  return out;
}

std::string Tokenizer::token_text(TokenId id) const {
  if (id < kByteVocab) {
    return std::string(1, static_cast<char>(static_cast<unsigned char>(id)));
  }
  const std::size_t idx = id - kByteVocab;
  if (idx >= words_.size()) {
    throw std::out_of_range("tokenizer: token id out of range: " + std::to_string(id));
  }
  return words_[idx];
}

}  // namespace sde

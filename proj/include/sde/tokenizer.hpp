// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace sde {

using TokenId = std::uint32_t;

// Toy reversible tokenizer.
//
// Ids 0..255 are the raw byte values; ids 256+ are entries of an optional
// word table.  Text is segmented into maximal runs of whitespace and
// non-whitespace characters; each run is emitted as a single word token when
// the table contains it and as individual bytes otherwise.  Detokenization
// concatenates the stored strings, so encode/decode is an exact roundtrip
// for arbitrary byte strings.
//
// With an empty word table the tokenizer is pure byte-level; only in that
// mode does tokenize(a + b) == tokenize(a) + tokenize(b) hold in general.
class Tokenizer {
 public:
  static constexpr std::size_t kByteVocab = 256;

  // Byte-level tokenizer (empty word table).
  Tokenizer() = default;

  // Word-augmented tokenizer.  Duplicate or empty entries are rejected.
  explicit Tokenizer(const std::vector<std::string>& words);

  // Loads one word per line (line order defines token ids).  Common
  // whitespace runs are always prepended so prompts stay compact.
  static Tokenizer from_word_file(const std::string& path);

  std::vector<TokenId> tokenize(std::string_view text) const;
  std::string detokenize(std::span<const TokenId> ids) const;

  // The exact string a single token renders to.  Throws std::out_of_range
  // for ids outside the vocabulary.
  std::string token_text(TokenId id) const;

  std::size_t vocab_size() const { return kByteVocab + words_.size(); }
  bool byte_level() const { return words_.empty(); }

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, TokenId> word_ids_;
};

}  // namespace sde

// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace sde {

struct Document {
  std::string id;
  std::string title;
  std::string text;

  // Text up to the first blank line (the whole text when there is none).
  std::string first_paragraph() const;
};

// Loads a corpus from a JSONL file: one object per line with string fields
// "id", "title", "text".  Duplicate ids, missing fields, and unparseable
// lines are reported with their line number.
std::vector<Document> load_corpus(const std::string& path);

// Splits text into sentences on ". ", "! ", "? " (and the corresponding
// end-of-text punctuation), keeping the delimiter with the sentence.  A
// short list of common abbreviations ("Dr.", "e.g.", ...) does not end a
// sentence.  Deterministic; no locale involvement.
std::vector<std::string> split_sentences(std::string_view text);

}  // namespace sde

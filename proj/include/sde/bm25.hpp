// SPDX-License-Identifier: Apache-2.0
//
// BM25 (Okapi) retrieval over a document corpus, built deterministically:
// no hash-order iteration feeds scores, and ties rank by document id.
#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "sde/corpus.hpp"

namespace sde {

struct Bm25Params {
  double k1 = 1.2;
  double b = 0.75;
};

struct ScoredDoc {
  int doc = 0;  // index into the index's corpus
  double score = 0.0;
};

// Lowercased alphanumeric word runs; everything else separates terms.
std::vector<std::string> split_terms(std::string_view text);

class RetrievalIndex {
 public:
  // Indexes title + text of every document.  The corpus is owned by the
  // index; document order defines doc indices (and tie-break order).
  static RetrievalIndex build(std::vector<Document> corpus, Bm25Params params = {});

  // Top-k by BM25 score (ties by ascending doc index).  Query terms are a
  // sequence: a term occurring twice contributes twice.  Only documents
  // matching at least one term appear.
  std::vector<ScoredDoc> retrieve(std::string_view query, int k = 6) const;

  // Case-insensitive exact title lookup.
  std::optional<int> find_title(std::string_view title) const;

  const Document& doc(int i) const { return corpus_.at(static_cast<std::size_t>(i)); }
  int size() const { return static_cast<int>(corpus_.size()); }
  const Bm25Params& params() const { return params_; }

 private:
  std::vector<Document> corpus_;
  Bm25Params params_;
  // term -> (doc index, term frequency), ascending doc index.
  std::unordered_map<std::string, std::vector<std::pair<int, int>>> postings_;
  std::vector<int> doc_lengths_;
  double avg_doc_length_ = 0.0;
  std::unordered_map<std::string, int> title_to_doc_;
};

// Deals ranked documents into two private shards: ranks 1, 3, 5, ... to
// shard A and ranks 2, 4, 6, ... to shard B.
std::pair<std::vector<Document>, std::vector<Document>> shard_docs(
    const RetrievalIndex& index, const std::vector<ScoredDoc>& ranked);

}  // namespace sde

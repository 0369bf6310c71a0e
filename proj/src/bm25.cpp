// SPDX-License-Identifier: Apache-2.0
#include "sde/bm25.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>

namespace sde {

std::vector<std::string> split_terms(std::string_view text) {
  std::vector<std::string> terms;
  std::string current;
  for (char c : text) {
    const unsigned char u = static_cast<unsigned char>(c);
    if (std::isalnum(u)) {
      current += static_cast<char>(std::tolower(u));
    } else if (!current.empty()) {
      terms.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) {
    terms.push_back(std::move(current));
  }
  return terms;
}

RetrievalIndex RetrievalIndex::build(std::vector<Document> corpus, Bm25Params params) {
  RetrievalIndex index;
  index.corpus_ = std::move(corpus);
  index.params_ = params;

  long long total_len = 0;
  for (int d = 0; d < static_cast<int>(index.corpus_.size()); ++d) {
    const Document& doc = index.corpus_[static_cast<std::size_t>(d)];
    const std::vector<std::string> terms = split_terms(doc.title + " " + doc.text);
    index.doc_lengths_.push_back(static_cast<int>(terms.size()));
    total_len += static_cast<long long>(terms.size());

    std::map<std::string, int> tf;  // ordered so postings build deterministically
    for (const std::string& t : terms) {
      ++tf[t];
    }
    for (const auto& [term, count] : tf) {
      index.postings_[term].emplace_back(d, count);
    }

    std::string title_key;
    for (char c : doc.title) {
      title_key += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
    index.title_to_doc_.emplace(title_key, d);  // first title wins
  }
  index.avg_doc_length_ = index.corpus_.empty()
                              ? 0.0
                              : static_cast<double>(total_len) /
                                    static_cast<double>(index.corpus_.size());
  return index;
}

std::vector<ScoredDoc> RetrievalIndex::retrieve(std::string_view query, int k) const {
  const std::vector<std::string> terms = split_terms(query);
  const double n_docs = static_cast<double>(corpus_.size());
  std::map<int, double> scores;  // doc index -> accumulated score

  for (const std::string& term : terms) {
    const auto it = postings_.find(term);
    if (it == postings_.end()) {
      continue;
    }
    const auto& posting = it->second;
    const double df = static_cast<double>(posting.size());
    const double idf = std::log(1.0 + (n_docs - df + 0.5) / (df + 0.5));
    for (const auto& [doc, tf] : posting) {
      const double dl = static_cast<double>(doc_lengths_[static_cast<std::size_t>(doc)]);
      const double denom =
          static_cast<double>(tf) +
          params_.k1 * (1.0 - params_.b + params_.b * dl / avg_doc_length_);
      scores[doc] += idf * (static_cast<double>(tf) * (params_.k1 + 1.0)) / denom;
    }
  }

  std::vector<ScoredDoc> ranked;
  ranked.reserve(scores.size());
  for (const auto& [doc, score] : scores) {
    ranked.push_back(ScoredDoc{doc, score});
  }
  std::sort(ranked.begin(), ranked.end(), [](const ScoredDoc& a, const ScoredDoc& b) {
    if (a.score != b.score) {
      return a.score > b.score;
    }
    return a.doc < b.doc;
  });
  if (k >= 0 && ranked.size() > static_cast<std::size_t>(k)) {
    ranked.resize(static_cast<std::size_t>(k));
  }
  return ranked;
}

std::optional<int> RetrievalIndex::find_title(std::string_view title) const {
  std::string key;
  for (char c : title) {
    key += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  const auto it = title_to_doc_.find(key);
  if (it == title_to_doc_.end()) {
    return std::nullopt;
  }
  return it->second;
}

std::pair<std::vector<Document>, std::vector<Document>> shard_docs(
    const RetrievalIndex& index, const std::vector<ScoredDoc>& ranked) {
  std::pair<std::vector<Document>, std::vector<Document>> shards;
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    const Document& doc = index.doc(ranked[i].doc);
    if (i % 2 == 0) {
      shards.first.push_back(doc);
    } else {
      shards.second.push_back(doc);
    }
  }
  return shards;
}

}  // namespace sde

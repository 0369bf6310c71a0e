// SPDX-License-Identifier: Apache-2.0
#include "sde/corpus.hpp"

#include <fstream>
#include <set>
#include <stdexcept>

#include <json.hpp>

namespace sde {

namespace {

// A period after one of these does not end a sentence.
const std::set<std::string>& abbreviations() {
  static const std::set<std::string> kAbbrev = {
      "Mr.", "Mrs.", "Ms.", "Dr.", "Prof.", "St.",  "Jr.",  "Sr.",
      "vs.", "etc.", "e.g.", "i.e.", "No.",  "Fig.", "Vol.", "approx.",
  };
  return kAbbrev;
}

bool ends_with_abbreviation(std::string_view text, std::size_t dot) {
  // `dot` indexes a '.'; find the token that ends there.
  std::size_t start = dot;
  while (start > 0 && text[start - 1] != ' ' && text[start - 1] != '\n' &&
         text[start - 1] != '\t') {
    --start;
  }
  const std::string token(text.substr(start, dot - start + 1));
  return abbreviations().count(token) > 0;
}

}  // namespace

std::string Document::first_paragraph() const {
  const std::size_t blank = text.find("\n\n");
  return blank == std::string::npos ? text : text.substr(0, blank);
}

std::vector<Document> load_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("corpus: cannot open " + path);
  }
  std::vector<Document> docs;
  std::set<std::string> seen;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) {
      continue;
    }
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error("corpus: " + path + ":" + std::to_string(line_no) +
                               ": unparseable JSON: " + e.what());
    }
    if (!j.contains("id") || !j.contains("title") || !j.contains("text") ||
        !j["id"].is_string() || !j["title"].is_string() || !j["text"].is_string()) {
      throw std::runtime_error("corpus: " + path + ":" + std::to_string(line_no) +
                               ": expected string fields id, title, text");
    }
    Document d{j["id"].get<std::string>(), j["title"].get<std::string>(),
               j["text"].get<std::string>()};
    if (!seen.insert(d.id).second) {
      throw std::runtime_error("corpus: " + path + ":" + std::to_string(line_no) +
                               ": duplicate document id '" + d.id + "'");
    }
    docs.push_back(std::move(d));
  }
  return docs;
}

std::vector<std::string> split_sentences(std::string_view text) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (c != '.' && c != '!' && c != '?') {
      continue;
    }
    const bool at_end = i + 1 == text.size();
    const bool before_break = !at_end && (text[i + 1] == ' ' || text[i + 1] == '\n');
    if (!at_end && !before_break) {
      continue;
    }
    if (c == '.' && ends_with_abbreviation(text, i)) {
      continue;
    }
    std::string sentence(text.substr(start, i - start + 1));
    // Trim leading whitespace left over from the previous delimiter.
    const std::size_t first = sentence.find_first_not_of(" \n\t");
    if (first != std::string::npos) {
      out.push_back(sentence.substr(first));
    }
    start = i + 1;
  }
  if (start < text.size()) {
    std::string rest(text.substr(start));
    const std::size_t first = rest.find_first_not_of(" \n\t");
    if (first != std::string::npos) {
      out.push_back(rest.substr(first));
    }
  }
  return out;
}

}  // namespace sde

// SPDX-License-Identifier: Apache-2.0
#include "sde/dataset.hpp"

#include <fstream>
#include <set>
#include <stdexcept>

#include <json.hpp>

namespace sde {

std::string kind_name(QuestionKind k) {
  switch (k) {
    case QuestionKind::freeform:
      return "freeform";
    case QuestionKind::yesno:
      return "yesno";
    case QuestionKind::choice:
      return "choice";
    case QuestionKind::label:
      return "label";
  }
  throw std::invalid_argument("kind_name: unknown kind");
}

QuestionKind parse_kind(const std::string& name) {
  if (name == "freeform") {
    return QuestionKind::freeform;
  }
  if (name == "yesno") {
    return QuestionKind::yesno;
  }
  if (name == "choice") {
    return QuestionKind::choice;
  }
  if (name == "label") {
    return QuestionKind::label;
  }
  throw std::invalid_argument("parse_kind: unknown question kind '" + name + "'");
}

std::vector<QuestionRecord> load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("dataset: cannot open " + path);
  }
  std::vector<QuestionRecord> records;
  std::set<std::string> seen;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) {
      continue;
    }
    const std::string where = "dataset: " + path + ":" + std::to_string(line_no);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw std::runtime_error(where + ": unparseable JSON: " + e.what());
    }
    if (!j.contains("id") || !j["id"].is_string() || !j.contains("question") ||
        !j["question"].is_string() || !j.contains("answers") || !j["answers"].is_array() ||
        !j.contains("kind") || !j["kind"].is_string()) {
      throw std::runtime_error(where + ": expected fields id, question, answers, kind");
    }
    QuestionRecord r;
    r.id = j["id"].get<std::string>();
    r.question = j["question"].get<std::string>();
    for (const auto& a : j["answers"]) {
      if (!a.is_string()) {
        throw std::runtime_error(where + ": answers must be strings");
      }
      r.answers.push_back(a.get<std::string>());
    }
    if (r.answers.empty()) {
      throw std::runtime_error(where + ": at least one gold answer is required");
    }
    try {
      r.kind = parse_kind(j["kind"].get<std::string>());
    } catch (const std::invalid_argument& e) {
      throw std::runtime_error(where + ": " + e.what());
    }
    if (!seen.insert(r.id).second) {
      throw std::runtime_error(where + ": duplicate question id '" + r.id + "'");
    }
    records.push_back(std::move(r));
  }
  return records;
}

}  // namespace sde

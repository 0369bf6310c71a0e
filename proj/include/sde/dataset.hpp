// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

namespace sde {

// What shape of answer a question expects, which drives both prompt choice
// and scoring:
//   freeform  -> exact match + token F1 against the gold answers
//   yesno     -> accuracy over normalized yes/no
//   choice    -> accuracy over the extracted "(X)" letter
//   label     -> accuracy over a closed label set (e.g. claim verification)
enum class QuestionKind { freeform, yesno, choice, label };

std::string kind_name(QuestionKind k);
QuestionKind parse_kind(const std::string& name);

struct QuestionRecord {
  std::string id;
  std::string question;
  std::vector<std::string> answers;  // gold answers, at least one
  QuestionKind kind = QuestionKind::freeform;
};

// JSONL: one object per line with fields "id" (string), "question" (string),
// "answers" (array of strings, non-empty), "kind" (string).  Malformed
// lines are reported with their line number; duplicate ids are rejected.
std::vector<QuestionRecord> load_dataset(const std::string& path);

}  // namespace sde

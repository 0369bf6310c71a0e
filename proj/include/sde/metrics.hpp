// SPDX-License-Identifier: Apache-2.0
//
// Answer extraction, normalization, and scoring.
#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "sde/dataset.hpp"

namespace sde {

enum class AnswerFormat {
  boxed,   // last \boxed{...}, nested braces balanced
  choice,  // last "(X)" with X in A..Z
  finish,  // last Finish[...]
};

struct ExtractedAnswer {
  std::string raw;         // exact extracted span
  std::string normalized;  // normalize_answer(raw)
};

// Pulls the final formatted answer out of free text; std::nullopt when the
// text contains no well-formed answer in the requested format.
std::optional<ExtractedAnswer> extract_answer(std::string_view text, AnswerFormat format);

// Lowercase, strip punctuation, drop the articles "a"/"an"/"the", collapse
// whitespace.  Idempotent.
std::string normalize_answer(std::string_view text);

// Both metrics take already-normalized strings and return the max over the
// gold answers.
double exact_match(const std::string& prediction, const std::vector<std::string>& golds);

// Token-multiset F1: overlap counts each token at most min(pred count,
// gold count) times.  Two empty strings score 1 (consistency with exact
// match); otherwise an empty side scores 0.
double token_f1(const std::string& prediction, const std::vector<std::string>& golds);

// Which experiment a response came from, which fixes the answer format and
// the per-question aggregation rule.
enum class Setting { ia, debate, workflow, ia_single, debate_single, workflow_single };

std::string setting_name(Setting s);
AnswerFormat format_for(Setting setting, QuestionKind kind);

struct QuestionScore {
  std::string question_id;
  // One entry per scored response (per agent for multi-agent settings).
  // Unformatted responses score 0 and are flagged.
  std::vector<double> response_em;
  std::vector<double> response_f1;
  std::vector<bool> response_formatted;
  // Aggregated over responses: mean for multi-agent settings, the single
  // response otherwise.
  double em = 0.0;
  double f1 = 0.0;
};

// Scores the final-round responses of one question.  For non-freeform
// kinds both metrics carry the accuracy value.
QuestionScore score_question(const QuestionRecord& question, Setting setting,
                             const std::vector<std::string>& final_responses);

struct Summary {
  int n_questions = 0;
  int n_runs = 0;
  double em = 0.0;  // mean over runs of the per-run question mean
  double f1 = 0.0;
  double formatted_rate = 0.0;  // share of responses with a parseable answer
};

// Aggregates per-run question scores.  Every run must cover the same
// question ids exactly once (violations throw std::invalid_argument).
//
// For the ia_single setting each response entry is one standalone agent's
// run; the summary then reports, per run, the best per-agent total rather
// than the mean, matching how a two-shard single baseline is credited.
Summary aggregate(const std::vector<std::vector<QuestionScore>>& runs,
                  Setting setting = Setting::ia);

}  // namespace sde

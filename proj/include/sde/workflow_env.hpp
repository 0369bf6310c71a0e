// SPDX-License-Identifier: Apache-2.0
//
// The Search/Lookup/Finish tool environment used by the workflow task, plus
// the total parser that extracts actions from model text.
#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <variant>

#include "sde/bm25.hpp"

namespace sde {

struct SearchAction {
  std::string entity;
};
struct LookupAction {
  std::string keyword;
};
struct FinishAction {
  std::string answer;
};
using WorkflowAction = std::variant<SearchAction, LookupAction, FinishAction>;

// Result of scanning model output for an action.  Total: never throws on
// model text.  When several well-formed actions appear, the last one wins.
struct ActionParse {
  std::optional<WorkflowAction> action;
  std::string failure;  // human-readable reason when !action
};

// Recognizes "Search[...]", "Lookup[...]", "Finish[...]" (any "Action k:"
// prefix is optional).  The argument runs to the first ']'; an unclosed
// bracket or unknown verb yields a failure, not an exception.
ActionParse parse_action(std::string_view text);

// Environment state; all mutation flows through env_step.
struct EnvState {
  std::optional<int> current_doc;
  // keyword (lowercased) -> number of results already returned for the
  // current document; reset by every Search.
  std::map<std::string, int> lookup_cursors;
  bool finished = false;
  std::string final_answer;
};

// Executes one action against the corpus and returns the observation text.
//   Search: exact (case-insensitive) title match -> first paragraph and the
//           document becomes current; otherwise a "Could not find" message
//           listing up to five similar titles by BM25.
//   Lookup: next sentence of the current document containing the keyword
//           (case-insensitive substring), prefixed "(Result i / m) ";
//           "No more results." when exhausted; an error observation when no
//           Search has happened yet.
//   Finish: marks the state finished and records the answer.
// Deterministic: equal states and actions give equal observations.
std::string env_step(EnvState& state, const RetrievalIndex& index, const WorkflowAction& action);

}  // namespace sde

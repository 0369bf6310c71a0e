// SPDX-License-Identifier: Apache-2.0
#include "sde/workflow_env.hpp"

#include <cctype>

namespace sde {

namespace {

std::string lower(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  return out;
}

struct VerbSpec {
  std::string_view name;
  int tag;  // 0 search, 1 lookup, 2 finish
};

constexpr VerbSpec kVerbs[] = {
    {"Search", 0},
    {"Lookup", 1},
    {"Finish", 2},
};

}  // namespace

ActionParse parse_action(std::string_view text) {
  // Hand-rolled scan: find every "Verb[", take the argument up to the first
  // ']', and keep the last complete match.  Total over arbitrary text.
  std::optional<WorkflowAction> last;
  bool saw_unclosed = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    for (const VerbSpec& verb : kVerbs) {
      if (text.size() - i <= verb.name.size() ||
          text.compare(i, verb.name.size(), verb.name) != 0 ||
          text[i + verb.name.size()] != '[') {
        continue;
      }
      const std::size_t arg_start = i + verb.name.size() + 1;
      const std::size_t close = text.find(']', arg_start);
      if (close == std::string_view::npos) {
        saw_unclosed = true;
        break;
      }
      const std::string arg(text.substr(arg_start, close - arg_start));
      switch (verb.tag) {
        case 0:
          last = SearchAction{arg};
          break;
        case 1:
          last = LookupAction{arg};
          break;
        default:
          last = FinishAction{arg};
          break;
      }
      i = close;  // resume after the argument
      break;
    }
  }
  if (last) {
    return ActionParse{std::move(last), ""};
  }
  if (saw_unclosed) {
    return ActionParse{std::nullopt, "action bracket never closes"};
  }
  return ActionParse{std::nullopt,
                     "no Search[entity], Lookup[keyword], or Finish[answer] action found"};
}

std::string env_step(EnvState& state, const RetrievalIndex& index,
                     const WorkflowAction& action) {
  if (const auto* search = std::get_if<SearchAction>(&action)) {
    const std::optional<int> doc = index.find_title(search->entity);
    if (doc) {
      state.current_doc = *doc;
      state.lookup_cursors.clear();
      return index.doc(*doc).first_paragraph();
    }
    std::string obs = "Could not find " + search->entity + ". Similar: [";
    const std::vector<ScoredDoc> similar = index.retrieve(search->entity, 5);
    for (std::size_t i = 0; i < similar.size(); ++i) {
      if (i > 0) {
        obs += ", ";
      }
      obs += "'" + index.doc(similar[i].doc).title + "'";
    }
    obs += "].";
    return obs;
  }

  if (const auto* lookup = std::get_if<LookupAction>(&action)) {
    if (!state.current_doc) {
      return "No passage is selected yet. Search for an entity first.";
    }
    const std::vector<std::string> sentences =
        split_sentences(index.doc(*state.current_doc).text);
    const std::string needle = lower(lookup->keyword);
    std::vector<const std::string*> matches;
    for (const std::string& s : sentences) {
      if (lower(s).find(needle) != std::string::npos) {
        matches.push_back(&s);
      }
    }
    int& cursor = state.lookup_cursors[needle];
    if (cursor >= static_cast<int>(matches.size())) {
      return "No more results.";
    }
    const std::string obs = "(Result " + std::to_string(cursor + 1) + " / " +
                            std::to_string(matches.size()) + ") " + *matches[cursor];
    ++cursor;
    return obs;
  }

  const auto& finish = std::get<FinishAction>(action);
  state.finished = true;
  state.final_answer = finish.answer;
  return "Finished.";
}

}  // namespace sde

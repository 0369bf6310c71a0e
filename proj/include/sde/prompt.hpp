// SPDX-License-Identifier: Apache-2.0
//
// Prompt construction: chat turns, literal/message segments, templates, and
// token-exact assembly with span tracking.
//
// The one rule everything here serves: a message embedded into a receiver
// prompt is spliced as the sender's token ids, never re-tokenized, so latent
// payload rows stay aligned 1:1 with prompt positions.
#pragma once

#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sde/message.hpp"
#include "sde/model.hpp"
#include "sde/tokenizer.hpp"

namespace sde {

enum class Role { system, user, assistant };

// Chat-turn markers.  The toy models are never trained, so the exact
// strings only matter for determinism and readability.
struct TurnSyntax {
  std::string system_open = "<|system|>\n";
  std::string user_open = "<|user|>\n";
  std::string assistant_open = "<|assistant|>\n";
  std::string turn_close = "<|end|>\n";

  const std::string& open(Role role) const;
};

struct PromptSegment {
  enum class Kind { literal, message_ref };
  Kind kind = Kind::literal;
  std::string text;        // literal text (Kind::literal)
  std::string message_id;  // referenced message (Kind::message_ref)

  static PromptSegment lit(std::string text);
  static PromptSegment ref(std::string message_id);
};

// Messages shared within one task transcript, addressed by id.
class MessageStore {
 public:
  // Rejects duplicate ids.
  void put(Message message);
  const Message& get(const std::string& id) const;  // throws std::out_of_range
  bool contains(const std::string& id) const;
  std::size_t size() const { return by_id_.size(); }

 private:
  std::map<std::string, Message> by_id_;
};

// Absolute position range [begin, end) in a session's context.
struct SpanRange {
  int begin = 0;
  int end = 0;
  int length() const { return end - begin; }
};

struct AssembledPrompt {
  std::vector<PromptItem> items;
  int base_position = 0;
  // message id -> absolute span its tokens occupy.
  std::map<std::string, SpanRange> message_spans;
};

// Tokenizes literal segments (each literal independently; segment borders
// are token borders), splices referenced messages' token ids verbatim, and
// records each message's absolute span.  Messages whose payload is a
// weighted-embedding payload enter in embedding form: their items carry the
// payload rows as input-embedding overrides.
//
// Errors (std::invalid_argument / std::out_of_range): unknown message id,
// the same message referenced twice in one prompt.
AssembledPrompt assemble_prompt(std::span<const PromptSegment> segments,
                                const MessageStore& store, const Tokenizer& tokenizer,
                                int base_position = 0);

// One chat turn of segments.  An open-ended turn emits its opening marker
// but no closing marker: generation continues inside it.
struct ChatTurn {
  Role role = Role::user;
  std::vector<PromptSegment> segments;
  bool open_ended = false;
};

// Flattens turns into a segment list with syntax markers.  Only the last
// turn may be open-ended.
std::vector<PromptSegment> render_turns(std::span<const ChatTurn> turns,
                                        const TurnSyntax& syntax);

// --- templates ------------------------------------------------------------

// Replaces "{name}" for every key present in `slots`; all other brace
// sequences pass through untouched (prompt text legitimately contains
// braces).  Keys must be non-empty.
std::string substitute_slots(std::string_view text,
                             const std::map<std::string, std::string>& slots);

// Splits `text` at the literal marker "{name}".  Returns {before, after};
// throws std::invalid_argument when the marker is absent or repeated.
std::pair<std::string, std::string> split_at_slot(std::string_view text,
                                                  const std::string& name);

// A template file is a sequence of <system>/<user>/<assistant> blocks; text
// outside the tags must be whitespace.  One newline directly after the
// opening tag and one directly before the closing tag are trimmed.
struct TemplateTurn {
  Role role = Role::user;
  std::string body;
};
std::vector<TemplateTurn> parse_turn_template(std::string_view text);

// Loads and caches template files from a directory ("<name>.txt").
class PromptLibrary {
 public:
  explicit PromptLibrary(std::string dir);
  const std::string& text(const std::string& name) const;       // raw file content
  std::vector<TemplateTurn> turns(const std::string& name) const;

 private:
  std::string dir_;
  mutable std::map<std::string, std::string> cache_;
};

}  // namespace sde

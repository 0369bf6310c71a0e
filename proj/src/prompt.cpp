// SPDX-License-Identifier: Apache-2.0
#include "sde/prompt.hpp"

#include <cctype>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <utility>

namespace sde {

const std::string& TurnSyntax::open(Role role) const {
  switch (role) {
    case Role::system: return system_open;
    case Role::user: return user_open;
    case Role::assistant: return assistant_open;
  }
  throw std::logic_error("unknown role");
}

PromptSegment PromptSegment::lit(std::string text) {
  PromptSegment seg;
  seg.kind = Kind::literal;
  seg.text = std::move(text);
  return seg;
}

PromptSegment PromptSegment::ref(std::string message_id) {
  PromptSegment seg;
  seg.kind = Kind::message_ref;
  seg.message_id = std::move(message_id);
  return seg;
}

void MessageStore::put(Message message) {
  auto [it, inserted] = by_id_.emplace(message.id, std::move(message));
  if (!inserted) {
    throw std::invalid_argument("message store: duplicate id '" + it->first + "'");
  }
}

const Message& MessageStore::get(const std::string& id) const {
  auto it = by_id_.find(id);
  if (it == by_id_.end()) {
    throw std::out_of_range("message store: unknown id '" + id + "'");
  }
  return it->second;
}

bool MessageStore::contains(const std::string& id) const {
  return by_id_.count(id) != 0;
}

AssembledPrompt assemble_prompt(std::span<const PromptSegment> segments,
                                const MessageStore& store, const Tokenizer& tokenizer,
                                int base_position) {
  AssembledPrompt out;
  out.base_position = base_position;
  for (const PromptSegment& seg : segments) {
    if (seg.kind == PromptSegment::Kind::literal) {
      for (TokenId id : tokenizer.tokenize(seg.text)) {
        out.items.push_back(PromptItem::tok(id));
      }
      continue;
    }
    const Message& msg = store.get(seg.message_id);
    if (out.message_spans.count(msg.id) != 0) {
      throw std::invalid_argument("assemble_prompt: message '" + msg.id +
                                  "' referenced twice in one prompt");
    }
    SpanRange span;
    span.begin = base_position + static_cast<int>(out.items.size());
    const auto* cipher = std::get_if<CipherPayload>(&msg.payload);
    if (cipher != nullptr) {
      if (static_cast<std::size_t>(cipher->embeddings.rows()) != msg.tokens.size()) {
        throw std::invalid_argument("assemble_prompt: embedding payload rows mismatch");
      }
      for (std::size_t i = 0; i < msg.tokens.size(); ++i) {
        Eigen::VectorXf e = cipher->embeddings.row(static_cast<Eigen::Index>(i)).transpose();
        out.items.push_back(PromptItem::embed(msg.tokens[i], std::move(e)));
      }
    } else {
      for (TokenId id : msg.tokens) {
        out.items.push_back(PromptItem::tok(id));
      }
    }
    span.end = base_position + static_cast<int>(out.items.size());
    out.message_spans.emplace(msg.id, span);
  }
  return out;
}

std::vector<PromptSegment> render_turns(std::span<const ChatTurn> turns,
                                        const TurnSyntax& syntax) {
  std::vector<PromptSegment> out;
  for (std::size_t t = 0; t < turns.size(); ++t) {
    const ChatTurn& turn = turns[t];
    if (turn.open_ended && t + 1 != turns.size()) {
      throw std::invalid_argument("render_turns: only the last turn may be open-ended");
    }
    out.push_back(PromptSegment::lit(syntax.open(turn.role)));
    out.insert(out.end(), turn.segments.begin(), turn.segments.end());
    if (!turn.open_ended) {
      out.push_back(PromptSegment::lit(syntax.turn_close));
    }
  }
  return out;
}

std::string substitute_slots(std::string_view text,
                             const std::map<std::string, std::string>& slots) {
  for (const auto& [key, _] : slots) {
    if (key.empty()) throw std::invalid_argument("substitute_slots: empty slot name");
  }
  std::string out;
  out.reserve(text.size());
  std::size_t i = 0;
  while (i < text.size()) {
    if (text[i] == '{') {
      std::size_t close = text.find('}', i + 1);
      if (close != std::string_view::npos) {
        std::string name(text.substr(i + 1, close - i - 1));
        auto it = slots.find(name);
        if (it != slots.end()) {
          out += it->second;
          i = close + 1;
          continue;
        }
      }
    }
    out += text[i];
    ++i;
  }
  return out;
}

std::pair<std::string, std::string> split_at_slot(std::string_view text,
                                                  const std::string& name) {
  const std::string marker = "{" + name + "}";
  std::size_t pos = text.find(marker);
  if (pos == std::string_view::npos) {
    throw std::invalid_argument("split_at_slot: marker '" + marker + "' not found");
  }
  if (text.find(marker, pos + 1) != std::string_view::npos) {
    throw std::invalid_argument("split_at_slot: marker '" + marker + "' appears twice");
  }
  return {std::string(text.substr(0, pos)),
          std::string(text.substr(pos + marker.size()))};
}

namespace {

// Trims one newline after the opening tag and one before the closing tag so
// template files can put tags on their own lines.
std::string trim_block(std::string_view body) {
  if (!body.empty() && body.front() == '\n') body.remove_prefix(1);
  if (!body.empty() && body.back() == '\n') body.remove_suffix(1);
  return std::string(body);
}

bool all_whitespace(std::string_view s) {
  for (char c : s) {
    if (!std::isspace(static_cast<unsigned char>(c))) return false;
  }
  return true;
}

}  // namespace

std::vector<TemplateTurn> parse_turn_template(std::string_view text) {
  static const std::pair<std::string_view, Role> kTags[] = {
      {"system", Role::system}, {"user", Role::user}, {"assistant", Role::assistant}};
  std::vector<TemplateTurn> out;
  std::size_t i = 0;
  while (i < text.size()) {
    std::size_t open = text.find('<', i);
    std::string_view gap = text.substr(i, (open == std::string_view::npos ? text.size() : open) - i);
    if (!all_whitespace(gap)) {
      throw std::invalid_argument("turn template: stray text outside turn tags");
    }
    if (open == std::string_view::npos) break;
    bool matched = false;
    for (const auto& [tag, role] : kTags) {
      std::string open_tag = "<" + std::string(tag) + ">";
      std::string close_tag = "</" + std::string(tag) + ">";
      if (text.substr(open).rfind(open_tag, 0) != 0) continue;
      std::size_t body_begin = open + open_tag.size();
      std::size_t close = text.find(close_tag, body_begin);
      if (close == std::string_view::npos) {
        throw std::invalid_argument("turn template: missing " + close_tag);
      }
      TemplateTurn turn;
      turn.role = role;
      turn.body = trim_block(text.substr(body_begin, close - body_begin));
      out.push_back(std::move(turn));
      i = close + close_tag.size();
      matched = true;
      break;
    }
    if (!matched) {
      throw std::invalid_argument("turn template: unrecognized tag at offset " +
                                  std::to_string(open));
    }
  }
  if (out.empty()) throw std::invalid_argument("turn template: no turns found");
  return out;
}

PromptLibrary::PromptLibrary(std::string dir) : dir_(std::move(dir)) {}

const std::string& PromptLibrary::text(const std::string& name) const {
  auto it = cache_.find(name);
  if (it != cache_.end()) return it->second;
  const std::string path = dir_ + "/" + name + ".txt";
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("prompt library: cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return cache_.emplace(name, buf.str()).first->second;
}

std::vector<TemplateTurn> PromptLibrary::turns(const std::string& name) const {
  return parse_turn_template(text(name));
}

}  // namespace sde

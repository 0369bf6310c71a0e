// SPDX-License-Identifier: Apache-2.0
#include "sde/prompt.hpp"

#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "doctest.h"

namespace {

std::string tmp_path(const std::string& name) {
  return std::string(SDE_TEST_TMP_DIR) + "/" + name;
}

sde::Message token_message(std::string id, int sender, std::vector<sde::TokenId> tokens) {
  sde::Tokenizer tok;
  std::string text;
  for (sde::TokenId t : tokens) text += tok.token_text(t);
  return sde::make_message(std::move(id), sender, 1, std::move(tokens), std::move(text),
                           std::monostate{});
}

}  // namespace

TEST_CASE("turn syntax maps roles to openers") {
  sde::TurnSyntax syntax;
  CHECK(syntax.open(sde::Role::system) == "<|system|>\n");
  CHECK(syntax.open(sde::Role::user) == "<|user|>\n");
  CHECK(syntax.open(sde::Role::assistant) == "<|assistant|>\n");
}

TEST_CASE("message store rejects duplicates and unknown ids") {
  sde::MessageStore store;
  store.put(token_message("m1", 0, {65, 66}));
  CHECK(store.contains("m1"));
  CHECK(store.get("m1").tokens.size() == 2);
  CHECK_THROWS_AS(store.put(token_message("m1", 1, {67})), std::invalid_argument);
  CHECK_THROWS_AS(store.get("nope"), std::out_of_range);
  CHECK(store.size() == 1);
}

TEST_CASE("assemble_prompt tokenizes literals and splices message tokens verbatim") {
  sde::Tokenizer tok;
  sde::MessageStore store;
  store.put(token_message("peer", 1, {100, 101, 102}));

  std::vector<sde::PromptSegment> segments = {
      sde::PromptSegment::lit("hi "),
      sde::PromptSegment::ref("peer"),
      sde::PromptSegment::lit("!"),
  };
  sde::AssembledPrompt prompt = sde::assemble_prompt(segments, store, tok, 7);

  REQUIRE(prompt.items.size() == 7);  // "hi " = 3 bytes, message 3, "!" 1
  CHECK(prompt.base_position == 7);
  CHECK(prompt.items[0].token == sde::TokenId{'h'});
  CHECK(prompt.items[1].token == sde::TokenId{'i'});
  CHECK(prompt.items[2].token == sde::TokenId{' '});
  CHECK(prompt.items[3].token == 100);
  CHECK(prompt.items[4].token == 101);
  CHECK(prompt.items[5].token == 102);
  CHECK(prompt.items[6].token == sde::TokenId{'!'});
  for (const sde::PromptItem& item : prompt.items) {
    CHECK_FALSE(item.embedding.has_value());
  }

  REQUIRE(prompt.message_spans.count("peer") == 1);
  const sde::SpanRange span = prompt.message_spans.at("peer");
  CHECK(span.begin == 10);  // base 7 + 3 literal tokens
  CHECK(span.end == 13);
  CHECK(span.length() == 3);
}

TEST_CASE("assemble_prompt tracks spans of several messages") {
  sde::Tokenizer tok;
  sde::MessageStore store;
  store.put(token_message("a", 0, {65}));
  store.put(token_message("b", 1, {66, 67}));

  std::vector<sde::PromptSegment> segments = {
      sde::PromptSegment::ref("a"),
      sde::PromptSegment::lit("--"),
      sde::PromptSegment::ref("b"),
  };
  sde::AssembledPrompt prompt = sde::assemble_prompt(segments, store, tok, 0);
  CHECK(prompt.items.size() == 5);
  CHECK(prompt.message_spans.at("a").begin == 0);
  CHECK(prompt.message_spans.at("a").end == 1);
  CHECK(prompt.message_spans.at("b").begin == 3);
  CHECK(prompt.message_spans.at("b").end == 5);
}

TEST_CASE("assemble_prompt rejects unknown and repeated references") {
  sde::Tokenizer tok;
  sde::MessageStore store;
  store.put(token_message("m", 0, {65}));

  std::vector<sde::PromptSegment> unknown = {sde::PromptSegment::ref("ghost")};
  CHECK_THROWS_AS(sde::assemble_prompt(unknown, store, tok, 0), std::out_of_range);

  std::vector<sde::PromptSegment> twice = {sde::PromptSegment::ref("m"),
                                           sde::PromptSegment::ref("m")};
  CHECK_THROWS_AS(sde::assemble_prompt(twice, store, tok, 0), std::invalid_argument);
}

TEST_CASE("assemble_prompt turns weighted-embedding payloads into embedding items") {
  sde::Tokenizer tok;
  Eigen::MatrixXf rows(2, 4);
  rows << 1.0f, 2.0f, 3.0f, 4.0f, 5.0f, 6.0f, 7.0f, 8.0f;
  sde::CipherPayload payload;
  payload.embeddings = rows;
  sde::Message msg = sde::make_message("soft", 1, 1, {65, 66}, "AB", payload);
  sde::MessageStore store;
  store.put(msg);

  std::vector<sde::PromptSegment> segments = {sde::PromptSegment::ref("soft")};
  sde::AssembledPrompt prompt = sde::assemble_prompt(segments, store, tok, 0);
  REQUIRE(prompt.items.size() == 2);
  for (int i = 0; i < 2; ++i) {
    const sde::PromptItem& item = prompt.items[static_cast<std::size_t>(i)];
    CHECK(item.token == msg.tokens[static_cast<std::size_t>(i)]);
    REQUIRE(item.embedding.has_value());
    REQUIRE(item.embedding->size() == 4);
    CHECK((*item.embedding - rows.row(i).transpose()).norm() == 0.0f);
  }
  CHECK(prompt.message_spans.at("soft").length() == 2);
}

TEST_CASE("assemble_prompt validates embedding payload row counts") {
  // Bypass make_message to manufacture an inconsistent message.
  sde::Message bad;
  bad.id = "bad";
  bad.sender = 0;
  bad.tokens = {65, 66};
  bad.text = "AB";
  sde::CipherPayload payload;
  payload.embeddings = Eigen::MatrixXf::Zero(3, 4);
  bad.payload = payload;
  sde::MessageStore store;
  store.put(bad);

  sde::Tokenizer tok;
  std::vector<sde::PromptSegment> segments = {sde::PromptSegment::ref("bad")};
  CHECK_THROWS_AS(sde::assemble_prompt(segments, store, tok, 0), std::invalid_argument);
}

TEST_CASE("render_turns wraps turns in markers") {
  sde::TurnSyntax syntax;
  std::vector<sde::ChatTurn> turns(3);
  turns[0].role = sde::Role::system;
  turns[0].segments.push_back(sde::PromptSegment::lit("sys"));
  turns[1].role = sde::Role::user;
  turns[1].segments.push_back(sde::PromptSegment::lit("usr"));
  turns[2].role = sde::Role::assistant;
  turns[2].open_ended = true;

  std::vector<sde::PromptSegment> segments = sde::render_turns(turns, syntax);
  REQUIRE(segments.size() == 7);
  CHECK(segments[0].text == "<|system|>\n");
  CHECK(segments[1].text == "sys");
  CHECK(segments[2].text == "<|end|>\n");
  CHECK(segments[3].text == "<|user|>\n");
  CHECK(segments[4].text == "usr");
  CHECK(segments[5].text == "<|end|>\n");
  CHECK(segments[6].text == "<|assistant|>\n");  // open-ended: no close

  SUBCASE("only the last turn may be open-ended") {
    turns[0].open_ended = true;
    CHECK_THROWS_AS(sde::render_turns(turns, syntax), std::invalid_argument);
  }
}

TEST_CASE("substitute_slots replaces known slots and leaves the rest alone") {
  const std::string tpl = "Q: {question} Answer as \\boxed{answer}. Again: {question}{missing}";
  std::string out = sde::substitute_slots(tpl, {{"question", "why?"}});
  CHECK(out == "Q: why? Answer as \\boxed{answer}. Again: why?{missing}");

  SUBCASE("inserted values are not re-scanned") {
    std::string nested = sde::substitute_slots("{a}", {{"a", "{b}"}, {"b", "X"}});
    CHECK(nested == "{b}");
  }
  SUBCASE("empty slot names are rejected") {
    CHECK_THROWS_AS(sde::substitute_slots("x", {{"", "y"}}), std::invalid_argument);
  }
  SUBCASE("unterminated braces pass through") {
    CHECK(sde::substitute_slots("tail {question", {{"question", "q"}}) == "tail {question");
  }
}

TEST_CASE("split_at_slot splits once and validates") {
  auto [pre, post] = sde::split_at_slot("before {peer_blocks}after", "peer_blocks");
  CHECK(pre == "before ");
  CHECK(post == "after");
  CHECK_THROWS_AS(sde::split_at_slot("no marker", "peer_blocks"), std::invalid_argument);
  CHECK_THROWS_AS(sde::split_at_slot("{m} twice {m}", "m"), std::invalid_argument);
}

TEST_CASE("parse_turn_template extracts role blocks") {
  const std::string text =
      "<system>\nbe helpful\n</system>\n"
      "<user>\nQ: {question}\n</user>\n"
      "<assistant>\nok\n</assistant>\n";
  std::vector<sde::TemplateTurn> turns = sde::parse_turn_template(text);
  REQUIRE(turns.size() == 3);
  CHECK(turns[0].role == sde::Role::system);
  CHECK(turns[0].body == "be helpful");
  CHECK(turns[1].role == sde::Role::user);
  CHECK(turns[1].body == "Q: {question}");
  CHECK(turns[2].role == sde::Role::assistant);
  CHECK(turns[2].body == "ok");

  SUBCASE("only one newline is trimmed per side") {
    std::vector<sde::TemplateTurn> t = sde::parse_turn_template("<user>\n\nbody\n\n</user>");
    CHECK(t[0].body == "\nbody\n");
  }
  SUBCASE("stray text outside tags is rejected") {
    CHECK_THROWS_AS(sde::parse_turn_template("hello <user>x</user>"), std::invalid_argument);
    CHECK_THROWS_AS(sde::parse_turn_template("<user>x</user> trailing"),
                    std::invalid_argument);
  }
  SUBCASE("unclosed and unknown tags are rejected") {
    CHECK_THROWS_AS(sde::parse_turn_template("<user>x"), std::invalid_argument);
    CHECK_THROWS_AS(sde::parse_turn_template("<tool>x</tool>"), std::invalid_argument);
    CHECK_THROWS_AS(sde::parse_turn_template("   "), std::invalid_argument);
  }
}

TEST_CASE("prompt library loads and caches template files") {
  const std::string name = "tpl_cache_probe";
  {
    std::ofstream out(tmp_path(name + ".txt"), std::ios::binary);
    out << "<user>\nhello {question}\n</user>\n";
  }
  sde::PromptLibrary lib(SDE_TEST_TMP_DIR);
  const std::string& first = lib.text(name);
  CHECK(first == "<user>\nhello {question}\n</user>\n");
  CHECK(&lib.text(name) == &first);  // cached: same storage

  std::vector<sde::TemplateTurn> turns = lib.turns(name);
  REQUIRE(turns.size() == 1);
  CHECK(turns[0].body == "hello {question}");

  CHECK_THROWS_AS(lib.text("definitely_missing_template"), std::runtime_error);
}

TEST_CASE("shipped prompt templates parse and carry their slots") {
  sde::PromptLibrary lib(std::string(SDE_ASSETS_DIR) + "/prompts");
  const struct {
    const char* name;
    sde::Role role0;
    const char* needle;
  } cases[] = {
      {"ia_system", sde::Role::system, "{documents}"},
      {"ia_round1_user", sde::Role::user, "{question}"},
      {"ia_roundk_user", sde::Role::user, "{peer_blocks}"},
      {"ia_single", sde::Role::system, "{documents}"},
      {"debate_math_round1", sde::Role::user, "{question}"},
      {"debate_math_roundk", sde::Role::user, "{peer_blocks}"},
      {"debate_choice_round1", sde::Role::user, "{question}"},
      {"debate_choice_roundk", sde::Role::user, "{peer_blocks}"},
      {"workflow_react_qa", sde::Role::system, "{examples}"},
      {"workflow_react_fever", sde::Role::system, "{examples}"},
      {"workflow_single_qa", sde::Role::user, "{question}"},
      {"workflow_single_fever", sde::Role::user, "{question}"},
  };
  for (const auto& c : cases) {
    CAPTURE(c.name);
    std::vector<sde::TemplateTurn> turns = lib.turns(c.name);
    REQUIRE(!turns.empty());
    CHECK(turns[0].role == c.role0);
    bool found = false;
    for (const sde::TemplateTurn& t : turns) {
      if (t.body.find(c.needle) != std::string::npos) found = true;
    }
    CHECK(found);
  }
  // Item templates are plain text with a {message} slot.
  CHECK(lib.text("ia_peer_item").find("{message}") != std::string::npos);
  CHECK(lib.text("debate_peer_item").find("{message}") != std::string::npos);
  // The workflow user turns replay history through the {history} slot.
  CHECK(lib.turns("workflow_react_qa")[1].body.find("{history}") != std::string::npos);
  CHECK(lib.turns("workflow_react_fever")[1].body.find("{history}") != std::string::npos);
}

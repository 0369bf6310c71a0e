// SPDX-License-Identifier: Apache-2.0
#include "sde/agents.hpp"

#include <stdexcept>
#include <string>
#include <vector>

#include "doctest.h"
#include "sde/rng.hpp"
#include "sde/trajectory.hpp"

namespace {

sde::ModelConfig agent_config() {
  sde::ModelConfig cfg;
  cfg.n_layers = 4;
  cfg.d_model = 16;
  cfg.n_heads = 2;
  cfg.vocab_size = 256;
  cfg.max_seq = 256;
  return cfg;
}

struct Fixture {
  sde::Model model = sde::Model::build_toy(agent_config(), 77);
  sde::Tokenizer tok;
  sde::TurnSyntax syntax;

  sde::AgentProfile profile(int id, sde::Method method = sde::Method::nl,
                            std::vector<int> layers = {}) const {
    sde::AgentProfile p;
    p.id = id;
    p.method = method;
    p.layers = std::move(layers);
    p.decode.mode = sde::DecodeMode::greedy;
    p.decode.max_new_tokens = 4;
    p.decode.seed = 99;
    return p;
  }

  std::vector<sde::ChatTurn> simple_turns(const std::string& user_text) const {
    std::vector<sde::ChatTurn> turns(2);
    turns[0].role = sde::Role::user;
    turns[0].segments.push_back(sde::PromptSegment::lit(user_text));
    turns[1].role = sde::Role::assistant;
    turns[1].open_ended = true;
    return turns;
  }
};

std::vector<sde::TokenId> bytes_of(const sde::Tokenizer& tok, const std::string& s) {
  return tok.tokenize(s);
}

void append(std::vector<sde::TokenId>& out, const std::vector<sde::TokenId>& extra) {
  out.insert(out.end(), extra.begin(), extra.end());
}

}  // namespace

TEST_CASE("agent responds with a well-formed message") {
  Fixture fx;
  sde::Agent agent(fx.model, fx.tok, fx.syntax, fx.profile(3));
  sde::MessageStore store;

  sde::Message msg = agent.respond(fx.simple_turns("hi"), store, 2, sde::StopRule{});
  CHECK(msg.id == "a3.r2");
  CHECK(msg.sender == 3);
  CHECK(msg.round == 2);
  CHECK(msg.tokens.size() == 4);
  CHECK(msg.text == [&] {
    std::string t;
    for (sde::TokenId id : msg.tokens) t += fx.tok.token_text(id);
    return t;
  }());
  CHECK(std::holds_alternative<std::monostate>(msg.payload));
  CHECK(agent.session().length() > 0);
}

TEST_CASE("agent closes its previous assistant turn before the next exchange") {
  Fixture fx;
  sde::Agent agent(fx.model, fx.tok, fx.syntax, fx.profile(0));
  sde::MessageStore store;

  sde::Message first = agent.respond(fx.simple_turns("hi"), store, 1, sde::StopRule{});
  sde::Message second = agent.respond(fx.simple_turns("go"), store, 2, sde::StopRule{});

  std::vector<sde::TokenId> expected;
  append(expected, bytes_of(fx.tok, "<|user|>\nhi<|end|>\n<|assistant|>\n"));
  append(expected, first.tokens);
  append(expected, bytes_of(fx.tok, "<|end|>\n<|user|>\ngo<|end|>\n<|assistant|>\n"));
  append(expected, second.tokens);
  CHECK(agent.session().context() == expected);
}

TEST_CASE("scripted rounds teacher-force the response text") {
  Fixture fx;
  sde::AgentProfile profile = fx.profile(1);
  profile.scripted_rounds = {"AB", "xyz"};
  sde::Agent agent(fx.model, fx.tok, fx.syntax, profile);
  sde::MessageStore store;

  sde::Message first = agent.respond(fx.simple_turns("q1"), store, 1, sde::StopRule{});
  CHECK(first.text == "AB");
  CHECK(first.tokens == std::vector<sde::TokenId>{65, 66});

  sde::Message second = agent.respond(fx.simple_turns("q2"), store, 2, sde::StopRule{});
  CHECK(second.text == "xyz");

  // Script list exhausted: back to the model.
  sde::Message third = agent.respond(fx.simple_turns("q3"), store, 3, sde::StopRule{});
  CHECK(third.tokens.size() == 4);
}

TEST_CASE("delta payloads match an independent capture of the same extension") {
  Fixture fx;
  const std::vector<int> layers = {1, 3};
  sde::AgentProfile profile = fx.profile(0, sde::Method::sde, layers);
  profile.scripted_rounds = {"scripted reply"};
  sde::Agent agent(fx.model, fx.tok, fx.syntax, profile);
  sde::MessageStore store;

  std::vector<sde::ChatTurn> turns = fx.simple_turns("tell me");
  sde::Message msg = agent.respond(turns, store, 1, sde::StopRule{});

  const auto* payload = std::get_if<sde::DeltaPayload>(&msg.payload);
  REQUIRE(payload != nullptr);
  REQUIRE(payload->layers.size() == 2);
  CHECK(payload->layers[0].layer == 1);
  CHECK(payload->layers[1].layer == 3);
  for (const sde::DeltaTrajectory& t : payload->layers) {
    CHECK(static_cast<std::size_t>(t.deltas.rows()) == msg.tokens.size());
    CHECK(t.deltas.cols() == fx.model.config().d_model);
  }

  // Replay the identical extension on a bare session and compare bitwise.
  std::vector<sde::PromptSegment> segments = sde::render_turns(turns, fx.syntax);
  sde::AssembledPrompt prompt = sde::assemble_prompt(segments, store, fx.tok, 0);
  sde::Session twin(fx.model, fx.tok);
  sde::DecodeSettings settings = profile.decode;
  settings.seed = sde::rng::derive_seed(profile.decode.seed, 1);
  settings.script = fx.tok.tokenize("scripted reply");
  sde::HookBus hooks;
  hooks.capture_layers = {1, 3};
  sde::GenerationRecord rec = twin.extend(prompt.items, settings, hooks, sde::StopRule{});
  REQUIRE(rec.tokens == msg.tokens);
  for (std::size_t i = 0; i < layers.size(); ++i) {
    sde::HiddenStateTrajectory traj;
    traj.layer = layers[i];
    traj.states = rec.trajectories.at(layers[i]);
    const sde::DeltaTrajectory expect = sde::encode_deltas(traj);
    CHECK((payload->layers[i].deltas - expect.deltas).cwiseAbs().maxCoeff() == 0.0f);
  }
}

TEST_CASE("weighted-embedding method ships per-token embeddings") {
  Fixture fx;
  sde::AgentProfile profile = fx.profile(0, sde::Method::cipher);
  profile.decode.temperature = 0.5f;
  sde::Agent agent(fx.model, fx.tok, fx.syntax, profile);
  sde::MessageStore store;

  sde::Message msg = agent.respond(fx.simple_turns("soft"), store, 1, sde::StopRule{});
  const auto* payload = std::get_if<sde::CipherPayload>(&msg.payload);
  REQUIRE(payload != nullptr);
  CHECK(static_cast<std::size_t>(payload->embeddings.rows()) == msg.tokens.size());
  CHECK(payload->embeddings.cols() == fx.model.config().d_model);
}

TEST_CASE("peer payloads are injected; own messages are not") {
  Fixture fx;

  // Hand-built peer message with a large constant delta at layer 2.
  Eigen::MatrixXf deltas = Eigen::MatrixXf::Constant(2, 16, 10.0f);
  sde::DeltaPayload payload;
  payload.layers.push_back(sde::DeltaTrajectory{2, deltas});
  sde::Message peer = sde::make_message("peer.r1", 1, 1, {65, 66}, "AB", payload);

  sde::MessageStore store;
  store.put(peer);

  std::vector<sde::ChatTurn> turns(2);
  turns[0].role = sde::Role::user;
  turns[0].segments.push_back(sde::PromptSegment::lit("peer said "));
  turns[0].segments.push_back(sde::PromptSegment::ref("peer.r1"));
  turns[1].role = sde::Role::assistant;
  turns[1].open_ended = true;

  SUBCASE("peer message payload lands as an injection") {
    // Capture one layer above the injection point: an addition at layer 2
    // reaches later positions only through higher-layer attention.
    sde::Agent agent(fx.model, fx.tok, fx.syntax, fx.profile(0, sde::Method::sde, {2, 3}));
    std::vector<sde::AppliedInjection> applied;
    sde::Message reply = agent.respond(turns, store, 2, sde::StopRule{}, &applied);
    REQUIRE(applied.size() == 1);
    CHECK(applied[0].message_id == "peer.r1");
    CHECK(applied[0].span.length() == 2);
    CHECK(applied[0].layers == std::vector<int>{2});  // from the payload
    CHECK_FALSE(applied[0].zeroed);
    CHECK(reply.tokens.size() == 4);

    // The same exchange with zeroed payloads must capture different states:
    // a 10.0-magnitude delta upstream has to propagate into generation.
    sde::AgentProfile zero_profile = fx.profile(0, sde::Method::sde, {2, 3});
    zero_profile.zero_payloads = true;
    sde::Agent zero_agent(fx.model, fx.tok, fx.syntax, zero_profile);
    std::vector<sde::AppliedInjection> zero_applied;
    sde::Message zero_reply =
        zero_agent.respond(turns, store, 2, sde::StopRule{}, &zero_applied);
    REQUIRE(zero_applied.size() == 1);
    CHECK(zero_applied[0].zeroed);

    const auto* inj = std::get_if<sde::DeltaPayload>(&reply.payload);
    const auto* zer = std::get_if<sde::DeltaPayload>(&zero_reply.payload);
    REQUIRE(inj != nullptr);
    REQUIRE(zer != nullptr);
    REQUIRE(inj->layers[1].layer == 3);
    CHECK((inj->layers[1].deltas - zer->layers[1].deltas).norm() > 0.0f);
  }

  SUBCASE("a message the agent itself sent is never re-injected") {
    // Same store, but the receiving agent carries the sender's id.
    sde::Agent self_agent(fx.model, fx.tok, fx.syntax, fx.profile(1, sde::Method::sde, {2}));
    std::vector<sde::AppliedInjection> applied;
    self_agent.respond(turns, store, 2, sde::StopRule{}, &applied);
    CHECK(applied.empty());
  }
}

TEST_CASE("agent validation") {
  Fixture fx;
  SUBCASE("latent methods need layers") {
    CHECK_THROWS_AS(sde::Agent(fx.model, fx.tok, fx.syntax, fx.profile(0, sde::Method::sde)),
                    std::invalid_argument);
    CHECK_THROWS_AS(sde::Agent(fx.model, fx.tok, fx.syntax, fx.profile(0, sde::Method::raw)),
                    std::invalid_argument);
  }
  SUBCASE("the last turn must be an open-ended assistant turn") {
    sde::Agent agent(fx.model, fx.tok, fx.syntax, fx.profile(0));
    sde::MessageStore store;
    std::vector<sde::ChatTurn> closed(1);
    closed[0].role = sde::Role::assistant;
    CHECK_THROWS_AS(agent.respond(closed, store, 1, sde::StopRule{}), std::invalid_argument);
    std::vector<sde::ChatTurn> wrong_role(1);
    wrong_role[0].role = sde::Role::user;
    wrong_role[0].open_ended = true;
    CHECK_THROWS_AS(agent.respond(wrong_role, store, 1, sde::StopRule{}),
                    std::invalid_argument);
    CHECK_THROWS_AS(agent.respond({}, store, 1, sde::StopRule{}), std::invalid_argument);
  }
}

TEST_CASE("payload_from_record flags missing trajectories") {
  sde::GenerationRecord rec;
  rec.tokens = {65};
  rec.trajectories[1] = Eigen::MatrixXf::Zero(2, 16);
  const std::vector<int> layers = {1, 2};
  CHECK_THROWS_AS(sde::payload_from_record(rec, sde::Method::sde, layers), std::logic_error);
}

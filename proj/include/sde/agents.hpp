// SPDX-License-Identifier: Apache-2.0
//
// Agents: persistent per-agent sessions over a shared read-only model, plus
// the receive/respond step that turns embedded peer messages into latent
// injections and generated text into outgoing messages.
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sde/message.hpp"
#include "sde/model.hpp"
#include "sde/prompt.hpp"
#include "sde/tokenizer.hpp"

namespace sde {

struct AgentProfile {
  int id = 0;
  Method method = Method::nl;
  std::vector<int> layers;  // capture/injection layers for latent methods
  DecodeSettings decode;    // per-call seed is derived from decode.seed and the round
  // Diagnostic: keep injection structure but replace every delta with zeros.
  bool zero_payloads = false;
  // Optional teacher forcing: entry k replaces the sampled tokens of this
  // agent's (k+1)-th response.  Text is tokenized with the run tokenizer.
  std::vector<std::string> scripted_rounds;
};

// One latent injection actually applied while building a prompt.
struct AppliedInjection {
  std::string message_id;
  SpanRange span;
  std::vector<int> layers;
  bool zeroed = false;
};

class Agent {
 public:
  Agent(const Model& model, const Tokenizer& tokenizer, TurnSyntax syntax,
        AgentProfile profile);

  // Extends this agent's persistent session with `turns` (last turn must be
  // open-ended assistant), splicing referenced messages token-exactly,
  // injecting latent payloads of peer messages at their spans, generating a
  // reply, and packaging it as a Message (id "a<agent>.r<round>") whose
  // payload matches the agent's method.
  Message respond(std::span<const ChatTurn> turns, const MessageStore& store, int round,
                  const StopRule& stop,
                  std::vector<AppliedInjection>* applied = nullptr);

  const AgentProfile& profile() const { return profile_; }
  const Session& session() const { return session_; }

 private:
  const Model& model_;
  const Tokenizer& tokenizer_;
  TurnSyntax syntax_;
  AgentProfile profile_;
  Session session_;
  bool needs_close_ = false;  // previous assistant turn is still open
  int responses_ = 0;
};

// Payload construction shared with tests: trajectory rows after the baseline
// row become message rows (deltas for the delta method, states for the
// raw-state method).
Payload payload_from_record(const GenerationRecord& record, Method method,
                            std::span<const int> layers);

}  // namespace sde

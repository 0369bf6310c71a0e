// SPDX-License-Identifier: Apache-2.0
#include "sde/agents.hpp"

#include <stdexcept>
#include <utility>

#include "sde/rng.hpp"
#include "sde/trajectory.hpp"

namespace sde {

Agent::Agent(const Model& model, const Tokenizer& tokenizer, TurnSyntax syntax,
             AgentProfile profile)
    : model_(model),
      tokenizer_(tokenizer),
      syntax_(std::move(syntax)),
      profile_(std::move(profile)),
      session_(model, tokenizer) {
  if (profile_.method == Method::sde || profile_.method == Method::raw) {
    if (profile_.layers.empty()) {
      throw std::invalid_argument("agent: latent method requires capture layers");
    }
  }
}

Payload payload_from_record(const GenerationRecord& record, Method method,
                            std::span<const int> layers) {
  switch (method) {
    case Method::nl:
      return std::monostate{};
    case Method::sde: {
      DeltaPayload payload;
      for (int layer : layers) {
        auto it = record.trajectories.find(layer);
        if (it == record.trajectories.end()) {
          throw std::logic_error("payload_from_record: missing trajectory for layer " +
                                 std::to_string(layer));
        }
        HiddenStateTrajectory traj;
        traj.layer = layer;
        traj.states = it->second;
        payload.layers.push_back(encode_deltas(traj));
      }
      return payload;
    }
    case Method::raw: {
      RawStatePayload payload;
      for (int layer : layers) {
        auto it = record.trajectories.find(layer);
        if (it == record.trajectories.end()) {
          throw std::logic_error("payload_from_record: missing trajectory for layer " +
                                 std::to_string(layer));
        }
        RawStateTrajectory traj;
        traj.layer = layer;
        const Eigen::Index n = it->second.rows() - 1;
        traj.states = it->second.bottomRows(n);
        payload.layers.push_back(std::move(traj));
      }
      return payload;
    }
    case Method::cipher: {
      CipherPayload payload;
      payload.embeddings = record.cipher_embeddings;
      return payload;
    }
  }
  throw std::logic_error("payload_from_record: unknown method");
}

Message Agent::respond(std::span<const ChatTurn> turns, const MessageStore& store,
                       int round, const StopRule& stop,
                       std::vector<AppliedInjection>* applied) {
  std::vector<PromptSegment> segments;
  if (needs_close_) {
    segments.push_back(PromptSegment::lit(syntax_.turn_close));
  }
  {
    std::vector<PromptSegment> rendered = render_turns(turns, syntax_);
    segments.insert(segments.end(), rendered.begin(), rendered.end());
  }
  if (segments.empty() || turns.empty() || !turns[turns.size() - 1].open_ended ||
      turns[turns.size() - 1].role != Role::assistant) {
    throw std::invalid_argument("agent: last turn must be an open-ended assistant turn");
  }

  AssembledPrompt prompt =
      assemble_prompt(segments, store, tokenizer_, session_.length());

  HookBus hooks;
  if (profile_.method == Method::sde || profile_.method == Method::raw) {
    hooks.capture_layers.insert(profile_.layers.begin(), profile_.layers.end());
  }
  for (const auto& [id, span] : prompt.message_spans) {
    const Message& msg = store.get(id);
    if (msg.sender == profile_.id) continue;  // never re-inject own output
    InjectionPlan plan =
        build_injection_plan(msg, span.begin, span.length(), profile_.zero_payloads);
    if (plan.deltas.empty()) continue;
    AppliedInjection record;
    record.message_id = id;
    record.span = span;
    for (const auto& [layer, _] : plan.deltas) record.layers.push_back(layer);
    record.zeroed = profile_.zero_payloads;
    if (applied != nullptr) applied->push_back(record);
    hooks.plans.push_back(std::move(plan));
  }

  DecodeSettings settings = profile_.decode;
  settings.seed = rng::derive_seed(profile_.decode.seed, static_cast<std::uint64_t>(round));
  if (static_cast<std::size_t>(responses_) < profile_.scripted_rounds.size()) {
    settings.script = tokenizer_.tokenize(profile_.scripted_rounds[responses_]);
  }
  if (profile_.method == Method::cipher) {
    settings.mode = DecodeMode::cipher;
  }

  GenerationRecord rec = session_.extend(prompt.items, settings, hooks, stop);
  needs_close_ = true;
  ++responses_;

  Message out = make_message("a" + std::to_string(profile_.id) + ".r" + std::to_string(round),
                             profile_.id, round, rec.tokens, rec.text,
                             payload_from_record(rec, profile_.method, profile_.layers));
  return out;
}

}  // namespace sde

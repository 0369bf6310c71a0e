// SPDX-License-Identifier: Apache-2.0
//
// The three cooperation protocols (information-asymmetry QA, debate,
// tool workflow) and their single-agent baselines, all built on the same
// agent/message machinery so that switching the exchange method (nl, sde,
// cipher, raw) changes payloads and injections but never prompt structure.
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sde/agents.hpp"
#include "sde/bm25.hpp"
#include "sde/corpus.hpp"
#include "sde/dataset.hpp"
#include "sde/metrics.hpp"
#include "sde/model.hpp"
#include "sde/prompt.hpp"
#include "sde/tokenizer.hpp"
#include "sde/workflow_env.hpp"

namespace sde {

struct ProtocolConfig {
  Method method = Method::nl;
  int n_agents = 2;       // debate width; the QA protocol is fixed at two
  int debate_rounds = 3;  // fixed-length debate
  int max_rounds = 5;     // QA protocol round cap
  int max_steps = 7;      // workflow step cap
  std::vector<int> layers;  // capture/injection layers for latent methods
  DecodeSettings decode;    // budget/sampling template; seeds are derived per agent+round
  TurnSyntax syntax;
  bool zero_payloads = false;   // zero-delta diagnostic
  std::uint64_t seed = 0;       // per-task seed (agents derive from it)
  Dtype wire_dtype = Dtype::f32;  // dtype used for byte accounting
  // Optional teacher forcing, indexed by agent id: scripted[id][k] replaces
  // agent id's (k+1)-th response.  The QA and debate protocols use agent ids
  // 0..n-1; the workflow uses one fresh agent per step with id = step, so
  // index 0 is unused there.  Capture, payloads, and injections still run.
  std::vector<std::vector<std::string>> scripted;
};

// Per-agent profile exactly as the debate driver builds it (exposed for
// tests: the weighted-embedding method applies the temperature ladder).
AgentProfile debate_profile(int agent, const ProtocolConfig& config);

struct RoundEntry {
  int round = 0;
  int agent = 0;
  Message message;
  std::vector<AppliedInjection> injections;  // applied while building this turn
  std::string observation;  // workflow only: the environment's reply
};

struct Transcript {
  std::vector<RoundEntry> entries;
  int rounds_run = 0;
  std::string termination;
  // Bytes-on-the-wire accounting over every communicated message.
  std::size_t token_bytes = 0;
  std::size_t latent_bytes = 0;
};

struct TaskResult {
  std::string question_id;
  Setting setting = Setting::ia;
  Transcript transcript;
  std::vector<std::string> final_responses;
  QuestionScore score;
};

// Stop once the text contains a complete \boxed{...}.
StopRule stop_on_boxed();
// Stop once the text contains a complete tool action (or starts
// hallucinating an Observation line).
StopRule stop_on_action();

// "Document i: <title>\n<text>" blocks, blank-line separated.
std::string render_documents(std::span<const Document> docs);

// Expands an item template around its "{message}" slot into
// literal / message-ref / literal segments.
std::vector<PromptSegment> message_item_segments(const std::string& item_template,
                                                 const std::string& message_id);

// Two agents with private document shards answer one question in up to
// max_rounds rounds.  Round 1 is independent; later rounds embed the peer's
// previous-round message.  Terminates early once any agent emits a final
// boxed answer; the terminal round's responses are scored.
TaskResult run_ia(const QuestionRecord& question, std::span<const Document> shard_a,
                  std::span<const Document> shard_b, const Model& model,
                  const Tokenizer& tokenizer, const PromptLibrary& prompts,
                  const ProtocolConfig& config);

// The matching baseline: each shard is answered by a standalone agent with
// no communication; scoring credits the better agent.
TaskResult run_ia_single(const QuestionRecord& question, std::span<const Document> shard_a,
                         std::span<const Document> shard_b, const Model& model,
                         const Tokenizer& tokenizer, const PromptLibrary& prompts,
                         const ProtocolConfig& config);

// n_agents debate for a fixed number of rounds; rounds >= 2 embed every
// other agent's previous-round message; the final round is scored.  With
// the weighted-embedding method, agent i samples at temperature
// (i+1)/n_agents times the configured one (response diversity).
TaskResult run_debate(const QuestionRecord& question, const Model& model,
                      const Tokenizer& tokenizer, const PromptLibrary& prompts,
                      const ProtocolConfig& config);

TaskResult run_debate_single(const QuestionRecord& question, const Model& model,
                             const Tokenizer& tokenizer, const PromptLibrary& prompts,
                             const ProtocolConfig& config);

// Tool workflow: up to max_steps Thought/Action steps, one fresh agent per
// step.  Each step's prompt replays the full history; earlier steps'
// messages are embedded as references, so latent methods hand their
// trajectories forward.  Ends on Finish[...] or the step cap (which scores
// zero).
TaskResult run_workflow(const QuestionRecord& question, const RetrievalIndex& index,
                        const Model& model, const Tokenizer& tokenizer,
                        const PromptLibrary& prompts, const ProtocolConfig& config);

// Direct-answer baseline without tools.
TaskResult run_workflow_single(const QuestionRecord& question, const Model& model,
                               const Tokenizer& tokenizer, const PromptLibrary& prompts,
                               const ProtocolConfig& config);

}  // namespace sde

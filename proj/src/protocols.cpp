// SPDX-License-Identifier: Apache-2.0
#include "sde/protocols.hpp"

#include <array>
#include <memory>
#include <stdexcept>
#include <utility>

#include "sde/rng.hpp"
#include "sde/wire.hpp"

namespace sde {

namespace {

constexpr const char* kInvalidActionObservation =
    "Invalid action. Expected Search[entity], Lookup[keyword], or Finish[answer].";

AgentProfile make_profile(int id, const ProtocolConfig& cfg) {
  AgentProfile profile;
  profile.id = id;
  profile.method = cfg.method;
  profile.layers = cfg.layers;
  profile.decode = cfg.decode;
  profile.decode.seed = rng::derive_seed(cfg.seed, static_cast<std::uint64_t>(id));
  profile.zero_payloads = cfg.zero_payloads;
  if (static_cast<std::size_t>(id) < cfg.scripted.size()) {
    profile.scripted_rounds = cfg.scripted[static_cast<std::size_t>(id)];
  }
  return profile;
}

// Bytes-on-the-wire for one communicated message.
void account(Transcript& transcript, const Message& message, Dtype dtype) {
  transcript.token_bytes += message.text.size();
  if (!std::holds_alternative<std::monostate>(message.payload)) {
    transcript.latent_bytes += serialize(to_wire(message.payload, dtype)).size();
  }
}

ChatTurn literal_turn(Role role, std::string text) {
  ChatTurn turn;
  turn.role = role;
  turn.segments.push_back(PromptSegment::lit(std::move(text)));
  return turn;
}

ChatTurn open_assistant(std::string prefix = {}) {
  ChatTurn turn;
  turn.role = Role::assistant;
  if (!prefix.empty()) turn.segments.push_back(PromptSegment::lit(std::move(prefix)));
  turn.open_ended = true;
  return turn;
}

bool has_final_answer(const std::string& text, AnswerFormat format) {
  return extract_answer(text, format).has_value();
}

// User turn whose body embeds peer messages at the {peer_blocks} slot.
ChatTurn peer_turn(const std::string& body, const std::string& item_template,
                   std::span<const std::string> peer_ids) {
  auto [pre, post] = split_at_slot(body, "peer_blocks");
  ChatTurn turn;
  turn.role = Role::user;
  if (!pre.empty()) turn.segments.push_back(PromptSegment::lit(pre));
  for (const std::string& id : peer_ids) {
    std::vector<PromptSegment> item = message_item_segments(item_template, id);
    turn.segments.insert(turn.segments.end(), item.begin(), item.end());
  }
  if (!post.empty()) turn.segments.push_back(PromptSegment::lit(post));
  return turn;
}

TemplateTurn require_role(const std::vector<TemplateTurn>& turns, std::size_t i,
                          Role role, const std::string& name) {
  if (i >= turns.size() || turns[i].role != role) {
    throw std::runtime_error("prompt template '" + name + "' has an unexpected shape");
  }
  return turns[i];
}

}  // namespace

StopRule stop_on_boxed() {
  return [](std::string_view text) {
    return extract_answer(text, AnswerFormat::boxed).has_value();
  };
}

StopRule stop_on_action() {
  return [](std::string_view text) {
    if (text.find("\nObservation") != std::string_view::npos) return true;
    return parse_action(text).action.has_value();
  };
}

std::string render_documents(std::span<const Document> docs) {
  if (docs.empty()) return "No documents.\n";
  std::string out;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    out += "Document " + std::to_string(i + 1) + ": " + docs[i].title + "\n";
    out += docs[i].text;
    out += "\n\n";
  }
  return out;
}

std::vector<PromptSegment> message_item_segments(const std::string& item_template,
                                                 const std::string& message_id) {
  auto [pre, post] = split_at_slot(item_template, "message");
  std::vector<PromptSegment> segments;
  if (!pre.empty()) segments.push_back(PromptSegment::lit(pre));
  segments.push_back(PromptSegment::ref(message_id));
  if (!post.empty()) segments.push_back(PromptSegment::lit(post));
  return segments;
}

TaskResult run_ia(const QuestionRecord& question, std::span<const Document> shard_a,
                  std::span<const Document> shard_b, const Model& model,
                  const Tokenizer& tokenizer, const PromptLibrary& prompts,
                  const ProtocolConfig& config) {
  if (config.n_agents != 2) {
    throw std::invalid_argument("run_ia: the document protocol is fixed at two agents");
  }
  const AnswerFormat format = format_for(Setting::ia, question.kind);
  const StopRule stop = stop_on_boxed();

  const std::string system_tpl =
      require_role(prompts.turns("ia_system"), 0, Role::system, "ia_system").body;
  const std::string round1_tpl =
      require_role(prompts.turns("ia_round1_user"), 0, Role::user, "ia_round1_user").body;
  const std::string roundk_tpl =
      require_role(prompts.turns("ia_roundk_user"), 0, Role::user, "ia_roundk_user").body;
  const std::string& item_tpl = prompts.text("ia_peer_item");

  TaskResult result;
  result.question_id = question.id;
  result.setting = Setting::ia;

  std::array<std::span<const Document>, 2> shards = {shard_a, shard_b};
  std::vector<std::unique_ptr<Agent>> agents;
  for (int i = 0; i < 2; ++i) {
    agents.push_back(std::make_unique<Agent>(model, tokenizer, config.syntax,
                                             make_profile(i, config)));
  }

  MessageStore store;
  std::array<std::string, 2> last_ids;
  bool answered = false;
  int round = 1;
  for (; round <= config.max_rounds && !answered; ++round) {
    std::array<std::string, 2> round_ids;
    for (int i = 0; i < 2; ++i) {
      std::vector<ChatTurn> turns;
      if (round == 1) {
        turns.push_back(literal_turn(
            Role::system,
            substitute_slots(system_tpl,
                             {{"documents", render_documents(shards[static_cast<std::size_t>(i)])}})));
        turns.push_back(literal_turn(
            Role::user, substitute_slots(round1_tpl, {{"question", question.question}})));
      } else {
        std::string body = substitute_slots(
            roundk_tpl,
            {{"round", std::to_string(round)}, {"question", question.question}});
        const std::string peer = last_ids[static_cast<std::size_t>(1 - i)];
        turns.push_back(peer_turn(body, item_tpl, std::span<const std::string>(&peer, 1)));
      }
      turns.push_back(open_assistant());

      RoundEntry entry;
      entry.round = round;
      entry.agent = i;
      entry.message = agents[static_cast<std::size_t>(i)]->respond(
          turns, store, round, stop, &entry.injections);
      account(result.transcript, entry.message, config.wire_dtype);
      round_ids[static_cast<std::size_t>(i)] = entry.message.id;
      store.put(entry.message);
      if (has_final_answer(entry.message.text, format)) answered = true;
      result.transcript.entries.push_back(std::move(entry));
    }
    last_ids = round_ids;
  }
  result.transcript.rounds_run = round - 1;
  result.transcript.termination =
      answered ? "answer in round " + std::to_string(round - 1) : "round cap";

  for (const std::string& id : last_ids) {
    result.final_responses.push_back(store.get(id).text);
  }
  result.score = score_question(question, Setting::ia, result.final_responses);
  return result;
}

TaskResult run_ia_single(const QuestionRecord& question, std::span<const Document> shard_a,
                         std::span<const Document> shard_b, const Model& model,
                         const Tokenizer& tokenizer, const PromptLibrary& prompts,
                         const ProtocolConfig& config) {
  const std::vector<TemplateTurn> tpl = prompts.turns("ia_single");
  const std::string system_tpl = require_role(tpl, 0, Role::system, "ia_single").body;
  const std::string user_tpl = require_role(tpl, 1, Role::user, "ia_single").body;

  TaskResult result;
  result.question_id = question.id;
  result.setting = Setting::ia_single;

  std::array<std::span<const Document>, 2> shards = {shard_a, shard_b};
  MessageStore store;
  for (int i = 0; i < 2; ++i) {
    AgentProfile profile = make_profile(i, config);
    profile.method = Method::nl;  // nothing is communicated
    profile.layers.clear();
    Agent agent(model, tokenizer, config.syntax, profile);
    std::vector<ChatTurn> turns;
    turns.push_back(literal_turn(
        Role::system,
        substitute_slots(system_tpl,
                         {{"documents", render_documents(shards[static_cast<std::size_t>(i)])}})));
    turns.push_back(literal_turn(
        Role::user, substitute_slots(user_tpl, {{"question", question.question}})));
    turns.push_back(open_assistant());

    RoundEntry entry;
    entry.round = 1;
    entry.agent = i;
    entry.message = agent.respond(turns, store, 1, stop_on_boxed(), &entry.injections);
    result.final_responses.push_back(entry.message.text);
    result.transcript.entries.push_back(std::move(entry));
  }
  result.transcript.rounds_run = 1;
  result.transcript.termination = "single";
  result.score = score_question(question, Setting::ia_single, result.final_responses);
  return result;
}

namespace {

const char* debate_round1_name(QuestionKind kind) {
  return kind == QuestionKind::choice ? "debate_choice_round1" : "debate_math_round1";
}
const char* debate_roundk_name(QuestionKind kind) {
  return kind == QuestionKind::choice ? "debate_choice_roundk" : "debate_math_roundk";
}

}  // namespace

AgentProfile debate_profile(int agent, const ProtocolConfig& config) {
  AgentProfile profile = make_profile(agent, config);
  if (config.method == Method::cipher) {
    // Temperature ladder keeps soft responses diverse across agents.
    profile.decode.temperature = config.decode.temperature *
                                 static_cast<float>(agent + 1) /
                                 static_cast<float>(config.n_agents);
  }
  return profile;
}

TaskResult run_debate(const QuestionRecord& question, const Model& model,
                      const Tokenizer& tokenizer, const PromptLibrary& prompts,
                      const ProtocolConfig& config) {
  if (config.n_agents < 2) {
    throw std::invalid_argument("run_debate: needs at least two agents");
  }
  if (config.debate_rounds < 1) {
    throw std::invalid_argument("run_debate: needs at least one round");
  }
  const AnswerFormat format = format_for(Setting::debate, question.kind);
  const StopRule stop = format == AnswerFormat::boxed ? stop_on_boxed() : StopRule{};

  const std::string round1_tpl =
      require_role(prompts.turns(debate_round1_name(question.kind)), 0, Role::user,
                   debate_round1_name(question.kind))
          .body;
  const std::string roundk_tpl =
      require_role(prompts.turns(debate_roundk_name(question.kind)), 0, Role::user,
                   debate_roundk_name(question.kind))
          .body;
  const std::string& item_tpl = prompts.text("debate_peer_item");

  TaskResult result;
  result.question_id = question.id;
  result.setting = Setting::debate;

  std::vector<std::unique_ptr<Agent>> agents;
  for (int i = 0; i < config.n_agents; ++i) {
    agents.push_back(std::make_unique<Agent>(model, tokenizer, config.syntax,
                                             debate_profile(i, config)));
  }

  MessageStore store;
  std::vector<std::string> last_ids(static_cast<std::size_t>(config.n_agents));
  for (int round = 1; round <= config.debate_rounds; ++round) {
    std::vector<std::string> round_ids(static_cast<std::size_t>(config.n_agents));
    for (int i = 0; i < config.n_agents; ++i) {
      std::vector<ChatTurn> turns;
      if (round == 1) {
        turns.push_back(literal_turn(
            Role::user, substitute_slots(round1_tpl, {{"question", question.question}})));
      } else {
        std::vector<std::string> peers;
        for (int j = 0; j < config.n_agents; ++j) {
          if (j != i) peers.push_back(last_ids[static_cast<std::size_t>(j)]);
        }
        std::string body = substitute_slots(roundk_tpl, {{"round", std::to_string(round)}});
        turns.push_back(peer_turn(body, item_tpl, peers));
      }
      turns.push_back(open_assistant());

      RoundEntry entry;
      entry.round = round;
      entry.agent = i;
      entry.message = agents[static_cast<std::size_t>(i)]->respond(
          turns, store, round, stop, &entry.injections);
      account(result.transcript, entry.message, config.wire_dtype);
      round_ids[static_cast<std::size_t>(i)] = entry.message.id;
      store.put(entry.message);
      result.transcript.entries.push_back(std::move(entry));
    }
    last_ids = round_ids;
  }
  result.transcript.rounds_run = config.debate_rounds;
  result.transcript.termination = "fixed rounds";

  for (const std::string& id : last_ids) {
    result.final_responses.push_back(store.get(id).text);
  }
  result.score = score_question(question, Setting::debate, result.final_responses);
  return result;
}

TaskResult run_debate_single(const QuestionRecord& question, const Model& model,
                             const Tokenizer& tokenizer, const PromptLibrary& prompts,
                             const ProtocolConfig& config) {
  const AnswerFormat format = format_for(Setting::debate_single, question.kind);
  const StopRule stop = format == AnswerFormat::boxed ? stop_on_boxed() : StopRule{};
  const std::string round1_tpl =
      require_role(prompts.turns(debate_round1_name(question.kind)), 0, Role::user,
                   debate_round1_name(question.kind))
          .body;

  TaskResult result;
  result.question_id = question.id;
  result.setting = Setting::debate_single;

  AgentProfile profile = make_profile(0, config);
  profile.method = Method::nl;
  profile.layers.clear();
  Agent agent(model, tokenizer, config.syntax, profile);
  MessageStore store;
  std::vector<ChatTurn> turns;
  turns.push_back(literal_turn(
      Role::user, substitute_slots(round1_tpl, {{"question", question.question}})));
  turns.push_back(open_assistant());

  RoundEntry entry;
  entry.round = 1;
  entry.agent = 0;
  entry.message = agent.respond(turns, store, 1, stop, &entry.injections);
  result.final_responses.push_back(entry.message.text);
  result.transcript.entries.push_back(std::move(entry));
  result.transcript.rounds_run = 1;
  result.transcript.termination = "single";
  result.score = score_question(question, Setting::debate_single, result.final_responses);
  return result;
}

namespace {

const char* workflow_header_name(QuestionKind kind) {
  return kind == QuestionKind::label ? "workflow_react_fever" : "workflow_react_qa";
}
const char* workflow_examples_name(QuestionKind kind) {
  return kind == QuestionKind::label ? "workflow_examples_fever" : "workflow_examples_qa";
}

}  // namespace

TaskResult run_workflow(const QuestionRecord& question, const RetrievalIndex& index,
                        const Model& model, const Tokenizer& tokenizer,
                        const PromptLibrary& prompts, const ProtocolConfig& config) {
  const std::vector<TemplateTurn> tpl = prompts.turns(workflow_header_name(question.kind));
  const std::string system_tpl =
      require_role(tpl, 0, Role::system, workflow_header_name(question.kind)).body;
  const std::string user_tpl =
      require_role(tpl, 1, Role::user, workflow_header_name(question.kind)).body;
  const std::string system_body = substitute_slots(
      system_tpl, {{"examples", prompts.text(workflow_examples_name(question.kind))}});
  const std::string user_body =
      substitute_slots(user_tpl, {{"question", question.question}});

  TaskResult result;
  result.question_id = question.id;
  result.setting = Setting::workflow;

  MessageStore store;
  EnvState env;
  // (message id, observation) per completed step, replayed into each prompt.
  std::vector<std::pair<std::string, std::string>> history;
  const StopRule stop = stop_on_action();

  int step = 1;
  for (; step <= config.max_steps; ++step) {
    ChatTurn user;
    user.role = Role::user;
    auto [pre, post] = split_at_slot(user_body, "history");
    if (!pre.empty()) user.segments.push_back(PromptSegment::lit(pre));
    for (std::size_t j = 0; j < history.size(); ++j) {
      user.segments.push_back(
          PromptSegment::lit("Thought " + std::to_string(j + 1) + ":"));
      user.segments.push_back(PromptSegment::ref(history[j].first));
      user.segments.push_back(PromptSegment::lit(
          "\nObservation " + std::to_string(j + 1) + ": " + history[j].second + "\n"));
    }
    if (!post.empty()) user.segments.push_back(PromptSegment::lit(post));

    std::vector<ChatTurn> turns;
    turns.push_back(literal_turn(Role::system, system_body));
    turns.push_back(std::move(user));
    turns.push_back(open_assistant("Thought " + std::to_string(step) + ":"));

    // A fresh agent per step: the latent hand-off must survive a cold
    // prompt replay, which is exactly what the embedded references carry.
    Agent agent(model, tokenizer, config.syntax, make_profile(step, config));
    RoundEntry entry;
    entry.round = step;
    entry.agent = step;
    entry.message = agent.respond(turns, store, step, stop, &entry.injections);
    account(result.transcript, entry.message, config.wire_dtype);
    store.put(entry.message);

    ActionParse parsed = parse_action(entry.message.text);
    std::string observation;
    bool finished = false;
    if (!parsed.action.has_value()) {
      observation = kInvalidActionObservation;
    } else {
      observation = env_step(env, index, *parsed.action);
      finished = env.finished;
    }
    entry.observation = observation;
    history.emplace_back(entry.message.id, observation);
    result.transcript.entries.push_back(std::move(entry));
    if (finished) break;
  }
  const bool finished = env.finished;
  result.transcript.rounds_run = static_cast<int>(history.size());
  result.transcript.termination =
      finished ? "finished at step " + std::to_string(result.transcript.rounds_run)
               : "step cap";

  // The environment is authoritative: without Finish the task scores zero.
  result.final_responses.push_back(finished ? "Finish[" + env.final_answer + "]"
                                            : std::string{});
  result.score = score_question(question, Setting::workflow, result.final_responses);
  return result;
}

TaskResult run_workflow_single(const QuestionRecord& question, const Model& model,
                               const Tokenizer& tokenizer, const PromptLibrary& prompts,
                               const ProtocolConfig& config) {
  const char* name =
      question.kind == QuestionKind::label ? "workflow_single_fever" : "workflow_single_qa";
  const std::string user_tpl = require_role(prompts.turns(name), 0, Role::user, name).body;

  TaskResult result;
  result.question_id = question.id;
  result.setting = Setting::workflow_single;

  AgentProfile profile = make_profile(0, config);
  profile.method = Method::nl;
  profile.layers.clear();
  Agent agent(model, tokenizer, config.syntax, profile);
  MessageStore store;
  std::vector<ChatTurn> turns;
  turns.push_back(literal_turn(
      Role::user, substitute_slots(user_tpl, {{"question", question.question}})));
  turns.push_back(open_assistant());

  RoundEntry entry;
  entry.round = 1;
  entry.agent = 0;
  entry.message = agent.respond(turns, store, 1, stop_on_boxed(), &entry.injections);
  result.final_responses.push_back(entry.message.text);
  result.transcript.entries.push_back(std::move(entry));
  result.transcript.rounds_run = 1;
  result.transcript.termination = "single";
  result.score = score_question(question, Setting::workflow_single, result.final_responses);
  return result;
}

}  // namespace sde

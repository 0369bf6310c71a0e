// SPDX-License-Identifier: Apache-2.0
#include "sde/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>
#include <utility>
#include <variant>

#include "json.hpp"
#include "sde/rng.hpp"

namespace sde {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw std::runtime_error("cannot open " + path);
  }
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

// Write-to-sibling-then-rename so readers never observe a torn file.
void write_file_atomic(const fs::path& path, const std::string& content) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw std::runtime_error("cannot write " + tmp.string());
    }
    out << content;
    out.flush();
    if (!out) {
      throw std::runtime_error("short write to " + tmp.string());
    }
  }
  fs::rename(tmp, path);
}

std::vector<std::string> complete_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::size_t begin = 0;
  for (;;) {
    const std::size_t end = text.find('\n', begin);
    if (end == std::string::npos) {
      break;  // a trailing chunk without newline is an unfinished record
    }
    lines.push_back(text.substr(begin, end - begin));
    begin = end + 1;
  }
  return lines;
}

std::string dtype_tag(Dtype d) { return d == Dtype::f16 ? "f16" : "f32"; }

Dtype parse_dtype_tag(const std::string& s) {
  if (s == "f32") {
    return Dtype::f32;
  }
  if (s == "f16") {
    return Dtype::f16;
  }
  throw std::invalid_argument("unknown dtype: " + s);
}

std::string mode_name(DecodeMode m) {
  switch (m) {
    case DecodeMode::greedy:
      return "greedy";
    case DecodeMode::sampled:
      return "sampled";
    case DecodeMode::cipher:
      return "cipher";
  }
  throw std::logic_error("unhandled decode mode");
}

DecodeMode parse_mode(const std::string& s) {
  if (s == "greedy") {
    return DecodeMode::greedy;
  }
  if (s == "sampled") {
    return DecodeMode::sampled;
  }
  if (s == "cipher") {
    return DecodeMode::cipher;
  }
  throw std::invalid_argument("unknown decode mode: " + s);
}

void require_keys(const json& j, const std::set<std::string>& allowed, const char* where) {
  for (const auto& item : j.items()) {
    if (!allowed.count(item.key())) {
      throw std::invalid_argument(std::string("unknown ") + where + " key: " + item.key());
    }
  }
}

json model_spec_json(const ModelSpec& spec) {
  json j;
  j["kind"] = spec.kind;
  j["path"] = spec.path;
  j["seed"] = spec.seed;
  j["n_layers"] = spec.config.n_layers;
  j["d_model"] = spec.config.d_model;
  j["n_heads"] = spec.config.n_heads;
  j["vocab_size"] = spec.config.vocab_size;
  j["max_seq"] = spec.config.max_seq;
  j["dtype"] = dtype_tag(spec.config.dtype);
  j["norm_eps"] = spec.config.norm_eps;
  return j;
}

ModelSpec model_spec_from(const json& j) {
  require_keys(j,
               {"kind", "path", "seed", "n_layers", "d_model", "n_heads", "vocab_size",
                "max_seq", "dtype", "norm_eps"},
               "model");
  ModelSpec spec;
  spec.kind = j.value("kind", std::string("toy"));
  spec.path = j.value("path", std::string());
  spec.seed = j.value("seed", std::uint64_t{1});
  spec.config.n_layers = j.value("n_layers", spec.config.n_layers);
  spec.config.d_model = j.value("d_model", spec.config.d_model);
  spec.config.n_heads = j.value("n_heads", spec.config.n_heads);
  spec.config.vocab_size = j.value("vocab_size", spec.config.vocab_size);
  spec.config.max_seq = j.value("max_seq", spec.config.max_seq);
  spec.config.dtype = parse_dtype_tag(j.value("dtype", std::string("f32")));
  spec.config.norm_eps = j.value("norm_eps", spec.config.norm_eps);
  return spec;
}

json decode_json(const DecodeSettings& d) {
  json j;
  j["mode"] = mode_name(d.mode);
  j["temperature"] = d.temperature;
  j["top_p"] = d.top_p;
  j["top_k"] = d.top_k;
  j["repetition_penalty"] = d.repetition_penalty;
  j["max_new_tokens"] = d.max_new_tokens;
  j["seed"] = d.seed;
  return j;
}

DecodeSettings decode_from(const json& j) {
  require_keys(j,
               {"mode", "temperature", "top_p", "top_k", "repetition_penalty",
                "max_new_tokens", "seed"},
               "decode");
  DecodeSettings d;
  d.mode = parse_mode(j.value("mode", std::string("greedy")));
  d.temperature = j.value("temperature", d.temperature);
  d.top_p = j.value("top_p", d.top_p);
  d.top_k = j.value("top_k", d.top_k);
  d.repetition_penalty = j.value("repetition_penalty", d.repetition_penalty);
  d.max_new_tokens = j.value("max_new_tokens", d.max_new_tokens);
  d.seed = j.value("seed", d.seed);
  return d;
}

json config_json_obj(const ExperimentConfig& cfg) {
  json j;
  j["name"] = cfg.name;
  j["task"] = task_name(cfg.task);
  if (cfg.task == TaskKind::single) {
    j["single_of"] = task_name(cfg.single_of);
  }
  j["method"] = method_name(cfg.method);
  j["model"] = model_spec_json(cfg.model);
  j["layers"] = cfg.layers;
  if (cfg.strategy) {
    j["strategy"] = strategy_name(*cfg.strategy);
  }
  j["strategy_k"] = cfg.strategy_k;
  j["ranking"] = cfg.ranking;
  j["n_agents"] = cfg.n_agents;
  j["debate_rounds"] = cfg.debate_rounds;
  j["max_rounds"] = cfg.max_rounds;
  j["max_steps"] = cfg.max_steps;
  j["decode"] = decode_json(cfg.decode);
  j["dataset"] = cfg.dataset_path;
  j["corpus"] = cfg.corpus_path;
  j["vocab"] = cfg.vocab_path;
  j["prompts_dir"] = cfg.prompts_dir;
  j["retrieval_k"] = cfg.retrieval_k;
  j["limit"] = cfg.limit;
  j["seeds"] = cfg.seeds;
  j["wire_dtype"] = dtype_tag(cfg.wire_dtype);
  j["zero_payloads"] = cfg.zero_payloads;
  j["out_dir"] = cfg.out_dir;
  j["threads"] = cfg.threads;
  return j;
}

ExperimentConfig config_from_json_obj(const json& j) {
  require_keys(j,
               {"name",       "task",        "single_of",     "method",      "model",
                "layers",     "strategy",    "strategy_k",    "ranking",     "n_agents",
                "debate_rounds", "max_rounds", "max_steps",   "decode",      "dataset",
                "corpus",     "vocab",       "prompts_dir",   "retrieval_k", "limit",
                "seeds",      "wire_dtype",  "zero_payloads", "out_dir",     "threads"},
               "config");
  ExperimentConfig cfg;
  cfg.name = j.value("name", cfg.name);

  const std::string task_s = j.value("task", std::string("ia"));
  const std::string method_s = j.value("method", std::string("nl"));
  if (method_s == "single") {
    const TaskKind base = parse_task(task_s);
    if (base == TaskKind::single) {
      cfg.single_of = parse_task(j.value("single_of", std::string("ia")));
    } else if (base == TaskKind::ia || base == TaskKind::debate || base == TaskKind::workflow) {
      cfg.single_of = base;
    } else {
      throw std::invalid_argument("method \"single\" requires task ia, debate, or workflow");
    }
    cfg.task = TaskKind::single;
    cfg.method = Method::nl;
  } else {
    cfg.task = parse_task(task_s);
    cfg.method = parse_method(method_s);
    if (cfg.task == TaskKind::single) {
      cfg.single_of = parse_task(j.value("single_of", std::string("ia")));
      if (cfg.single_of != TaskKind::ia && cfg.single_of != TaskKind::debate &&
          cfg.single_of != TaskKind::workflow) {
        throw std::invalid_argument("single_of must name a protocol task");
      }
      cfg.method = Method::nl;  // the baselines do not communicate
    }
  }

  if (j.contains("model")) {
    cfg.model = model_spec_from(j.at("model"));
  }
  cfg.layers = j.value("layers", cfg.layers);
  if (j.contains("strategy")) {
    cfg.strategy = parse_strategy(j.at("strategy").get<std::string>());
  }
  cfg.strategy_k = j.value("strategy_k", cfg.strategy_k);
  cfg.ranking = j.value("ranking", cfg.ranking);
  cfg.n_agents = j.value("n_agents", cfg.n_agents);
  cfg.debate_rounds = j.value("debate_rounds", cfg.debate_rounds);
  cfg.max_rounds = j.value("max_rounds", cfg.max_rounds);
  cfg.max_steps = j.value("max_steps", cfg.max_steps);
  if (j.contains("decode")) {
    cfg.decode = decode_from(j.at("decode"));
  }
  cfg.dataset_path = j.value("dataset", cfg.dataset_path);
  cfg.corpus_path = j.value("corpus", cfg.corpus_path);
  cfg.vocab_path = j.value("vocab", cfg.vocab_path);
  cfg.prompts_dir = j.value("prompts_dir", cfg.prompts_dir);
  cfg.retrieval_k = j.value("retrieval_k", cfg.retrieval_k);
  cfg.limit = j.value("limit", cfg.limit);
  cfg.seeds = j.value("seeds", cfg.seeds);
  cfg.wire_dtype = parse_dtype_tag(j.value("wire_dtype", std::string("f32")));
  cfg.zero_payloads = j.value("zero_payloads", cfg.zero_payloads);
  cfg.out_dir = j.value("out_dir", cfg.out_dir);
  cfg.threads = j.value("threads", cfg.threads);
  return cfg;
}

json summary_json(const Summary& s) {
  json j;
  j["em"] = s.em;
  j["f1"] = s.f1;
  j["formatted_rate"] = s.formatted_rate;
  j["n_questions"] = s.n_questions;
  j["n_runs"] = s.n_runs;
  return j;
}

Summary summary_from(const json& j) {
  Summary s;
  s.em = j.at("em");
  s.f1 = j.at("f1");
  s.formatted_rate = j.at("formatted_rate");
  s.n_questions = j.at("n_questions");
  s.n_runs = j.at("n_runs");
  return s;
}

json sweep_json(const SweepOutcome& sweep) {
  json table = json::array();
  for (const auto& [layer, score] : sweep.table) {
    json row;
    row["layer"] = layer;
    row["em"] = score.em;
    row["f1"] = score.f1;
    table.push_back(row);
  }
  json j;
  j["table"] = table;
  j["ranking"] = sweep.ranking;
  j["selected"] = sweep.selected;
  return j;
}

SweepOutcome sweep_from(const json& j) {
  SweepOutcome sweep;
  for (const json& row : j.at("table")) {
    sweep.table[row.at("layer").get<int>()] =
        LayerScore{row.at("em").get<double>(), row.at("f1").get<double>()};
  }
  sweep.ranking = j.at("ranking").get<std::vector<int>>();
  sweep.selected = j.at("selected").get<std::vector<int>>();
  return sweep;
}

bool multi_agent_setting(Setting s) {
  return s == Setting::ia || s == Setting::debate || s == Setting::workflow;
}

// Generated text is an arbitrary byte string (byte-level token ids cover
// 0..255), but JSON strings must be valid UTF-8.  Each byte becomes the
// same-numbered code point (Latin-1 -> UTF-8), which is deterministic,
// reversible, and leaves plain ASCII untouched.
std::string utf8_of_bytes(std::string_view bytes) {
  std::string out;
  out.reserve(bytes.size());
  for (const char raw : bytes) {
    const unsigned char c = static_cast<unsigned char>(raw);
    if (c < 0x80) {
      out.push_back(raw);
    } else {
      out.push_back(static_cast<char>(0xC0 | (c >> 6)));
      out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
    }
  }
  return out;
}

std::size_t message_latent_bytes(const Message& message, Dtype dtype) {
  if (std::holds_alternative<std::monostate>(message.payload)) {
    return 0;
  }
  return serialize(to_wire(message.payload, dtype)).size();
}

// One JSONL line per question.  Key order is alphabetical (stable), which
// makes greedy reruns byte-comparable.
json record_json(const TaskResult& result, int run_idx, std::uint64_t run_seed,
                 const ExperimentConfig& cfg) {
  const bool multi = multi_agent_setting(result.setting);
  json entries = json::array();
  for (const RoundEntry& e : result.transcript.entries) {
    json je;
    je["round"] = e.round;
    je["agent"] = e.agent;
    je["message_id"] = e.message.id;
    je["text"] = utf8_of_bytes(e.message.text);
    je["observation"] = utf8_of_bytes(e.observation);
    json injected = json::array();
    for (const AppliedInjection& inj : e.injections) {
      injected.push_back(inj.message_id);
    }
    je["injected_from"] = injected;
    je["token_bytes"] = multi ? e.message.text.size() : 0;
    je["latent_bytes"] = multi ? message_latent_bytes(e.message, cfg.wire_dtype) : 0;
    entries.push_back(je);
  }

  json j;
  j["question_id"] = result.question_id;
  j["run"] = run_idx;
  j["seed"] = run_seed;
  j["setting"] = setting_name(result.setting);
  json finals = json::array();
  for (const std::string& text : result.final_responses) {
    finals.push_back(utf8_of_bytes(text));
  }
  j["final_responses"] = finals;
  j["response_em"] = result.score.response_em;
  j["response_f1"] = result.score.response_f1;
  j["formatted"] = result.score.response_formatted;
  j["em"] = result.score.em;
  j["f1"] = result.score.f1;
  j["rounds"] = result.transcript.rounds_run;
  j["termination"] = result.transcript.termination;
  j["token_bytes"] = result.transcript.token_bytes;
  j["latent_bytes"] = result.transcript.latent_bytes;
  j["entries"] = entries;
  return j;
}

QuestionScore score_from_record(const json& j) {
  QuestionScore s;
  s.question_id = j.at("question_id");
  s.response_em = j.at("response_em").get<std::vector<double>>();
  s.response_f1 = j.at("response_f1").get<std::vector<double>>();
  s.response_formatted = j.at("formatted").get<std::vector<bool>>();
  s.em = j.at("em");
  s.f1 = j.at("f1");
  return s;
}

bool needs_corpus(const ExperimentConfig& cfg) {
  if (cfg.task == TaskKind::ia || cfg.task == TaskKind::workflow ||
      cfg.task == TaskKind::layer_sweep) {
    return true;
  }
  return cfg.task == TaskKind::single && cfg.single_of == TaskKind::ia;
}

struct RunContext {
  const ExperimentConfig* cfg = nullptr;
  const Model* model = nullptr;
  const Tokenizer* tokenizer = nullptr;
  const std::vector<QuestionRecord>* questions = nullptr;
  const RetrievalIndex* index = nullptr;  // null when the task needs none
  std::vector<int> layers;
  Setting setting = Setting::ia;
};

struct RecordOut {
  std::string line;
  QuestionScore score;
  std::size_t token_bytes = 0;
  std::size_t latent_bytes = 0;
};

RecordOut run_one(const RunContext& ctx, const PromptLibrary& prompts, int question_idx,
                  int run_idx) {
  const ExperimentConfig& cfg = *ctx.cfg;
  const QuestionRecord& question = (*ctx.questions)[static_cast<std::size_t>(question_idx)];

  ProtocolConfig pc;
  pc.method = cfg.method;
  pc.n_agents = cfg.n_agents;
  pc.debate_rounds = cfg.debate_rounds;
  pc.max_rounds = cfg.max_rounds;
  pc.max_steps = cfg.max_steps;
  pc.layers = ctx.layers;
  pc.decode = cfg.decode;
  pc.zero_payloads = cfg.zero_payloads;
  pc.wire_dtype = cfg.wire_dtype;
  // Seed chain: per-run seed -> per-question seed; agents derive per-agent
  // and per-round streams below this.
  pc.seed = rng::derive_seed(cfg.seeds[static_cast<std::size_t>(run_idx)],
                             static_cast<std::uint64_t>(question_idx));

  TaskResult result;
  switch (ctx.setting) {
    case Setting::ia:
    case Setting::ia_single: {
      const std::vector<ScoredDoc> ranked =
          ctx.index->retrieve(question.question, cfg.retrieval_k);
      const auto [shard_a, shard_b] = shard_docs(*ctx.index, ranked);
      result = ctx.setting == Setting::ia
                   ? run_ia(question, shard_a, shard_b, *ctx.model, *ctx.tokenizer, prompts, pc)
                   : run_ia_single(question, shard_a, shard_b, *ctx.model, *ctx.tokenizer,
                                   prompts, pc);
      break;
    }
    case Setting::debate:
      result = run_debate(question, *ctx.model, *ctx.tokenizer, prompts, pc);
      break;
    case Setting::debate_single:
      result = run_debate_single(question, *ctx.model, *ctx.tokenizer, prompts, pc);
      break;
    case Setting::workflow:
      result = run_workflow(question, *ctx.index, *ctx.model, *ctx.tokenizer, prompts, pc);
      break;
    case Setting::workflow_single:
      result = run_workflow_single(question, *ctx.model, *ctx.tokenizer, prompts, pc);
      break;
  }

  const json j = record_json(result, run_idx,
                             cfg.seeds[static_cast<std::size_t>(run_idx)], cfg);
  RecordOut out;
  out.line = j.dump();
  out.score = result.score;
  out.token_bytes = result.transcript.token_bytes;
  out.latent_bytes = result.transcript.latent_bytes;
  return out;
}

struct RunData {
  std::vector<QuestionScore> scores;
  std::size_t token_bytes = 0;
  std::size_t latent_bytes = 0;
};

// Executes one seed's pass over the dataset, resuming from existing records.
RunData execute_run(const RunContext& ctx, int run_idx, const fs::path& dir,
                    const std::string& records_name) {
  const ExperimentConfig& cfg = *ctx.cfg;
  const int n = static_cast<int>(ctx.questions->size());
  const fs::path final_path = dir / records_name;
  const fs::path partial_path = dir / (records_name + ".partial");

  std::vector<std::string> existing;
  bool complete = false;
  if (fs::exists(final_path)) {
    existing = complete_lines(read_file(final_path.string()));
    if (static_cast<int>(existing.size()) != n) {
      throw std::runtime_error(final_path.string() + " holds " +
                               std::to_string(existing.size()) + " records but the dataset has " +
                               std::to_string(n) + "; remove it to rerun");
    }
    complete = true;
  } else if (fs::exists(partial_path)) {
    existing = complete_lines(read_file(partial_path.string()));
    if (static_cast<int>(existing.size()) > n) {
      throw std::runtime_error(partial_path.string() + " holds more records than the dataset; " +
                               "remove it to rerun");
    }
  }

  RunData data;
  for (std::size_t i = 0; i < existing.size(); ++i) {
    const json j = json::parse(existing[i]);
    if (j.at("question_id") != (*ctx.questions)[i].id ||
        j.at("run").get<int>() != run_idx ||
        j.at("seed").get<std::uint64_t>() != cfg.seeds[static_cast<std::size_t>(run_idx)]) {
      throw std::runtime_error("record " + std::to_string(i + 1) + " in " +
                               (complete ? final_path : partial_path).string() +
                               " does not match the configured dataset/seeds; remove it to rerun");
    }
    data.scores.push_back(score_from_record(j));
    data.token_bytes += j.at("token_bytes").get<std::size_t>();
    data.latent_bytes += j.at("latent_bytes").get<std::size_t>();
  }
  if (complete) {
    return data;
  }

  std::ofstream out(partial_path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw std::runtime_error("cannot write " + partial_path.string());
  }
  for (const std::string& line : existing) {
    out << line << '\n';
  }
  out.flush();

  const int start = static_cast<int>(existing.size());
  auto commit = [&](RecordOut&& rec) {
    out << rec.line << '\n';
    out.flush();
    if (!out) {
      throw std::runtime_error("short write to " + partial_path.string());
    }
    data.scores.push_back(std::move(rec.score));
    data.token_bytes += rec.token_bytes;
    data.latent_bytes += rec.latent_bytes;
  };

  if (cfg.threads <= 1 || n - start <= 1) {
    PromptLibrary prompts(cfg.prompts_dir);
    for (int i = start; i < n; ++i) {
      commit(run_one(ctx, prompts, i, run_idx));
    }
  } else {
    // Workers race through the question list; the coordinator commits lines
    // strictly in dataset order so records files stay deterministic.
    std::atomic<int> next{start};
    std::mutex mu;
    std::condition_variable cv;
    std::map<int, RecordOut> ready;
    std::exception_ptr error;

    const int n_workers = std::min(cfg.threads, n - start);
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(n_workers));
    for (int w = 0; w < n_workers; ++w) {
      pool.emplace_back([&] {
        try {
          PromptLibrary prompts(cfg.prompts_dir);  // per-worker template cache
          for (;;) {
            const int i = next.fetch_add(1);
            if (i >= n) {
              return;
            }
            RecordOut rec = run_one(ctx, prompts, i, run_idx);
            {
              std::lock_guard<std::mutex> lock(mu);
              ready.emplace(i, std::move(rec));
            }
            cv.notify_all();
          }
        } catch (...) {
          {
            std::lock_guard<std::mutex> lock(mu);
            if (!error) {
              error = std::current_exception();
            }
          }
          next.store(n);
          cv.notify_all();
        }
      });
    }

    for (int i = start; i < n; ++i) {
      std::unique_lock<std::mutex> lock(mu);
      cv.wait(lock, [&] { return error || ready.count(i) > 0; });
      if (error) {
        break;
      }
      RecordOut rec = std::move(ready.at(i));
      ready.erase(i);
      lock.unlock();
      commit(std::move(rec));
    }
    for (std::thread& t : pool) {
      t.join();
    }
    if (error) {
      std::rethrow_exception(error);
    }
  }

  out.close();
  fs::rename(partial_path, final_path);
  return data;
}

std::string checksum_hex(std::uint64_t checksum) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(checksum));
  return buf;
}

std::string csv_num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string join_ints(const std::vector<int>& v, char sep) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i > 0) {
      out += sep;
    }
    out += std::to_string(v[i]);
  }
  return out;
}

}  // namespace

std::string task_name(TaskKind k) {
  switch (k) {
    case TaskKind::ia:
      return "ia";
    case TaskKind::debate:
      return "debate";
    case TaskKind::workflow:
      return "workflow";
    case TaskKind::single:
      return "single";
    case TaskKind::layer_sweep:
      return "layer-sweep";
  }
  throw std::logic_error("unhandled task kind");
}

TaskKind parse_task(const std::string& name) {
  if (name == "ia") {
    return TaskKind::ia;
  }
  if (name == "debate") {
    return TaskKind::debate;
  }
  if (name == "workflow") {
    return TaskKind::workflow;
  }
  if (name == "single") {
    return TaskKind::single;
  }
  if (name == "layer-sweep" || name == "layer_sweep") {
    return TaskKind::layer_sweep;
  }
  throw std::invalid_argument("unknown task: " + name);
}

Model realize_model(const ModelSpec& spec) {
  if (spec.kind == "toy") {
    spec.config.validate();
    return Model::build_toy(spec.config, spec.seed);
  }
  if (spec.kind == "file") {
    if (spec.path.empty()) {
      throw std::invalid_argument("model kind \"file\" needs a path");
    }
    return load_model(spec.path);
  }
  throw std::invalid_argument("unknown model kind: " + spec.kind);
}

std::string config_to_json(const ExperimentConfig& cfg) {
  return config_json_obj(cfg).dump(2) + "\n";
}

ExperimentConfig config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) {
    throw std::invalid_argument("config must be a JSON object");
  }
  return config_from_json_obj(j);
}

ExperimentConfig load_config_file(const std::string& path) {
  return config_from_json(read_file(path));
}

void apply_env_overrides(ExperimentConfig& cfg) {
  if (const char* out = std::getenv("SDE_OUT_DIR"); out != nullptr && *out != '\0') {
    cfg.out_dir = out;
  }
  if (const char* threads = std::getenv("SDE_THREADS"); threads != nullptr && *threads != '\0') {
    char* end = nullptr;
    const long value = std::strtol(threads, &end, 10);
    if (end == threads || *end != '\0' || value < 1 || value > 256) {
      throw std::invalid_argument("SDE_THREADS must be an integer in [1, 256], got: " +
                                  std::string(threads));
    }
    cfg.threads = static_cast<int>(value);
  }
}

void validate_config(const ExperimentConfig& cfg) {
  if (cfg.name.empty() ||
      cfg.name.find_first_not_of(
          "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789._-") !=
          std::string::npos) {
    throw std::invalid_argument("name must be non-empty and use only [A-Za-z0-9._-]");
  }
  if (cfg.dataset_path.empty()) {
    throw std::invalid_argument("dataset path is required");
  }
  if (needs_corpus(cfg) && cfg.corpus_path.empty()) {
    throw std::invalid_argument("task " + task_name(cfg.task) + " requires a corpus path");
  }
  if (cfg.seeds.empty()) {
    throw std::invalid_argument("at least one seed is required");
  }
  if (cfg.task == TaskKind::ia && cfg.n_agents != 2) {
    throw std::invalid_argument("the information-asymmetry task is fixed at 2 agents");
  }
  if (cfg.n_agents < 1) {
    throw std::invalid_argument("n_agents must be positive");
  }
  if (cfg.debate_rounds < 1 || cfg.max_rounds < 1 || cfg.max_steps < 1) {
    throw std::invalid_argument("round/step caps must be positive");
  }
  if (cfg.decode.max_new_tokens < 1) {
    throw std::invalid_argument("decode.max_new_tokens must be positive");
  }
  if (cfg.retrieval_k < 1) {
    throw std::invalid_argument("retrieval_k must be positive");
  }
  if (cfg.limit < 0) {
    throw std::invalid_argument("limit must be non-negative");
  }
  if (cfg.threads < 1) {
    throw std::invalid_argument("threads must be positive");
  }
  if (cfg.strategy && cfg.ranking.empty() && cfg.layers.empty() &&
      cfg.task != TaskKind::layer_sweep) {
    throw std::invalid_argument("a layer strategy needs a best-first ranking");
  }
  if (cfg.task == TaskKind::single &&
      (cfg.single_of == TaskKind::single || cfg.single_of == TaskKind::layer_sweep)) {
    throw std::invalid_argument("single_of must name a protocol task");
  }
}

Setting resolved_setting(const ExperimentConfig& cfg) {
  switch (cfg.task) {
    case TaskKind::ia:
    case TaskKind::layer_sweep:
      return Setting::ia;
    case TaskKind::debate:
      return Setting::debate;
    case TaskKind::workflow:
      return Setting::workflow;
    case TaskKind::single:
      switch (cfg.single_of) {
        case TaskKind::debate:
          return Setting::debate_single;
        case TaskKind::workflow:
          return Setting::workflow_single;
        default:
          return Setting::ia_single;
      }
  }
  throw std::logic_error("unhandled task kind");
}

std::vector<int> resolve_layers(const ExperimentConfig& cfg, int n_layers) {
  if (cfg.method != Method::sde && cfg.method != Method::raw) {
    return {};
  }
  if (cfg.task == TaskKind::single) {
    return {};
  }
  auto check = [n_layers](int layer) {
    if (layer < 0 || layer >= n_layers) {
      throw std::invalid_argument("layer " + std::to_string(layer) +
                                  " outside the model's 0.." + std::to_string(n_layers - 1));
    }
  };
  if (!cfg.layers.empty()) {
    std::vector<int> layers = cfg.layers;
    std::sort(layers.begin(), layers.end());
    if (std::adjacent_find(layers.begin(), layers.end()) != layers.end()) {
      throw std::invalid_argument("duplicate injection layer");
    }
    for (int layer : layers) {
      check(layer);
    }
    return layers;
  }
  if (cfg.strategy) {
    if (cfg.ranking.empty()) {
      throw std::invalid_argument("a layer strategy needs a best-first ranking");
    }
    for (int layer : cfg.ranking) {
      check(layer);
    }
    const int k = cfg.strategy_k > 0 ? cfg.strategy_k : default_layer_count(n_layers);
    return strategy_layers(*cfg.strategy, cfg.ranking, k, n_layers);
  }
  throw std::invalid_argument("method " + method_name(cfg.method) +
                              " needs explicit layers or a strategy with a ranking");
}

std::string manifest_to_json(const RunManifest& manifest) {
  json j;
  j["config"] = config_json_obj(manifest.config);
  j["version"] = manifest.version;
  j["model_checksum"] = manifest.model_checksum;
  j["n_questions"] = manifest.n_questions;
  j["resolved_layers"] = manifest.resolved_layers;
  json runs = json::array();
  for (const RunSummary& r : manifest.runs) {
    json jr;
    jr["seed"] = r.seed;
    jr["records_file"] = r.records_file;
    jr["summary"] = summary_json(r.summary);
    jr["token_bytes"] = r.token_bytes;
    jr["latent_bytes"] = r.latent_bytes;
    runs.push_back(jr);
  }
  j["runs"] = runs;
  j["overall"] = summary_json(manifest.overall);
  j["token_bytes"] = manifest.token_bytes;
  j["latent_bytes"] = manifest.latent_bytes;
  j["wall_clock_seconds"] = manifest.wall_clock_seconds;
  if (manifest.sweep) {
    j["sweep"] = sweep_json(*manifest.sweep);
  }
  return j.dump(2) + "\n";
}

RunManifest manifest_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument(std::string("manifest is not valid JSON: ") + e.what());
  }
  RunManifest m;
  m.config = config_from_json_obj(j.at("config"));
  m.version = j.at("version");
  m.model_checksum = j.at("model_checksum");
  m.n_questions = j.at("n_questions");
  m.resolved_layers = j.at("resolved_layers").get<std::vector<int>>();
  for (const json& jr : j.at("runs")) {
    RunSummary r;
    r.seed = jr.at("seed");
    r.records_file = jr.at("records_file");
    r.summary = summary_from(jr.at("summary"));
    r.token_bytes = jr.at("token_bytes");
    r.latent_bytes = jr.at("latent_bytes");
    m.runs.push_back(std::move(r));
  }
  m.overall = summary_from(j.at("overall"));
  m.token_bytes = j.at("token_bytes");
  m.latent_bytes = j.at("latent_bytes");
  m.wall_clock_seconds = j.at("wall_clock_seconds");
  if (j.contains("sweep")) {
    m.sweep = sweep_from(j.at("sweep"));
  }
  return m;
}

RunManifest load_manifest_file(const std::string& path) {
  RunManifest m = manifest_from_json(read_file(path));
  m.path = path;
  return m;
}

RunManifest run_experiment(const ExperimentConfig& requested) {
  const auto started = std::chrono::steady_clock::now();
  ExperimentConfig cfg = requested;
  apply_env_overrides(cfg);
  validate_config(cfg);

  const Tokenizer tokenizer =
      cfg.vocab_path.empty() ? Tokenizer{} : Tokenizer::from_word_file(cfg.vocab_path);
  // The model must decode over exactly the tokenizer's id space: a larger
  // model vocabulary could emit undetokenizable ids, a smaller one could not
  // encode prompts.  vocab_size 0 on a toy spec means "size to the tokenizer".
  if (cfg.model.kind == "toy" && cfg.model.config.vocab_size == 0) {
    cfg.model.config.vocab_size = static_cast<int>(tokenizer.vocab_size());
  }
  const Model model = realize_model(cfg.model);
  if (model.config().vocab_size != static_cast<int>(tokenizer.vocab_size())) {
    throw std::invalid_argument(
        "model vocab (" + std::to_string(model.config().vocab_size) +
        ") must equal the tokenizer vocab (" + std::to_string(tokenizer.vocab_size()) +
        "); use vocab_size 0 on a toy model to auto-size");
  }

  std::vector<QuestionRecord> questions = load_dataset(cfg.dataset_path);
  if (cfg.limit > 0 && static_cast<int>(questions.size()) > cfg.limit) {
    questions.resize(static_cast<std::size_t>(cfg.limit));
  }
  if (questions.empty()) {
    throw std::invalid_argument("dataset is empty: " + cfg.dataset_path);
  }

  std::optional<RetrievalIndex> index;
  if (needs_corpus(cfg)) {
    index = RetrievalIndex::build(load_corpus(cfg.corpus_path));
  }

  const fs::path dir = fs::path(cfg.out_dir) / cfg.name;
  fs::create_directories(dir);

  RunManifest manifest;
  manifest.config = cfg;
  manifest.version = kSdeVersion;
  manifest.model_checksum = checksum_hex(model.weight_checksum());
  manifest.n_questions = static_cast<int>(questions.size());

  if (cfg.task == TaskKind::layer_sweep) {
    std::vector<IaTask> tasks;
    tasks.reserve(questions.size());
    for (const QuestionRecord& q : questions) {
      const std::vector<ScoredDoc> ranked = index->retrieve(q.question, cfg.retrieval_k);
      auto [shard_a, shard_b] = shard_docs(*index, ranked);
      tasks.push_back(IaTask{q, std::move(shard_a), std::move(shard_b)});
    }
    ProtocolConfig base;
    base.decode = cfg.decode;
    base.max_rounds = cfg.max_rounds;
    base.wire_dtype = cfg.wire_dtype;
    base.seed = cfg.seeds.front();
    std::vector<int> probe = cfg.layers;  // empty = every layer
    for (int layer : probe) {
      if (layer < 0 || layer >= model.config().n_layers) {
        throw std::invalid_argument("probe layer " + std::to_string(layer) +
                                    " outside the model's layers");
      }
    }
    PromptLibrary prompts(cfg.prompts_dir);
    manifest.sweep = sweep_layers(tasks, model, tokenizer, prompts, base, probe);
    manifest.resolved_layers = manifest.sweep->selected;
  } else {
    RunContext ctx;
    ctx.cfg = &cfg;
    ctx.model = &model;
    ctx.tokenizer = &tokenizer;
    ctx.questions = &questions;
    ctx.index = index ? &*index : nullptr;
    ctx.layers = resolve_layers(cfg, model.config().n_layers);
    ctx.setting = resolved_setting(cfg);
    manifest.resolved_layers = ctx.layers;

    std::vector<std::vector<QuestionScore>> all_scores;
    for (std::size_t k = 0; k < cfg.seeds.size(); ++k) {
      const std::string records_name = "records_run" + std::to_string(k) + ".jsonl";
      RunData data = execute_run(ctx, static_cast<int>(k), dir, records_name);
      RunSummary rs;
      rs.seed = cfg.seeds[k];
      rs.records_file = records_name;
      rs.summary = aggregate({data.scores}, ctx.setting);
      rs.token_bytes = data.token_bytes;
      rs.latent_bytes = data.latent_bytes;
      manifest.token_bytes += data.token_bytes;
      manifest.latent_bytes += data.latent_bytes;
      manifest.runs.push_back(std::move(rs));
      all_scores.push_back(std::move(data.scores));
    }
    manifest.overall = aggregate(all_scores, ctx.setting);
  }

  manifest.wall_clock_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  const fs::path manifest_path = dir / "manifest.json";
  write_file_atomic(manifest_path, manifest_to_json(manifest));
  manifest.path = manifest_path.string();
  return manifest;
}

RunManifest rerun_from_manifest(const std::string& manifest_path,
                                const std::string& out_dir_override) {
  RunManifest m = load_manifest_file(manifest_path);
  ExperimentConfig cfg = m.config;
  if (!out_dir_override.empty()) {
    cfg.out_dir = out_dir_override;
  }
  return run_experiment(cfg);
}

std::vector<std::string> write_report(const std::string& manifest_path) {
  const RunManifest m = load_manifest_file(manifest_path);
  const fs::path base = fs::path(manifest_path).parent_path();
  const fs::path dir = base / "report";
  fs::create_directories(dir);
  std::vector<std::string> written;

  const std::string layers_field = join_ints(m.resolved_layers, ';');
  const std::string setting = setting_name(resolved_setting(m.config));

  {
    std::ostringstream csv;
    csv << "name,task,setting,method,layers,run,seed,n_questions,em,f1,formatted_rate,"
           "token_bytes,latent_bytes\n";
    for (std::size_t k = 0; k < m.runs.size(); ++k) {
      const RunSummary& r = m.runs[k];
      csv << m.config.name << ',' << task_name(m.config.task) << ',' << setting << ','
          << method_name(m.config.method) << ',' << layers_field << ',' << k << ',' << r.seed
          << ',' << r.summary.n_questions << ',' << csv_num(r.summary.em) << ','
          << csv_num(r.summary.f1) << ',' << csv_num(r.summary.formatted_rate) << ','
          << r.token_bytes << ',' << r.latent_bytes << '\n';
    }
    if (!m.runs.empty()) {
      csv << m.config.name << ',' << task_name(m.config.task) << ',' << setting << ','
          << method_name(m.config.method) << ',' << layers_field << ",overall,,"
          << m.overall.n_questions << ',' << csv_num(m.overall.em) << ','
          << csv_num(m.overall.f1) << ',' << csv_num(m.overall.formatted_rate) << ','
          << m.token_bytes << ',' << m.latent_bytes << '\n';
    }
    const fs::path path = dir / "summary.csv";
    write_file_atomic(path, csv.str());
    written.push_back(path.string());
  }

  {
    // Recounted from the records so the report cross-checks the manifest.
    std::size_t messages = 0;
    std::size_t token_bytes = 0;
    std::size_t latent_bytes = 0;
    const bool multi = multi_agent_setting(resolved_setting(m.config));
    for (const RunSummary& r : m.runs) {
      const std::string text = read_file((base / r.records_file).string());
      for (const std::string& line : complete_lines(text)) {
        const json j = json::parse(line);
        for (const json& e : j.at("entries")) {
          if (multi) {
            ++messages;
          }
          token_bytes += e.at("token_bytes").get<std::size_t>();
          latent_bytes += e.at("latent_bytes").get<std::size_t>();
        }
      }
    }
    std::ostringstream csv;
    csv << "setting,method,messages,token_bytes,latent_bytes,ratio\n";
    if (!m.runs.empty()) {
      const double ratio =
          token_bytes == 0 ? 0.0
                           : static_cast<double>(latent_bytes) / static_cast<double>(token_bytes);
      csv << setting << ',' << method_name(m.config.method) << ',' << messages << ','
          << token_bytes << ',' << latent_bytes << ',' << csv_num(ratio) << '\n';
    }
    const fs::path path = dir / "overhead.csv";
    write_file_atomic(path, csv.str());
    written.push_back(path.string());
  }

  if (m.sweep) {
    std::ostringstream csv;
    csv << "layer,em,f1,rank\n";
    for (const auto& [layer, score] : m.sweep->table) {
      const auto it = std::find(m.sweep->ranking.begin(), m.sweep->ranking.end(), layer);
      const auto rank = it == m.sweep->ranking.end()
                            ? m.sweep->ranking.size() + 1
                            : static_cast<std::size_t>(it - m.sweep->ranking.begin()) + 1;
      csv << layer << ',' << csv_num(score.em) << ',' << csv_num(score.f1) << ',' << rank << '\n';
    }
    const fs::path path = dir / "sweep.csv";
    write_file_atomic(path, csv.str());
    written.push_back(path.string());
  }

  return written;
}

}  // namespace sde

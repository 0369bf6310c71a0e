// SPDX-License-Identifier: Apache-2.0
//
// The experiment runner: a declarative config (JSON document) names a task,
// a method, a model, and datasets; running it persists per-question records
// (JSONL, one line per question per seed) plus a manifest that is sufficient
// to re-execute the run bit-identically under greedy decoding.
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sde/archive.hpp"
#include "sde/layerlab.hpp"
#include "sde/wire.hpp"

namespace sde {

inline constexpr const char* kSdeVersion = "0.1.0";

// Experiment families.  "single" is the no-communication baseline of the
// protocol named by single_of; "layer_sweep" is the per-layer selection
// probe over the information-asymmetry fixture.
enum class TaskKind { ia, debate, workflow, single, layer_sweep };

std::string task_name(TaskKind k);
TaskKind parse_task(const std::string& name);

// Where the model comes from: "toy" builds seeded random weights from the
// embedded config; "file" loads a tensor archive.
struct ModelSpec {
  std::string kind = "toy";  // "toy" | "file"
  std::string path;          // file: archive path
  ModelConfig config;        // toy: dimensions
  std::uint64_t seed = 1;    // toy: weight seed
};

Model realize_model(const ModelSpec& spec);

struct ExperimentConfig {
  std::string name = "run";
  TaskKind task = TaskKind::ia;
  TaskKind single_of = TaskKind::ia;  // baseline family when task == single
  Method method = Method::nl;
  ModelSpec model;

  // Injection layers, either given explicitly or derived from a best-first
  // ranking via a strategy.  Explicit layers win when both are present.
  std::vector<int> layers;
  std::optional<LayerStrategy> strategy;
  int strategy_k = 0;        // 0 = depth-scaled default count
  std::vector<int> ranking;  // best-first layer ranking for the strategy

  int n_agents = 2;
  int debate_rounds = 3;
  int max_rounds = 5;
  int max_steps = 7;
  DecodeSettings decode;

  std::string dataset_path;
  std::string corpus_path;  // required for ia / workflow / layer_sweep
  std::string vocab_path;   // optional word-table file; empty = byte-level
  std::string prompts_dir = "assets/prompts";
  int retrieval_k = 6;
  int limit = 0;  // 0 = every dataset question

  std::vector<std::uint64_t> seeds = {1};  // one run per seed
  Dtype wire_dtype = Dtype::f32;
  bool zero_payloads = false;

  std::string out_dir = "out";
  int threads = 1;
};

// JSON round trip.  Parsing rejects unknown keys (typo protection) and
// normalizes the "single" spellings: task "single" carries a "single_of"
// field, and method "single" on a protocol task is folded into
// task = single, single_of = that protocol, method = nl.
std::string config_to_json(const ExperimentConfig& cfg);
ExperimentConfig config_from_json(const std::string& text);
ExperimentConfig load_config_file(const std::string& path);

// SDE_OUT_DIR replaces out_dir; SDE_THREADS replaces threads.  Applied by
// run_experiment as well; exposed so tools can display resolved values.
void apply_env_overrides(ExperimentConfig& cfg);

// Throws std::invalid_argument naming the offending field.
void validate_config(const ExperimentConfig& cfg);

// The metrics setting the task scores under.
Setting resolved_setting(const ExperimentConfig& cfg);

// The layer set a latent-method run will inject at: explicit layers
// (validated against the model) or strategy over the ranking.  Empty for
// methods that carry no per-layer payload.
std::vector<int> resolve_layers(const ExperimentConfig& cfg, int n_layers);

struct RunSummary {
  std::uint64_t seed = 0;
  std::string records_file;  // relative to the manifest directory
  Summary summary;
  std::size_t token_bytes = 0;
  std::size_t latent_bytes = 0;
};

struct RunManifest {
  ExperimentConfig config;  // resolved (post-override) config
  std::string version;
  std::string model_checksum;  // hex weight checksum
  int n_questions = 0;
  std::vector<int> resolved_layers;
  std::vector<RunSummary> runs;  // one per seed
  Summary overall;
  std::size_t token_bytes = 0;   // totals over every run
  std::size_t latent_bytes = 0;
  double wall_clock_seconds = 0.0;
  std::optional<SweepOutcome> sweep;  // layer_sweep task only

  // Where manifest.json was written; not serialized.
  std::string path;
};

std::string manifest_to_json(const RunManifest& manifest);
RunManifest manifest_from_json(const std::string& text);
RunManifest load_manifest_file(const std::string& path);

// Executes the experiment under <out_dir>/<name>/:
//   records_run<k>.jsonl   one line per question, dataset order
//   manifest.json          written last, atomically
// A completed records file is reused (its scores are re-read); a leftover
// .partial file resumes at the first unwritten question.  Questions may run
// on `threads` workers; lines are still committed in dataset order.
RunManifest run_experiment(const ExperimentConfig& cfg);

// Loads a manifest and re-executes its resolved config, optionally into a
// different output root.  Greedy runs reproduce their records byte for byte.
RunManifest rerun_from_manifest(const std::string& manifest_path,
                                const std::string& out_dir_override = "");

// Emits report CSVs next to the manifest (<dir>/report/):
//   summary.csv   per-run and overall metrics
//   overhead.csv  bytes-on-the-wire, recounted from the records
//   sweep.csv     per-layer scores (only when the manifest holds a sweep)
// Returns the written paths.
std::vector<std::string> write_report(const std::string& manifest_path);

}  // namespace sde

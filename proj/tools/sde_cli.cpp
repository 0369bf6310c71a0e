// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end for the experiment runner.
//
//   sde run            execute an experiment from a JSON config (+ overrides)
//   sde sweep-layers   per-layer selection probe over an IA fixture
//   sde report         render CSV reports from a run manifest
//   sde export-model   resolve a config's model spec into a tensor archive
//   sde make-toy-model build and save a seeded toy model
//
// SDE_OUT_DIR and SDE_THREADS override the output directory and worker
// count of any run.
#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "sde/experiment.hpp"

namespace {

struct RunFlags {
  std::string config_path;
  std::string from_manifest;
  std::string name;
  std::string task;
  std::string method;
  std::string model_file;
  std::string layers;
  std::string strategy;
  int strategy_k = -1;
  std::string ranking;
  int agents = -1;
  int rounds = -1;
  int max_rounds = -1;
  int max_steps = -1;
  std::string seeds;
  std::string dataset;
  std::string corpus;
  std::string vocab;
  std::string prompts;
  std::string out;
  std::string decode_mode;
  double temperature = -1.0;
  int max_new_tokens = -1;
  int limit = -1;
  int threads = -1;
  std::string wire_dtype;
  bool zero_payloads = false;
};

std::vector<int> parse_int_list(const std::string& text, const char* what) {
  std::vector<int> out;
  std::size_t begin = 0;
  while (begin <= text.size()) {
    const std::size_t end = std::min(text.find(',', begin), text.size());
    const std::string item = text.substr(begin, end - begin);
    if (!item.empty()) {
      try {
        out.push_back(std::stoi(item));
      } catch (const std::exception&) {
        throw CLI::ValidationError(std::string(what) + ": not an integer: " + item);
      }
    }
    begin = end + 1;
  }
  if (out.empty()) {
    throw CLI::ValidationError(std::string(what) + ": empty list");
  }
  return out;
}

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> out;
  std::size_t begin = 0;
  while (begin <= text.size()) {
    const std::size_t end = std::min(text.find(',', begin), text.size());
    const std::string item = text.substr(begin, end - begin);
    if (!item.empty()) {
      try {
        out.push_back(std::stoull(item));
      } catch (const std::exception&) {
        throw CLI::ValidationError("--seeds: not an integer: " + item);
      }
    }
    begin = end + 1;
  }
  if (out.empty()) {
    throw CLI::ValidationError("--seeds: empty list");
  }
  return out;
}

void add_run_options(CLI::App* cmd, RunFlags& flags, bool with_task) {
  cmd->add_option("-c,--config", flags.config_path, "JSON experiment config");
  cmd->add_option("--name", flags.name, "run name (output subdirectory)");
  if (with_task) {
    cmd->add_option("--task", flags.task, "ia | debate | workflow | single | layer-sweep");
    cmd->add_option("--method", flags.method, "nl | sde | cipher | raw | single");
  }
  cmd->add_option("--model-file", flags.model_file, "load model weights from a tensor archive");
  cmd->add_option("--layers", flags.layers, "comma-separated injection (or probe) layers");
  cmd->add_option("--strategy", flags.strategy, "combine_top_k | only_top_1 | all_layers");
  cmd->add_option("--strategy-k", flags.strategy_k, "layer count for the strategy (0 = auto)");
  cmd->add_option("--ranking", flags.ranking, "comma-separated best-first layer ranking");
  cmd->add_option("--agents", flags.agents, "debate width");
  cmd->add_option("--rounds", flags.rounds, "debate rounds");
  cmd->add_option("--max-rounds", flags.max_rounds, "round cap for the asymmetry task");
  cmd->add_option("--max-steps", flags.max_steps, "workflow step cap");
  cmd->add_option("--seeds", flags.seeds, "comma-separated per-run seeds");
  cmd->add_option("--dataset", flags.dataset, "question JSONL");
  cmd->add_option("--corpus", flags.corpus, "document JSONL");
  cmd->add_option("--vocab", flags.vocab, "word-table file for the tokenizer");
  cmd->add_option("--prompts", flags.prompts, "prompt template directory");
  cmd->add_option("--out", flags.out, "output root directory");
  cmd->add_option("--decode-mode", flags.decode_mode, "greedy | sampled | cipher");
  cmd->add_option("--temperature", flags.temperature, "sampling temperature");
  cmd->add_option("--max-new-tokens", flags.max_new_tokens, "decode budget per response");
  cmd->add_option("--limit", flags.limit, "use only the first N questions");
  cmd->add_option("--threads", flags.threads, "worker threads over questions");
  cmd->add_option("--wire-dtype", flags.wire_dtype, "f32 | f16 payload accounting dtype");
  cmd->add_flag("--zero-payloads", flags.zero_payloads,
                "ship zeroed latent payloads (diagnostic)");
}

sde::ExperimentConfig merge_flags(const RunFlags& flags) {
  sde::ExperimentConfig cfg;
  if (!flags.config_path.empty()) {
    cfg = sde::load_config_file(flags.config_path);
  }
  if (!flags.name.empty()) cfg.name = flags.name;
  if (!flags.task.empty() || !flags.method.empty()) {
    // Route through the JSON normalizer so "--method single" folds the same
    // way the config file spelling does.
    const std::string task = flags.task.empty() ? sde::task_name(cfg.task) : flags.task;
    std::string method = flags.method;
    if (method.empty()) {
      method = cfg.task == sde::TaskKind::single ? "single" : sde::method_name(cfg.method);
    }
    std::string single_of = sde::task_name(cfg.single_of);
    const sde::ExperimentConfig parsed = sde::config_from_json(
        std::string("{\"task\": \"") + task + "\", \"method\": \"" + method +
        "\", \"single_of\": \"" + single_of + "\"}");
    cfg.task = parsed.task;
    cfg.single_of = parsed.single_of;
    cfg.method = parsed.method;
  }
  if (!flags.model_file.empty()) {
    cfg.model.kind = "file";
    cfg.model.path = flags.model_file;
  }
  if (!flags.layers.empty()) cfg.layers = parse_int_list(flags.layers, "--layers");
  if (!flags.strategy.empty()) cfg.strategy = sde::parse_strategy(flags.strategy);
  if (flags.strategy_k >= 0) cfg.strategy_k = flags.strategy_k;
  if (!flags.ranking.empty()) cfg.ranking = parse_int_list(flags.ranking, "--ranking");
  if (flags.agents >= 0) cfg.n_agents = flags.agents;
  if (flags.rounds >= 0) cfg.debate_rounds = flags.rounds;
  if (flags.max_rounds >= 0) cfg.max_rounds = flags.max_rounds;
  if (flags.max_steps >= 0) cfg.max_steps = flags.max_steps;
  if (!flags.seeds.empty()) cfg.seeds = parse_seed_list(flags.seeds);
  if (!flags.dataset.empty()) cfg.dataset_path = flags.dataset;
  if (!flags.corpus.empty()) cfg.corpus_path = flags.corpus;
  if (!flags.vocab.empty()) cfg.vocab_path = flags.vocab;
  if (!flags.prompts.empty()) cfg.prompts_dir = flags.prompts;
  if (!flags.out.empty()) cfg.out_dir = flags.out;
  if (!flags.decode_mode.empty()) {
    if (flags.decode_mode == "greedy") {
      cfg.decode.mode = sde::DecodeMode::greedy;
    } else if (flags.decode_mode == "sampled") {
      cfg.decode.mode = sde::DecodeMode::sampled;
    } else if (flags.decode_mode == "cipher") {
      cfg.decode.mode = sde::DecodeMode::cipher;
    } else {
      throw CLI::ValidationError("--decode-mode: unknown mode: " + flags.decode_mode);
    }
  }
  if (flags.temperature >= 0.0) cfg.decode.temperature = static_cast<float>(flags.temperature);
  if (flags.max_new_tokens >= 0) cfg.decode.max_new_tokens = flags.max_new_tokens;
  if (flags.limit >= 0) cfg.limit = flags.limit;
  if (flags.threads >= 0) cfg.threads = flags.threads;
  if (!flags.wire_dtype.empty()) {
    if (flags.wire_dtype == "f32") {
      cfg.wire_dtype = sde::Dtype::f32;
    } else if (flags.wire_dtype == "f16") {
      cfg.wire_dtype = sde::Dtype::f16;
    } else {
      throw CLI::ValidationError("--wire-dtype: expected f32 or f16");
    }
  }
  if (flags.zero_payloads) cfg.zero_payloads = true;
  return cfg;
}

std::string join_ints(const std::vector<int>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i > 0) out += ",";
    out += std::to_string(v[i]);
  }
  return out.empty() ? "-" : out;
}

void print_manifest(const sde::RunManifest& m) {
  std::printf("manifest      %s\n", m.path.c_str());
  std::printf("task/method   %s / %s\n", sde::task_name(m.config.task).c_str(),
              sde::method_name(m.config.method).c_str());
  std::printf("model         %s (checksum %s)\n", m.config.model.kind.c_str(),
              m.model_checksum.c_str());
  std::printf("layers        %s\n", join_ints(m.resolved_layers).c_str());
  std::printf("questions     %d   runs %zu   wall %.2fs\n", m.n_questions, m.runs.size(),
              m.wall_clock_seconds);
  if (!m.runs.empty()) {
    std::printf("overall       em %.4f   f1 %.4f   formatted %.3f\n", m.overall.em,
                m.overall.f1, m.overall.formatted_rate);
    std::printf("bytes         token %zu   latent %zu\n", m.token_bytes, m.latent_bytes);
  }
  if (m.sweep) {
    std::printf("sweep         %zu layers probed, ranking:", m.sweep->table.size());
    for (int layer : m.sweep->ranking) std::printf(" %d", layer);
    std::printf("\n              selected: %s\n", join_ints(m.sweep->selected).c_str());
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"State-delta communication experiments"};
  app.require_subcommand(1);

  RunFlags run_flags;
  RunFlags sweep_flags;
  std::string manifest_path;
  std::string report_manifest;

  CLI::App* run = app.add_subcommand("run", "execute an experiment");
  add_run_options(run, run_flags, /*with_task=*/true);
  run->add_option("--from-manifest", run_flags.from_manifest,
                  "re-execute the run described by a manifest");

  CLI::App* sweep = app.add_subcommand("sweep-layers", "probe layers one by one");
  add_run_options(sweep, sweep_flags, /*with_task=*/false);

  CLI::App* report = app.add_subcommand("report", "write CSV reports for a manifest");
  report->add_option("-m,--manifest", report_manifest, "path to manifest.json")->required();

  std::string export_config;
  std::string export_out;
  CLI::App* export_model = app.add_subcommand("export-model", "write a config's model archive");
  export_model->add_option("-c,--config", export_config, "JSON experiment config")->required();
  export_model->add_option("-o,--out", export_out, "archive path")->required();

  sde::ModelConfig toy_cfg;
  std::uint64_t toy_seed = 1;
  std::string toy_vocab;
  std::string toy_out;
  CLI::App* make_toy = app.add_subcommand("make-toy-model", "build and save a toy model");
  make_toy->add_option("--layers", toy_cfg.n_layers, "transformer blocks");
  make_toy->add_option("--d-model", toy_cfg.d_model, "hidden width");
  make_toy->add_option("--heads", toy_cfg.n_heads, "attention heads");
  make_toy->add_option("--vocab-size", toy_cfg.vocab_size, "vocabulary size");
  make_toy->add_option("--vocab", toy_vocab, "size the vocabulary to this word table");
  make_toy->add_option("--max-seq", toy_cfg.max_seq, "maximum sequence length");
  make_toy->add_option("--seed", toy_seed, "weight seed");
  make_toy->add_option("-o,--out", toy_out, "archive path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      sde::RunManifest manifest;
      if (!run_flags.from_manifest.empty()) {
        manifest = sde::rerun_from_manifest(run_flags.from_manifest,
                                            run_flags.out.empty() ? "" : run_flags.out);
      } else {
        manifest = sde::run_experiment(merge_flags(run_flags));
      }
      print_manifest(manifest);
    } else if (sweep->parsed()) {
      sde::ExperimentConfig cfg = merge_flags(sweep_flags);
      cfg.task = sde::TaskKind::layer_sweep;
      print_manifest(sde::run_experiment(cfg));
    } else if (report->parsed()) {
      for (const std::string& path : sde::write_report(report_manifest)) {
        std::printf("wrote %s\n", path.c_str());
      }
    } else if (export_model->parsed()) {
      sde::ExperimentConfig cfg = sde::load_config_file(export_config);
      if (cfg.model.kind == "toy" && cfg.model.config.vocab_size == 0) {
        const sde::Tokenizer tok = cfg.vocab_path.empty()
                                       ? sde::Tokenizer{}
                                       : sde::Tokenizer::from_word_file(cfg.vocab_path);
        cfg.model.config.vocab_size = static_cast<int>(tok.vocab_size());
      }
      const sde::Model model = sde::realize_model(cfg.model);
      sde::save_model(model, export_out);
      std::printf("wrote %s (checksum %016llx)\n", export_out.c_str(),
                  static_cast<unsigned long long>(model.weight_checksum()));
    } else if (make_toy->parsed()) {
      if (!toy_vocab.empty()) {
        toy_cfg.vocab_size =
            static_cast<int>(sde::Tokenizer::from_word_file(toy_vocab).vocab_size());
      }
      const sde::Model model = sde::Model::build_toy(toy_cfg, toy_seed);
      sde::save_model(model, toy_out);
      std::printf("wrote %s (%d layers, d %d, vocab %d, checksum %016llx)\n", toy_out.c_str(),
                  toy_cfg.n_layers, toy_cfg.d_model, toy_cfg.vocab_size,
                  static_cast<unsigned long long>(model.weight_checksum()));
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}

// SPDX-License-Identifier: Apache-2.0
#include "sde/layerlab.hpp"

#include <algorithm>
#include <stdexcept>

#include "sde/rng.hpp"

namespace sde {

std::vector<int> rank_layers(const LayerScoreTable& table, const RankRule& rule) {
  std::vector<int> layers;
  layers.reserve(table.size());
  for (const auto& [layer, _] : table) layers.push_back(layer);
  std::stable_sort(layers.begin(), layers.end(), [&](int a, int b) {
    const LayerScore& sa = table.at(a);
    const LayerScore& sb = table.at(b);
    const double ka = rule.key(sa);
    const double kb = rule.key(sb);
    if (ka != kb) return ka > kb;
    if (sa.f1 != sb.f1) return sa.f1 > sb.f1;
    return a < b;
  });
  return layers;
}

int default_layer_count(int n_layers) {
  if (n_layers < 1) {
    throw std::invalid_argument("default_layer_count: model depth must be positive");
  }
  return std::clamp(n_layers / 16, 1, 3);
}

std::vector<int> select_layers(const LayerScoreTable& table, int k, const RankRule& rule) {
  if (k < 1) throw std::invalid_argument("select_layers: k must be positive");
  std::vector<int> ranked = rank_layers(table, rule);
  if (static_cast<std::size_t>(k) < ranked.size()) ranked.resize(static_cast<std::size_t>(k));
  std::sort(ranked.begin(), ranked.end());
  return ranked;
}

std::string strategy_name(LayerStrategy strategy) {
  switch (strategy) {
    case LayerStrategy::combine_top_k: return "combine_top_k";
    case LayerStrategy::only_top_1: return "only_top_1";
    case LayerStrategy::all_layers: return "all_layers";
  }
  throw std::logic_error("unknown layer strategy");
}

LayerStrategy parse_strategy(const std::string& name) {
  if (name == "combine_top_k") return LayerStrategy::combine_top_k;
  if (name == "only_top_1") return LayerStrategy::only_top_1;
  if (name == "all_layers") return LayerStrategy::all_layers;
  throw std::invalid_argument("unknown layer strategy '" + name + "'");
}

std::vector<int> strategy_layers(LayerStrategy strategy, const std::vector<int>& ranked,
                                 int k, int n_layers) {
  if (ranked.empty() && strategy != LayerStrategy::all_layers) {
    throw std::invalid_argument("strategy_layers: empty ranking");
  }
  std::vector<int> layers;
  switch (strategy) {
    case LayerStrategy::combine_top_k: {
      if (k < 1) throw std::invalid_argument("strategy_layers: k must be positive");
      const std::size_t n = std::min(ranked.size(), static_cast<std::size_t>(k));
      layers.assign(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(n));
      break;
    }
    case LayerStrategy::only_top_1:
      layers.push_back(ranked.front());
      break;
    case LayerStrategy::all_layers:
      for (int l = 0; l < n_layers; ++l) layers.push_back(l);
      break;
  }
  std::sort(layers.begin(), layers.end());
  return layers;
}

LayerScore evaluate_layers(const std::vector<IaTask>& tasks, const Model& model,
                           const Tokenizer& tokenizer, const PromptLibrary& prompts,
                           const ProtocolConfig& base, const std::vector<int>& layers) {
  if (tasks.empty()) throw std::invalid_argument("evaluate_layers: no tasks");
  ProtocolConfig cfg = base;
  cfg.method = Method::sde;
  cfg.layers = layers;
  LayerScore total;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    cfg.seed = rng::derive_seed(base.seed, i);
    const TaskResult result = run_ia(tasks[i].question, tasks[i].shard_a, tasks[i].shard_b,
                                     model, tokenizer, prompts, cfg);
    total.em += result.score.em;
    total.f1 += result.score.f1;
  }
  total.em /= static_cast<double>(tasks.size());
  total.f1 /= static_cast<double>(tasks.size());
  return total;
}

SweepOutcome sweep_layers(const std::vector<IaTask>& tasks, const Model& model,
                          const Tokenizer& tokenizer, const PromptLibrary& prompts,
                          const ProtocolConfig& base, std::vector<int> probe_layers,
                          const RankRule& rule) {
  const int n_layers = model.config().n_layers;
  if (probe_layers.empty()) {
    for (int l = 0; l < n_layers; ++l) probe_layers.push_back(l);
  }
  SweepOutcome outcome;
  for (int layer : probe_layers) {
    outcome.table[layer] = evaluate_layers(tasks, model, tokenizer, prompts, base, {layer});
  }
  outcome.ranking = rank_layers(outcome.table, rule);
  std::vector<int> top = outcome.ranking;
  const std::size_t k =
      std::min(top.size(), static_cast<std::size_t>(default_layer_count(n_layers)));
  top.resize(k);
  std::sort(top.begin(), top.end());
  outcome.selected = std::move(top);
  return outcome;
}

}  // namespace sde

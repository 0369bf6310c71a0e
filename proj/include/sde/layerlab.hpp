// SPDX-License-Identifier: Apache-2.0
//
// Layer selection: score injection layers one at a time on a preliminary
// QA task, rank them by combined EM/F1, and pick a depth-scaled top-k set
// that then stays fixed for every downstream experiment.
#pragma once

#include <map>
#include <string>
#include <vector>

#include "sde/corpus.hpp"
#include "sde/dataset.hpp"
#include "sde/protocols.hpp"

namespace sde {

struct LayerScore {
  double em = 0.0;
  double f1 = 0.0;
};

// Injection layer id -> its single-layer probe score.
using LayerScoreTable = std::map<int, LayerScore>;

// Combined ranking key.  F1 carries double weight: EM saturates quickly on
// near-tied layers while F1 still separates them.
struct RankRule {
  double f1_weight = 2.0;
  double key(const LayerScore& score) const { return score.em + f1_weight * score.f1; }
};

// Layers ordered best-first: key descending, ties by higher F1, then by
// lower layer id.
std::vector<int> rank_layers(const LayerScoreTable& table, const RankRule& rule = {});

// How many layers a model of the given depth gets: one per 16 transformer
// blocks, clamped to [1, 3].  Throws std::invalid_argument for depth < 1.
int default_layer_count(int n_layers);

// The top-k of the ranking, returned in ascending layer-id order (the order
// they are configured and serialized in).
std::vector<int> select_layers(const LayerScoreTable& table, int k, const RankRule& rule = {});

enum class LayerStrategy {
  combine_top_k,  // the selected top-k set
  only_top_1,     // just the best layer
  all_layers,     // every transformer layer (stress test)
};

std::string strategy_name(LayerStrategy strategy);
LayerStrategy parse_strategy(const std::string& name);

// The layer set a strategy modifies, ascending.  `ranked` is best-first.
std::vector<int> strategy_layers(LayerStrategy strategy, const std::vector<int>& ranked,
                                 int k, int n_layers);

// One QA probe task: a question plus the two private shards.
struct IaTask {
  QuestionRecord question;
  std::vector<Document> shard_a;
  std::vector<Document> shard_b;
};

// Mean EM/F1 of delta-method QA runs over the tasks with a fixed layer set.
// Task i runs with seed derive_seed(base.seed, i).
LayerScore evaluate_layers(const std::vector<IaTask>& tasks, const Model& model,
                           const Tokenizer& tokenizer, const PromptLibrary& prompts,
                           const ProtocolConfig& base, const std::vector<int>& layers);

struct SweepOutcome {
  LayerScoreTable table;
  std::vector<int> ranking;   // best-first
  std::vector<int> selected;  // top default_layer_count(model depth), ascending
};

// Probes every requested layer (all model layers when `probe_layers` is
// empty) with single-layer runs and assembles table, ranking, and the
// default selection.
SweepOutcome sweep_layers(const std::vector<IaTask>& tasks, const Model& model,
                          const Tokenizer& tokenizer, const PromptLibrary& prompts,
                          const ProtocolConfig& base, std::vector<int> probe_layers = {},
                          const RankRule& rule = {});

}  // namespace sde

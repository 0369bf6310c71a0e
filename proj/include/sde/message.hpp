// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <variant>
#include <vector>

#include "sde/model.hpp"
#include "sde/trajectory.hpp"

namespace sde {

// How agents exchange information.
enum class Method {
  nl,      // token text only
  sde,     // text plus per-token state deltas at selected layers
  cipher,  // text plus per-token weighted input embeddings
  raw,     // text plus per-token raw states at selected layers (ablation)
};

std::string method_name(Method m);
Method parse_method(const std::string& name);

// Latent payload variants.  All matrices have one row per message token.
struct DeltaPayload {
  std::vector<DeltaTrajectory> layers;
};

// Raw states h_1..h_n (the initial prompt state h_0 is not shipped).
struct RawStateTrajectory {
  int layer = 0;
  Eigen::MatrixXf states;
};
struct RawStatePayload {
  std::vector<RawStateTrajectory> layers;
};

struct CipherPayload {
  Eigen::MatrixXf embeddings;  // n x d_model weighted input embeddings
};

using Payload = std::variant<std::monostate, DeltaPayload, RawStatePayload, CipherPayload>;

// One agent utterance: the exact token ids it produced, the rendered text,
// and an optional latent payload aligned 1:1 with the tokens.
struct Message {
  std::string id;  // unique within a transcript, e.g. "a0.r1"
  int sender = 0;
  int round = 0;
  std::vector<TokenId> tokens;
  std::string text;
  Payload payload;
};

// Validating constructor: every payload matrix must have tokens.size() rows,
// and latent payloads must carry at least one layer.  Throws
// std::invalid_argument on violation.
Message make_message(std::string id, int sender, int round, std::vector<TokenId> tokens,
                     std::string text, Payload payload);

// Number of rows the payload carries per layer (0 for token-only messages).
int payload_rows(const Payload& payload);

// Layers a latent payload addresses (empty for nl/cipher).
std::vector<int> payload_layers(const Payload& payload);

// Maps a message's latent payload onto an injection plan for a receiver
// whose prompt embeds the message tokens at absolute positions
// [span_begin, span_begin + n).  Row i of each per-layer matrix lands on
// position span_begin + i at that layer.  Token-only and weighted-embedding
// payloads yield an empty plan (the latter enters through the input
// embeddings instead).
//
// When `zeroed` is set the plan keeps its structure but all deltas are
// zero vectors — the diagnostic used to prove injection is additive.
//
// Throws std::invalid_argument when the span length does not match the
// payload row count.
InjectionPlan build_injection_plan(const Message& message, int span_begin, int span_length,
                                   bool zeroed = false);

// The elementwise addition at the heart of injection, width-checked.
Eigen::VectorXf inject(const Eigen::VectorXf& state, const Eigen::VectorXf& delta);

}  // namespace sde

// SPDX-License-Identifier: Apache-2.0
//
// Toy decoder-only transformer with residual-stream hooks.
//
// The model is deliberately small (a few layers, narrow width) but keeps the
// structural properties the experiments depend on: a causal KV cache, a
// per-layer residual stream that can be captured and additively edited at
// token granularity, and strictly sequential position processing so that a
// prefilled prompt and an incrementally decoded one produce bit-identical
// states.
#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sde/rng.hpp"
#include "sde/tokenizer.hpp"

namespace sde {

enum class Dtype : std::uint8_t { f32 = 0, f16 = 1 };

struct ModelConfig {
  int n_layers = 4;
  int d_model = 32;
  int n_heads = 4;
  int vocab_size = 2048;
  int max_seq = 2048;
  Dtype dtype = Dtype::f32;  // storage dtype for archives / wire payloads
  float norm_eps = 1e-5f;

  int head_dim() const { return d_model / n_heads; }
  int d_ff() const { return 4 * d_model; }

  // Throws std::invalid_argument when any field is non-positive or when
  // d_model is not divisible by n_heads.
  void validate() const;

  bool operator==(const ModelConfig&) const = default;
};

struct LayerWeights {
  Eigen::VectorXf att_norm;  // RMSNorm gain, d
  Eigen::MatrixXf wq, wk, wv, wo;  // d x d
  Eigen::VectorXf mlp_norm;  // RMSNorm gain, d
  Eigen::MatrixXf w_up;      // d_ff x d
  Eigen::MatrixXf w_down;    // d x d_ff
};

// RMS normalization: x * gain / sqrt(mean(x^2) + eps).
Eigen::VectorXf rms_norm(const Eigen::VectorXf& x, const Eigen::VectorXf& gain, float eps);

// Exact GELU (erf form), applied elementwise.
Eigen::VectorXf gelu(const Eigen::VectorXf& x);

class Model {
 public:
  // Builds a model with gaussian(0, 0.02) weights from a seeded generator.
  // Norm gains start at one.  The same (config, seed) pair always yields
  // bit-identical weights.
  static Model build_toy(const ModelConfig& cfg, std::uint64_t seed);

  // Allocates zeroed tensors of the right shapes (archive loading target).
  static Model zeros(const ModelConfig& cfg);

  const ModelConfig& config() const { return cfg_; }

  // Input embedding row for a token (length d_model).  Bounds-checked.
  Eigen::VectorXf embedding_row(TokenId token) const;

  // Logits for an arbitrary residual-stream state: final norm + unembedding.
  // Pure function of the state; usable on captured prompt states.
  Eigen::VectorXf unembed(const Eigen::VectorXf& h) const;

  // FNV-1a over all tensor bytes in canonical order; identifies weights.
  std::uint64_t weight_checksum() const;

  // Canonical tensor enumeration (archives write tensors in this order).
  // Vectors appear as d x 1 matrices.
  struct TensorView {
    std::string name;
    Eigen::Map<Eigen::MatrixXf> value;
  };
  struct ConstTensorView {
    std::string name;
    Eigen::Map<const Eigen::MatrixXf> value;
  };
  std::vector<TensorView> tensors();
  std::vector<ConstTensorView> tensors() const;

  // Weights are plain public data; the experiments read them directly
  // (e.g. the embedding table for weighted-embedding messages).
  ModelConfig cfg_;
  Eigen::MatrixXf tok_emb;  // vocab_size x d_model
  Eigen::MatrixXf pos_emb;  // max_seq x d_model
  std::vector<LayerWeights> layers;
  Eigen::VectorXf final_norm;  // d
  Eigen::MatrixXf w_out;       // vocab_size x d_model
};

// One prompt position: a token id, optionally with a raw input embedding
// that replaces the token's table row (the token id is kept for rendering
// and span bookkeeping).  Position embeddings are added in either case.
struct PromptItem {
  TokenId token = 0;
  std::optional<Eigen::VectorXf> embedding;

  static PromptItem tok(TokenId t) { return PromptItem{t, std::nullopt}; }
  static PromptItem embed(TokenId rendered, Eigen::VectorXf e) {
    return PromptItem{rendered, std::move(e)};
  }
};

std::vector<PromptItem> to_items(std::span<const TokenId> ids);

enum class DecodeMode {
  greedy,   // argmax, ties to the lowest token id
  sampled,  // temperature / top-k / top-p / repetition penalty
  cipher,   // greedy token record, weighted-embedding feedback
};

struct DecodeSettings {
  DecodeMode mode = DecodeMode::greedy;
  float temperature = 0.7f;  // sampled: softmax temp; cipher: weighting temp (0 = one-hot)
  float top_p = 1.0f;
  int top_k = 0;  // 0 disables the filter
  float repetition_penalty = 1.0f;
  int max_new_tokens = 64;
  std::uint64_t seed = 0;
  // Retain per-step logits and (for sampled/cipher) the post-filter
  // distribution each emitted token was drawn from.
  bool record_step_logits = false;
  // Teacher forcing: the listed tokens are emitted verbatim while all state
  // computation (capture, injection, cache) runs as usual.  Used to drive
  // protocol-shape tests with scripted agents.
  std::optional<std::vector<TokenId>> script;
};

// Post-filter sampling distribution over the vocabulary: repetition penalty
// (applied once per distinct context token), temperature, top-k, then
// nucleus (top-p) filtering, renormalized.  Pure function; temperature 0
// degenerates to a one-hot argmax.
Eigen::VectorXf sampling_distribution(const Eigen::VectorXf& logits,
                                      const DecodeSettings& settings,
                                      const std::vector<TokenId>& context);

// Draws one token from sampling_distribution by inverse CDF in ascending
// token-id order.  Optionally returns the distribution that was sampled.
TokenId sample_token(const Eigen::VectorXf& logits, const DecodeSettings& settings,
                     const std::vector<TokenId>& context, rng::Stream& stream,
                     Eigen::VectorXf* dist_out = nullptr);

// A set of additive residual-stream edits, keyed by layer then by absolute
// position.  Deltas from multiple plans aimed at the same (layer, position)
// are summed before a single addition, so a plan and its negation cancel
// exactly in floating point.
struct InjectionPlan {
  std::map<int, std::map<int, Eigen::VectorXf>> deltas;

  bool empty() const { return deltas.empty(); }
  void add(int layer, int position, const Eigen::VectorXf& delta);
};

struct HookBus {
  // Layers whose post-block residual output should be captured.
  std::set<int> capture_layers;
  // Plans applied while processing prompt positions of this call.
  std::vector<InjectionPlan> plans;
  // Capture states for every prompt position, not just the last one.
  bool capture_prompt_states = false;
};

// Optional early-stop predicate over the incrementally decoded text of the
// current call.  Checked after every emitted token.
using StopRule = std::function<bool(std::string_view decoded)>;

enum class FinishReason { length, stop };

struct GenerationRecord {
  std::vector<TokenId> tokens;
  std::string text;  // detokenized `tokens`
  FinishReason finish_reason = FinishReason::length;
  // layer -> (n+1) x d matrix; row 0 is the state at the last prompt
  // position, row i (i>=1) the state after emitting token i.
  std::map<int, Eigen::MatrixXf> trajectories;
  // layer -> prompt_len x d; filled when capture_prompt_states is set.
  std::map<int, Eigen::MatrixXf> prompt_states;
  // n x vocab when record_step_logits is set.
  Eigen::MatrixXf step_logits;
  Eigen::MatrixXf step_distributions;
  // n x d weighted input embeddings when mode == cipher.
  Eigen::MatrixXf cipher_embeddings;
};

// A persistent decoding session: the KV cache survives across extend()
// calls, so earlier rounds of a conversation are never re-encoded.
class Session {
 public:
  Session(const Model& model, const Tokenizer& tokenizer);

  // Appends `prompt` to the cached context, applies `hooks` while its
  // positions are processed, then decodes according to `settings`.
  //
  // Errors (std::invalid_argument / std::out_of_range):
  //   - empty prompt;
  //   - context + prompt + max_new_tokens exceeding max_seq;
  //   - token ids outside the model vocabulary;
  //   - injection plans naming layers/positions outside this call's prompt
  //     range, or deltas of the wrong width.
  GenerationRecord extend(std::span<const PromptItem> prompt, const DecodeSettings& settings,
                          const HookBus& hooks = {}, const StopRule& stop = {});

  int length() const { return length_; }
  const std::vector<TokenId>& context() const { return context_; }
  const Model& model() const { return model_; }

 private:
  Eigen::VectorXf forward_position(const Eigen::VectorXf& input, int position,
                                   const std::map<int, std::map<int, Eigen::VectorXf>>& edits,
                                   const HookBus& hooks,
                                   std::map<int, Eigen::MatrixXf>* prompt_sink,
                                   int prompt_row);

  const Model& model_;
  const Tokenizer& tokenizer_;
  std::vector<Eigen::MatrixXf> k_cache_;  // per layer, d x max_seq
  std::vector<Eigen::MatrixXf> v_cache_;  // per layer, d x max_seq
  std::vector<TokenId> context_;
  int length_ = 0;
};

// One-shot convenience wrapper: fresh session, single extend.
GenerationRecord generate(const Model& model, const Tokenizer& tokenizer,
                          std::span<const PromptItem> prompt, const DecodeSettings& settings,
                          const HookBus& hooks = {}, const StopRule& stop = {});

}  // namespace sde

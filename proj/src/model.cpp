// SPDX-License-Identifier: Apache-2.0
#include "sde/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "sde/rng.hpp"

namespace sde {

namespace {

constexpr float kInitScale = 0.02f;

void fill_gaussian(Eigen::Ref<Eigen::MatrixXf> m, rng::Stream& stream, float scale) {
  // Row-major fill order so the draw sequence is part of the format.
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      m(r, c) = scale * stream.next_gaussian();
    }
  }
}

int argmax_lowest(const Eigen::VectorXf& v) {
  // Eigen's maxCoeff visitor keeps the first maximal element, i.e. ties
  // resolve to the lowest index.
  Eigen::Index idx = 0;
  v.maxCoeff(&idx);
  return static_cast<int>(idx);
}

Eigen::VectorXf stable_softmax(const Eigen::VectorXf& logits) {
  Eigen::VectorXf p = (logits.array() - logits.maxCoeff()).exp();
  p /= p.sum();
  return p;
}

}  // namespace

void ModelConfig::validate() const {
  if (n_layers <= 0 || d_model <= 0 || n_heads <= 0 || vocab_size <= 0 || max_seq <= 0) {
    throw std::invalid_argument("model config: all dimensions must be positive");
  }
  if (d_model % n_heads != 0) {
    throw std::invalid_argument("model config: d_model must be divisible by n_heads");
  }
  if (norm_eps <= 0.0f) {
    throw std::invalid_argument("model config: norm_eps must be positive");
  }
}

Eigen::VectorXf rms_norm(const Eigen::VectorXf& x, const Eigen::VectorXf& gain, float eps) {
  const float ms = x.squaredNorm() / static_cast<float>(x.size());
  return x.cwiseProduct(gain) / std::sqrt(ms + eps);
}

Eigen::VectorXf gelu(const Eigen::VectorXf& x) {
  constexpr float kInvSqrt2 = 0.70710678118654752440f;
  return x.unaryExpr([](float v) { return 0.5f * v * (1.0f + std::erf(v * kInvSqrt2)); });
}

Model Model::zeros(const ModelConfig& cfg) {
  cfg.validate();
  Model m;
  m.cfg_ = cfg;
  m.tok_emb = Eigen::MatrixXf::Zero(cfg.vocab_size, cfg.d_model);
  m.pos_emb = Eigen::MatrixXf::Zero(cfg.max_seq, cfg.d_model);
  m.layers.resize(cfg.n_layers);
  for (LayerWeights& w : m.layers) {
    w.att_norm = Eigen::VectorXf::Ones(cfg.d_model);
    w.wq = Eigen::MatrixXf::Zero(cfg.d_model, cfg.d_model);
    w.wk = Eigen::MatrixXf::Zero(cfg.d_model, cfg.d_model);
    w.wv = Eigen::MatrixXf::Zero(cfg.d_model, cfg.d_model);
    w.wo = Eigen::MatrixXf::Zero(cfg.d_model, cfg.d_model);
    w.mlp_norm = Eigen::VectorXf::Ones(cfg.d_model);
    w.w_up = Eigen::MatrixXf::Zero(cfg.d_ff(), cfg.d_model);
    w.w_down = Eigen::MatrixXf::Zero(cfg.d_model, cfg.d_ff());
  }
  m.final_norm = Eigen::VectorXf::Ones(cfg.d_model);
  m.w_out = Eigen::MatrixXf::Zero(cfg.vocab_size, cfg.d_model);
  return m;
}

Model Model::build_toy(const ModelConfig& cfg, std::uint64_t seed) {
  Model m = zeros(cfg);
  rng::Stream stream(seed);
  fill_gaussian(m.tok_emb, stream, kInitScale);
  fill_gaussian(m.pos_emb, stream, kInitScale);
  for (LayerWeights& w : m.layers) {
    fill_gaussian(w.wq, stream, kInitScale);
    fill_gaussian(w.wk, stream, kInitScale);
    fill_gaussian(w.wv, stream, kInitScale);
    fill_gaussian(w.wo, stream, kInitScale);
    fill_gaussian(w.w_up, stream, kInitScale);
    fill_gaussian(w.w_down, stream, kInitScale);
  }
  fill_gaussian(m.w_out, stream, kInitScale);
  return m;
}

Eigen::VectorXf Model::embedding_row(TokenId token) const {
  if (static_cast<int>(token) >= cfg_.vocab_size) {
    throw std::out_of_range("embedding_row: token id " + std::to_string(token) +
                            " outside vocabulary of " + std::to_string(cfg_.vocab_size));
  }
  return tok_emb.row(static_cast<Eigen::Index>(token)).transpose();
}

Eigen::VectorXf Model::unembed(const Eigen::VectorXf& h) const {
  if (h.size() != cfg_.d_model) {
    throw std::invalid_argument("unembed: state width mismatch");
  }
  return w_out * rms_norm(h, final_norm, cfg_.norm_eps);
}

std::vector<Model::TensorView> Model::tensors() {
  std::vector<TensorView> out;
  auto add = [&out](const std::string& name, float* data, Eigen::Index rows, Eigen::Index cols) {
    out.push_back(TensorView{name, Eigen::Map<Eigen::MatrixXf>(data, rows, cols)});
  };
  add("tok_emb", tok_emb.data(), tok_emb.rows(), tok_emb.cols());
  add("pos_emb", pos_emb.data(), pos_emb.rows(), pos_emb.cols());
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const std::string p = "layers." + std::to_string(l) + ".";
    LayerWeights& w = layers[l];
    add(p + "att_norm", w.att_norm.data(), w.att_norm.size(), 1);
    add(p + "wq", w.wq.data(), w.wq.rows(), w.wq.cols());
    add(p + "wk", w.wk.data(), w.wk.rows(), w.wk.cols());
    add(p + "wv", w.wv.data(), w.wv.rows(), w.wv.cols());
    add(p + "wo", w.wo.data(), w.wo.rows(), w.wo.cols());
    add(p + "mlp_norm", w.mlp_norm.data(), w.mlp_norm.size(), 1);
    add(p + "w_up", w.w_up.data(), w.w_up.rows(), w.w_up.cols());
    add(p + "w_down", w.w_down.data(), w.w_down.rows(), w.w_down.cols());
  }
  add("final_norm", final_norm.data(), final_norm.size(), 1);
  add("w_out", w_out.data(), w_out.rows(), w_out.cols());
  return out;
}

std::vector<Model::ConstTensorView> Model::tensors() const {
  std::vector<ConstTensorView> out;
  for (const TensorView& t : const_cast<Model*>(this)->tensors()) {
    out.push_back(ConstTensorView{t.name, Eigen::Map<const Eigen::MatrixXf>(
                                              t.value.data(), t.value.rows(), t.value.cols())});
  }
  return out;
}

std::uint64_t Model::weight_checksum() const {
  std::uint64_t h = 14695981039346656037ull;
  auto mix = [&h](const unsigned char* bytes, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 1099511628211ull;
    }
  };
  for (const ConstTensorView& t : tensors()) {
    mix(reinterpret_cast<const unsigned char*>(t.name.data()), t.name.size());
    mix(reinterpret_cast<const unsigned char*>(t.value.data()),
        static_cast<std::size_t>(t.value.size()) * sizeof(float));
  }
  return h;
}

std::vector<PromptItem> to_items(std::span<const TokenId> ids) {
  std::vector<PromptItem> items;
  items.reserve(ids.size());
  for (TokenId id : ids) {
    items.push_back(PromptItem::tok(id));
  }
  return items;
}

Eigen::VectorXf sampling_distribution(const Eigen::VectorXf& logits,
                                      const DecodeSettings& settings,
                                      const std::vector<TokenId>& context) {
  const Eigen::Index vocab = logits.size();
  Eigen::VectorXf l = logits;

  if (settings.repetition_penalty != 1.0f) {
    std::vector<bool> seen(static_cast<std::size_t>(vocab), false);
    for (TokenId t : context) {
      if (static_cast<Eigen::Index>(t) < vocab && !seen[t]) {
        seen[t] = true;
        l[t] = l[t] > 0.0f ? l[t] / settings.repetition_penalty
                           : l[t] * settings.repetition_penalty;
      }
    }
  }

  if (settings.temperature <= 0.0f) {
    Eigen::VectorXf onehot = Eigen::VectorXf::Zero(vocab);
    onehot[argmax_lowest(l)] = 1.0f;
    return onehot;
  }
  l /= settings.temperature;

  // Candidate order: logit descending, ties by ascending token id.  Both
  // filters operate on prefixes of this order, so their behaviour is fully
  // deterministic.
  std::vector<int> order(static_cast<std::size_t>(vocab));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&l](int a, int b) {
    if (l[a] != l[b]) {
      return l[a] > l[b];
    }
    return a < b;
  });

  std::size_t keep = order.size();
  if (settings.top_k > 0 && static_cast<std::size_t>(settings.top_k) < keep) {
    keep = static_cast<std::size_t>(settings.top_k);
  }

  Eigen::VectorXf kept_logits(static_cast<Eigen::Index>(keep));
  for (std::size_t i = 0; i < keep; ++i) {
    kept_logits[static_cast<Eigen::Index>(i)] = l[order[i]];
  }
  Eigen::VectorXf kept_probs = stable_softmax(kept_logits);

  if (settings.top_p < 1.0f) {
    float cum = 0.0f;
    std::size_t cut = keep;
    for (std::size_t i = 0; i < keep; ++i) {
      cum += kept_probs[static_cast<Eigen::Index>(i)];
      if (cum >= settings.top_p) {
        cut = i + 1;
        break;
      }
    }
    keep = cut;
  }

  Eigen::VectorXf dist = Eigen::VectorXf::Zero(vocab);
  float total = 0.0f;
  for (std::size_t i = 0; i < keep; ++i) {
    total += kept_probs[static_cast<Eigen::Index>(i)];
  }
  for (std::size_t i = 0; i < keep; ++i) {
    dist[order[i]] = kept_probs[static_cast<Eigen::Index>(i)] / total;
  }
  return dist;
}

TokenId sample_token(const Eigen::VectorXf& logits, const DecodeSettings& settings,
                     const std::vector<TokenId>& context, rng::Stream& stream,
                     Eigen::VectorXf* dist_out) {
  const Eigen::VectorXf dist = sampling_distribution(logits, settings, context);
  if (dist_out != nullptr) {
    *dist_out = dist;
  }
  const double u = stream.next_double();
  double cdf = 0.0;
  Eigen::Index last_nonzero = 0;
  for (Eigen::Index t = 0; t < dist.size(); ++t) {
    if (dist[t] <= 0.0f) {
      continue;
    }
    last_nonzero = t;
    cdf += static_cast<double>(dist[t]);
    if (u < cdf) {
      return static_cast<TokenId>(t);
    }
  }
  // Rounding can leave cdf fractionally below 1; fall back to the last
  // token with mass.
  return static_cast<TokenId>(last_nonzero);
}

void InjectionPlan::add(int layer, int position, const Eigen::VectorXf& delta) {
  auto [it, inserted] = deltas[layer].try_emplace(position, delta);
  if (!inserted) {
    it->second += delta;
  }
}

Session::Session(const Model& model, const Tokenizer& tokenizer)
    : model_(model), tokenizer_(tokenizer) {
  model.config().validate();
  if (tokenizer.vocab_size() > static_cast<std::size_t>(model.config().vocab_size)) {
    throw std::invalid_argument("session: tokenizer vocabulary exceeds model vocabulary");
  }
  const auto& cfg = model.config();
  k_cache_.assign(cfg.n_layers, Eigen::MatrixXf::Zero(cfg.d_model, cfg.max_seq));
  v_cache_.assign(cfg.n_layers, Eigen::MatrixXf::Zero(cfg.d_model, cfg.max_seq));
}

Eigen::VectorXf Session::forward_position(
    const Eigen::VectorXf& input, int position,
    const std::map<int, std::map<int, Eigen::VectorXf>>& edits, const HookBus& hooks,
    std::map<int, Eigen::MatrixXf>* prompt_sink, int prompt_row) {
  const ModelConfig& cfg = model_.cfg_;
  const int d = cfg.d_model;
  const int hd = cfg.head_dim();
  const float scale = 1.0f / std::sqrt(static_cast<float>(hd));

  Eigen::VectorXf x = input + model_.pos_emb.row(position).transpose();
  Eigen::VectorXf ctx(d);
  for (int l = 0; l < cfg.n_layers; ++l) {
    const LayerWeights& w = model_.layers[l];
    const Eigen::VectorXf a = rms_norm(x, w.att_norm, cfg.norm_eps);
    const Eigen::VectorXf q = w.wq * a;
    k_cache_[l].col(position) = w.wk * a;
    v_cache_[l].col(position) = w.wv * a;
    for (int h = 0; h < cfg.n_heads; ++h) {
      const auto keys = k_cache_[l].block(h * hd, 0, hd, position + 1);
      const auto vals = v_cache_[l].block(h * hd, 0, hd, position + 1);
      Eigen::VectorXf scores = (keys.transpose() * q.segment(h * hd, hd)) * scale;
      scores = stable_softmax(scores);
      ctx.segment(h * hd, hd).noalias() = vals * scores;
    }
    x += w.wo * ctx;
    const Eigen::VectorXf m = rms_norm(x, w.mlp_norm, cfg.norm_eps);
    x += w.w_down * gelu(w.w_up * m);

    // Residual-stream hook point: additive edits land on the block output,
    // then the (possibly edited) state is captured.  Later layers and the
    // KV entries they write all see the edited state, so subsequent decode
    // steps pick the edit up from the cache without reprocessing.
    if (const auto le = edits.find(l); le != edits.end()) {
      if (const auto pe = le->second.find(position); pe != le->second.end()) {
        x += pe->second;
      }
    }
    if (prompt_sink != nullptr && hooks.capture_layers.count(l) > 0) {
      (*prompt_sink)[l].row(prompt_row) = x.transpose();
    }
  }
  return x;
}

GenerationRecord Session::extend(std::span<const PromptItem> prompt,
                                 const DecodeSettings& settings, const HookBus& hooks,
                                 const StopRule& stop) {
  const ModelConfig& cfg = model_.cfg_;
  const int d = cfg.d_model;
  if (prompt.empty()) {
    throw std::invalid_argument("extend: prompt must not be empty");
  }
  const int base = length_;
  const int prompt_len = static_cast<int>(prompt.size());
  const int budget = settings.script ? static_cast<int>(settings.script->size())
                                     : settings.max_new_tokens;
  if (budget < 0) {
    throw std::invalid_argument("extend: negative token budget");
  }
  if (base + prompt_len + budget > cfg.max_seq) {
    throw std::out_of_range("extend: context of " + std::to_string(base + prompt_len + budget) +
                            " positions exceeds max_seq " + std::to_string(cfg.max_seq));
  }
  for (const PromptItem& item : prompt) {
    if (static_cast<int>(item.token) >= cfg.vocab_size) {
      throw std::out_of_range("extend: prompt token outside vocabulary");
    }
    if (item.embedding && item.embedding->size() != d) {
      throw std::invalid_argument("extend: prompt embedding width mismatch");
    }
  }
  for (int layer : hooks.capture_layers) {
    if (layer < 0 || layer >= cfg.n_layers) {
      throw std::out_of_range("extend: capture layer out of range");
    }
  }

  // Merge all plans: deltas aimed at the same (layer, position) are summed
  // here so the model applies exactly one addition per site.
  std::map<int, std::map<int, Eigen::VectorXf>> edits;
  for (const InjectionPlan& plan : hooks.plans) {
    for (const auto& [layer, by_pos] : plan.deltas) {
      if (layer < 0 || layer >= cfg.n_layers) {
        throw std::out_of_range("extend: injection layer out of range");
      }
      for (const auto& [pos, delta] : by_pos) {
        if (pos < base || pos >= base + prompt_len) {
          throw std::out_of_range("extend: injection position " + std::to_string(pos) +
                                  " outside this call's prompt range");
        }
        if (delta.size() != d) {
          throw std::invalid_argument("extend: injection delta width mismatch");
        }
        auto [it, inserted] = edits[layer].try_emplace(pos, delta);
        if (!inserted) {
          it->second += delta;
        }
      }
    }
  }

  GenerationRecord rec;
  for (int layer : hooks.capture_layers) {
    rec.trajectories[layer] = Eigen::MatrixXf::Zero(budget + 1, d);
    if (hooks.capture_prompt_states) {
      rec.prompt_states[layer] = Eigen::MatrixXf::Zero(prompt_len, d);
    }
  }
  if (settings.record_step_logits) {
    rec.step_logits = Eigen::MatrixXf::Zero(budget, cfg.vocab_size);
    rec.step_distributions = Eigen::MatrixXf::Zero(budget, cfg.vocab_size);
  }
  if (settings.mode == DecodeMode::cipher) {
    rec.cipher_embeddings = Eigen::MatrixXf::Zero(budget, d);
  }

  // Process the prompt positions strictly sequentially (prefill and decode
  // share this code path, so they are bit-identical by construction).
  std::map<int, Eigen::MatrixXf> last_capture;
  for (int layer : hooks.capture_layers) {
    last_capture[layer] = Eigen::MatrixXf::Zero(1, d);
  }
  Eigen::VectorXf state;
  for (int i = 0; i < prompt_len; ++i) {
    const PromptItem& item = prompt[i];
    const Eigen::VectorXf input =
        item.embedding ? *item.embedding : model_.embedding_row(item.token);
    const bool is_last = i == prompt_len - 1;
    std::map<int, Eigen::MatrixXf>* sink = nullptr;
    int row = 0;
    if (hooks.capture_prompt_states && !rec.prompt_states.empty()) {
      sink = &rec.prompt_states;
      row = i;
    } else if (is_last && !last_capture.empty()) {
      sink = &last_capture;
    }
    state = forward_position(input, base + i, edits, hooks, sink, row);
    context_.push_back(item.token);
    ++length_;
  }
  for (int layer : hooks.capture_layers) {
    if (hooks.capture_prompt_states) {
      rec.trajectories[layer].row(0) = rec.prompt_states[layer].row(prompt_len - 1);
    } else {
      rec.trajectories[layer].row(0) = last_capture[layer].row(0);
    }
  }

  rng::Stream stream(settings.seed);
  rec.finish_reason = FinishReason::length;
  int emitted = 0;
  for (int i = 1; i <= budget; ++i) {
    const Eigen::VectorXf logits = model_.unembed(state);
    Eigen::VectorXf dist;
    Eigen::VectorXf feedback;
    TokenId chosen = 0;
    switch (settings.mode) {
      case DecodeMode::greedy: {
        chosen = static_cast<TokenId>(argmax_lowest(logits));
        break;
      }
      case DecodeMode::sampled: {
        chosen = sample_token(logits, settings, context_, stream, &dist);
        break;
      }
      case DecodeMode::cipher: {
        if (settings.temperature <= 0.0f) {
          dist = Eigen::VectorXf::Zero(cfg.vocab_size);
          dist[argmax_lowest(logits)] = 1.0f;
        } else {
          dist = stable_softmax(logits / settings.temperature);
        }
        chosen = static_cast<TokenId>(argmax_lowest(logits));
        feedback = model_.tok_emb.transpose() * dist;
        break;
      }
    }
    if (settings.script) {
      chosen = (*settings.script)[i - 1];
      if (static_cast<int>(chosen) >= cfg.vocab_size) {
        throw std::out_of_range("extend: scripted token outside vocabulary");
      }
    }
    if (settings.record_step_logits) {
      rec.step_logits.row(i - 1) = logits.transpose();
      if (dist.size() > 0) {
        rec.step_distributions.row(i - 1) = dist.transpose();
      } else {
        rec.step_distributions.row(i - 1).setZero();
        rec.step_distributions(i - 1, chosen) = 1.0f;
      }
    }
    if (settings.mode == DecodeMode::cipher) {
      rec.cipher_embeddings.row(i - 1) = feedback.transpose();
    }

    rec.tokens.push_back(chosen);
    rec.text += tokenizer_.token_text(chosen);

    // The emitted token is processed immediately so its residual states are
    // available (message payloads align one state to every token).
    const Eigen::VectorXf input =
        settings.mode == DecodeMode::cipher ? feedback : model_.embedding_row(chosen);
    std::map<int, Eigen::MatrixXf>* sink = last_capture.empty() ? nullptr : &last_capture;
    state = forward_position(input, base + prompt_len + i - 1, edits, hooks, sink, 0);
    for (int layer : hooks.capture_layers) {
      rec.trajectories[layer].row(i) = last_capture[layer].row(0);
    }
    context_.push_back(chosen);
    ++length_;
    emitted = i;

    if (stop && stop(rec.text)) {
      rec.finish_reason = FinishReason::stop;
      break;
    }
  }

  for (auto& [layer, m] : rec.trajectories) {
    m.conservativeResize(emitted + 1, d);
  }
  if (settings.record_step_logits) {
    rec.step_logits.conservativeResize(emitted, cfg.vocab_size);
    rec.step_distributions.conservativeResize(emitted, cfg.vocab_size);
  }
  if (settings.mode == DecodeMode::cipher) {
    rec.cipher_embeddings.conservativeResize(emitted, d);
  }
  return rec;
}

GenerationRecord generate(const Model& model, const Tokenizer& tokenizer,
                          std::span<const PromptItem> prompt, const DecodeSettings& settings,
                          const HookBus& hooks, const StopRule& stop) {
  Session session(model, tokenizer);
  return session.extend(prompt, settings, hooks, stop);
}

}  // namespace sde

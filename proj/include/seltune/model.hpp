#pragma once

// GPT-2-style decoder stack: pre-LN residual blocks, causal attention with
// key-padding masking, final LayerNorm, and an affine classification head
// read off the last non-padding token.

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "seltune/batch.hpp"
#include "seltune/rng.hpp"
#include "seltune/tensor.hpp"

namespace seltune {

struct ModelConfig {
  int64_t vocab_size = 50257;
  int64_t max_positions = 1024;
  int64_t n_layers = 12;
  int64_t n_heads = 12;
  int64_t d_model = 768;
  int64_t d_ff = 3072;
  double layer_norm_eps = 1e-5;
  int64_t n_classes = 2;
  double dropout_rate = 0.0;

  void validate() const {
    if (vocab_size < 1 || max_positions < 1 || n_layers < 1 || n_heads < 1 ||
        d_model < 1 || d_ff < 1 || n_classes < 1)
      throw std::invalid_argument("model config: extents must be positive");
    if (d_model % n_heads != 0)
      throw std::invalid_argument("model config: d_model " +
                                  std::to_string(d_model) +
                                  " not divisible by n_heads " +
                                  std::to_string(n_heads));
    if (dropout_rate < 0.0 || dropout_rate >= 1.0)
      throw std::invalid_argument("model config: dropout_rate must be in [0,1)");
  }

  static ModelConfig gpt2_small(int64_t n_classes = 2) {
    ModelConfig c;
    c.n_classes = n_classes;
    return c;
  }

  static ModelConfig toy(int64_t n_classes = 2) {
    ModelConfig c;
    c.vocab_size = 256;
    c.max_positions = 64;
    c.n_layers = 2;
    c.n_heads = 2;
    c.d_model = 16;
    c.d_ff = 64;
    c.n_classes = n_classes;
    return c;
  }
};

// Canonical tensor list, in the order used for checkpoint layout and
// validation. Embeddings first so a d_model mismatch is reported against
// `token_embedding`.
inline std::vector<std::pair<std::string, Shape>> expected_shapes(
    const ModelConfig& cfg) {
  std::vector<std::pair<std::string, Shape>> out;
  const int64_t d = cfg.d_model;
  out.emplace_back("token_embedding", Shape{cfg.vocab_size, d});
  out.emplace_back("position_embedding", Shape{cfg.max_positions, d});
  for (int64_t i = 0; i < cfg.n_layers; ++i) {
    const std::string b = "block" + std::to_string(i) + ".";
    out.emplace_back(b + "ln1.gamma", Shape{d});
    out.emplace_back(b + "ln1.beta", Shape{d});
    out.emplace_back(b + "attn.w_qkv", Shape{d, 3 * d});
    out.emplace_back(b + "attn.b_qkv", Shape{3 * d});
    out.emplace_back(b + "attn.w_proj", Shape{d, d});
    out.emplace_back(b + "attn.b_proj", Shape{d});
    out.emplace_back(b + "ln2.gamma", Shape{d});
    out.emplace_back(b + "ln2.beta", Shape{d});
    out.emplace_back(b + "mlp.w_fc", Shape{d, cfg.d_ff});
    out.emplace_back(b + "mlp.b_fc", Shape{cfg.d_ff});
    out.emplace_back(b + "mlp.w_out", Shape{cfg.d_ff, d});
    out.emplace_back(b + "mlp.b_out", Shape{d});
  }
  out.emplace_back("final_ln.gamma", Shape{d});
  out.emplace_back("final_ln.beta", Shape{d});
  out.emplace_back("head.w", Shape{d, cfg.n_classes});
  out.emplace_back("head.b", Shape{cfg.n_classes});
  return out;
}

// Named, shaped parameter set. The per-tensor trainable flag is the tensor's
// requires_grad bit; apply_strategy partitions it.
template <typename S>
struct ParameterStoreT {
  std::map<std::string, TensorT<S>> tensors;

  TensorT<S>& at(const std::string& name) {
    auto it = tensors.find(name);
    if (it == tensors.end())
      throw std::out_of_range("parameter store: no tensor named `" + name + "`");
    return it->second;
  }
  const TensorT<S>& at(const std::string& name) const {
    auto it = tensors.find(name);
    if (it == tensors.end())
      throw std::out_of_range("parameter store: no tensor named `" + name + "`");
    return it->second;
  }
  bool has(const std::string& name) const { return tensors.count(name) != 0; }
};

using ParameterStore = ParameterStoreT<float>;

// W_c ~ Normal(0, 0.02), b_c = 0, reproducible from the seed.
template <typename S>
std::pair<TensorT<S>, TensorT<S>> init_head(const ModelConfig& cfg,
                                            uint64_t seed) {
  Rng rng(seed);
  TensorT<S> w = TensorT<S>::randn({cfg.d_model, cfg.n_classes}, rng, S(0.02),
                                   /*requires_grad=*/true);
  TensorT<S> b = TensorT<S>::zeros({cfg.n_classes}, /*requires_grad=*/true);
  return {std::move(w), std::move(b)};
}

// Seeded random initialization of the full store: weights Normal(0, 0.02),
// biases and LayerNorm betas zero, LayerNorm gammas one. All trainable.
template <typename S>
ParameterStoreT<S> init_random_store(const ModelConfig& cfg, uint64_t seed) {
  cfg.validate();
  Rng rng(seed);
  ParameterStoreT<S> store;
  for (const auto& [name, shape] : expected_shapes(cfg)) {
    TensorT<S> t;
    const bool is_gamma = name.size() > 5 && name.rfind("gamma") == name.size() - 5;
    const bool is_bias =
        (name.size() > 4 && name.rfind("beta") == name.size() - 4) ||
        name.find(".b_") != std::string::npos || name == "head.b";
    if (is_gamma)
      t = TensorT<S>::filled(shape, S(1), true);
    else if (is_bias)
      t = TensorT<S>::zeros(shape, true);
    else
      t = TensorT<S>::randn(shape, rng, S(0.02), true);
    store.tensors.emplace(name, std::move(t));
  }
  return store;
}

// Hidden states H for the whole batch: [B, T, d_model]. Causal attention with
// additive -inf masking of future and padded key positions; pre-LN blocks;
// final LayerNorm applied to the stack output.
template <typename S>
TensorT<S> forward_hidden_states(const ParameterStoreT<S>& params,
                                 const EncodedBatch& batch,
                                 const ModelConfig& cfg,
                                 Rng* dropout_rng = nullptr) {
  const int64_t b = batch.batch_size, t = batch.seq_len;
  if (t > cfg.max_positions)
    throw std::invalid_argument(
        "forward: sequence length " + std::to_string(t) +
        " exceeds max_positions " + std::to_string(cfg.max_positions));
  if (cfg.dropout_rate > 0.0 && dropout_rng == nullptr)
    throw std::invalid_argument("forward: dropout_rate > 0 requires an rng");
  const S inv_sqrt_hd =
      static_cast<S>(1.0 / std::sqrt(static_cast<double>(cfg.d_model / cfg.n_heads)));

  TensorT<S> x = embedding_lookup(params.at("token_embedding"), batch.token_ids,
                                  b, t);
  x = add_position(x, params.at("position_embedding"));

  for (int64_t i = 0; i < cfg.n_layers; ++i) {
    const std::string blk = "block" + std::to_string(i) + ".";
    // x <- x + Attn(LN1(x))
    TensorT<S> h = layer_norm(x, params.at(blk + "ln1.gamma"),
                              params.at(blk + "ln1.beta"),
                              static_cast<S>(cfg.layer_norm_eps));
    TensorT<S> qkv =
        add_bias(matmul(h, params.at(blk + "attn.w_qkv")),
                 params.at(blk + "attn.b_qkv"));
    TensorT<S> q = split_heads(slice_last(qkv, 0, cfg.d_model), cfg.n_heads);
    TensorT<S> k =
        split_heads(slice_last(qkv, cfg.d_model, cfg.d_model), cfg.n_heads);
    TensorT<S> v = split_heads(slice_last(qkv, 2 * cfg.d_model, cfg.d_model),
                               cfg.n_heads);
    TensorT<S> scores = scale(bmm_nt(q, k), inv_sqrt_hd);
    scores = apply_attention_mask(scores, batch.attention_mask, b, cfg.n_heads);
    TensorT<S> ctx = merge_heads(bmm_nn(softmax(scores), v), cfg.n_heads);
    TensorT<S> attn_out =
        add_bias(matmul(ctx, params.at(blk + "attn.w_proj")),
                 params.at(blk + "attn.b_proj"));
    if (cfg.dropout_rate > 0.0)
      attn_out = dropout(attn_out, cfg.dropout_rate, *dropout_rng);
    x = add(x, attn_out);

    // x <- x + MLP(LN2(x))
    TensorT<S> h2 = layer_norm(x, params.at(blk + "ln2.gamma"),
                               params.at(blk + "ln2.beta"),
                               static_cast<S>(cfg.layer_norm_eps));
    TensorT<S> f = gelu(
        add_bias(matmul(h2, params.at(blk + "mlp.w_fc")),
                 params.at(blk + "mlp.b_fc")));
    TensorT<S> mlp_out =
        add_bias(matmul(f, params.at(blk + "mlp.w_out")),
                 params.at(blk + "mlp.b_out"));
    if (cfg.dropout_rate > 0.0)
      mlp_out = dropout(mlp_out, cfg.dropout_rate, *dropout_rng);
    x = add(x, mlp_out);
  }

  return layer_norm(x, params.at("final_ln.gamma"), params.at("final_ln.beta"),
                    static_cast<S>(cfg.layer_norm_eps));
}

// h_T: hidden state at the last non-padding position of each row.
template <typename S>
TensorT<S> last_token_representation(const TensorT<S>& hidden,
                                     const EncodedBatch& batch) {
  return select_rows(hidden, batch.last_index);
}

// z = h_T W_c + b_c; no activation.
template <typename S>
TensorT<S> classify(const TensorT<S>& h_last, const ParameterStoreT<S>& params) {
  return add_bias(matmul(h_last, params.at("head.w")), params.at("head.b"));
}

// Convenience: full path from batch to logits.
template <typename S>
TensorT<S> forward_logits(const ParameterStoreT<S>& params,
                          const EncodedBatch& batch, const ModelConfig& cfg,
                          Rng* dropout_rng = nullptr) {
  TensorT<S> h = forward_hidden_states(params, batch, cfg, dropout_rng);
  return classify(last_token_representation(h, batch), params);
}

}  // namespace seltune

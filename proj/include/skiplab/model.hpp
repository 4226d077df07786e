// Copyright 2026 The skiplab Authors
// SPDX-License-Identifier: Apache-2.0

// Decoder-only transformer: sinusoidal positions, causal multi-head
// self-attention, ReLU feed-forward, residual + layer norm around each
// sublayer. Every layer can be bypassed whole or per sublayer.

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "skiplab/tensor.hpp"

namespace skiplab {

class SkipPlan;
class LayerTrace;

using TokenId = std::uint32_t;

enum class NormPlacement : std::uint8_t {
  Post = 0,  // y = LN(x + sublayer(x))
  Pre = 1,   // y = x + sublayer(LN(x))
};

enum class LayerSkipMode : std::uint8_t {
  Active,
  SkipFull,
  SkipAttention,
  SkipFfwd,
};

std::string_view to_string(LayerSkipMode mode);
std::string_view to_string(NormPlacement placement);

struct ModelConfig {
  std::uint32_t vocab_size = 258;
  std::uint32_t d_model = 64;
  std::uint32_t n_layers = 4;
  std::uint32_t n_heads = 4;
  std::uint32_t d_ff = 256;
  std::uint32_t max_seq_len = 128;
  NormPlacement norm_placement = NormPlacement::Post;
  float layernorm_eps = 1e-5f;

  /// Per-head width; d_k = d_v = d_model / n_heads.
  std::size_t head_dim() const { return d_model / n_heads; }

  /// Throws RejectedInput when a count is zero, d_model is not a multiple
  /// of n_heads, or eps is not positive.
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct LayerWeights {
  Matrix wq, wk, wv;  // d_model x d_model, head h owns columns [h*d_k, (h+1)*d_k)
  Matrix wo;          // d_model x d_model
  Matrix w1;          // d_model x d_ff
  Vector b1;          // d_ff
  Matrix w2;          // d_ff x d_model
  Vector b2;          // d_model
  Vector ln1_gain, ln1_bias;
  Vector ln2_gain, ln2_bias;

  friend bool operator==(const LayerWeights&, const LayerWeights&) = default;
};

struct ModelWeights {
  Matrix token_embedding;  // vocab_size x d_model
  std::vector<LayerWeights> layers;
  Vector final_gain, final_bias;
  Matrix output_projection;  // d_model x vocab_size

  friend bool operator==(const ModelWeights&, const ModelWeights&) = default;
};

/// Provenance of the initial weights, carried through checkpoints.
struct InitInfo {
  std::uint64_t seed = 0;
  float stddev = 0.02f;

  friend bool operator==(const InitInfo&, const InitInfo&) = default;
};

struct Model {
  ModelConfig config;
  ModelWeights weights;
  InitInfo init;

  friend bool operator==(const Model&, const Model&) = default;
};

/// A named, shaped window onto one weight tensor.
template <typename T>
struct TensorRef {
  std::string name;
  std::vector<std::size_t> dims;
  std::span<T> values;
};

/// Every tensor in canonical order (embedding, layers, final norm, output).
std::vector<TensorRef<float>> tensors(ModelWeights& weights);
std::vector<TensorRef<const float>> tensors(const ModelWeights& weights);

/// Zero-filled weights with the shapes `cfg` implies.
ModelWeights zero_weights(const ModelConfig& cfg);

/// Throws RejectedInput on any shape inconsistency or non-finite value.
void validate_weights(const ModelConfig& cfg, const ModelWeights& weights);

/// Additive stand-in for -inf at masked attention positions.
inline constexpr float kMaskValue = -1e9f;

Vector positional_encoding(std::size_t pos, const ModelConfig& cfg);

/// softmax(Q Kᵀ / √d_k + mask) V; with `causal_mask`, row i sees keys 0..i.
Matrix scaled_dot_attention(const Matrix& q, const Matrix& k, const Matrix& v,
                            bool causal_mask);

/// Causal multi-head self-attention over x (seq x d_model), including Wo.
Matrix multi_head_attention(const Matrix& x, const LayerWeights& lw, const ModelConfig& cfg);

/// max(0, x W1 + b1) W2 + b2 for one position.
Vector feed_forward(const Vector& x, const Matrix& w1, const Vector& b1, const Matrix& w2,
                    const Vector& b2);
/// The same network applied to every row.
Matrix feed_forward_rows(const Matrix& x, const Matrix& w1, const Vector& b1,
                         const Matrix& w2, const Vector& b2);

/// Attention sublayer wrapped in its residual and norm.
Matrix attention_block(const Matrix& x, const LayerWeights& lw, const ModelConfig& cfg);
/// Feed-forward sublayer wrapped in its residual and norm.
Matrix ffwd_block(const Matrix& x, const LayerWeights& lw, const ModelConfig& cfg);

/// One decoder layer with each sublayer block run or bypassed. A bypassed
/// block contributes nothing, not even its residual add or norm.
Matrix sublayer_forward(const Matrix& x, const LayerWeights& lw, const ModelConfig& cfg,
                        bool run_attention, bool run_ffwd);

/// One decoder layer under `mode`. A skipped block is the identity,
/// residual and norm included. When `trace` is set, the cosine between
/// the layer's input and output rows is recorded under `layer_index`.
Matrix layer_forward(const Matrix& x, const LayerWeights& lw, LayerSkipMode mode,
                     const ModelConfig& cfg, LayerTrace* trace = nullptr,
                     std::size_t layer_index = 0);

/// Token embeddings plus positional encodings (seq x d_model).
Matrix embed(std::span<const TokenId> tokens, const Model& model);

/// Full forward pass to logits (seq x vocab_size). A null plan runs every
/// layer Active.
Matrix model_forward(std::span<const TokenId> tokens, const Model& model,
                     const SkipPlan* plan = nullptr, LayerTrace* trace = nullptr);

/// Logits for the position after the last token only.
Vector next_token_logits(std::span<const TokenId> tokens, const Model& model,
                         const SkipPlan* plan = nullptr);

/// Greedy argmax of next_token_logits; ties go to the lowest id.
TokenId greedy_next_token(std::span<const TokenId> tokens, const Model& model,
                          const SkipPlan* plan = nullptr);

}  // namespace skiplab

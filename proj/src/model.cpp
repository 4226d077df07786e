// Copyright 2026 The skiplab Authors
// SPDX-License-Identifier: Apache-2.0

#include "skiplab/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "skiplab/error.hpp"
#include "skiplab/skip_plan.hpp"
#include "skiplab/trace.hpp"

namespace skiplab {

std::string_view to_string(LayerSkipMode mode) {
  switch (mode) {
    case LayerSkipMode::Active:
      return "active";
    case LayerSkipMode::SkipFull:
      return "skip_full";
    case LayerSkipMode::SkipAttention:
      return "skip_attn";
    case LayerSkipMode::SkipFfwd:
      return "skip_ffwd";
  }
  return "?";
}

std::string_view to_string(NormPlacement placement) {
  return placement == NormPlacement::Post ? "post" : "pre";
}

void ModelConfig::validate() const {
  if (vocab_size == 0 || d_model == 0 || n_layers == 0 || n_heads == 0 || d_ff == 0 ||
      max_seq_len == 0) {
    throw RejectedInput("ModelConfig: all counts must be at least 1");
  }
  if (d_model % n_heads != 0) {
    throw RejectedInput("ModelConfig: d_model " + std::to_string(d_model) +
                        " is not divisible by n_heads " + std::to_string(n_heads));
  }
  if (!(layernorm_eps > 0.0f) || !std::isfinite(layernorm_eps)) {
    throw RejectedInput("ModelConfig: layernorm_eps must be positive");
  }
  if (norm_placement != NormPlacement::Post && norm_placement != NormPlacement::Pre) {
    throw RejectedInput("ModelConfig: unknown norm placement");
  }
}

namespace {

template <typename T, typename W>
std::vector<TensorRef<T>> collect_tensors(W& w) {
  std::vector<TensorRef<T>> out;
  auto mat = [&out](std::string name, auto& m) {
    out.push_back({std::move(name), {m.rows(), m.cols()}, m.values()});
  };
  auto vec = [&out](std::string name, auto& v) {
    out.push_back({std::move(name), {v.size()}, v.values()});
  };
  mat("token_embedding", w.token_embedding);
  for (std::size_t i = 0; i < w.layers.size(); ++i) {
    auto& l = w.layers[i];
    const std::string p = "layers." + std::to_string(i) + ".";
    mat(p + "wq", l.wq);
    mat(p + "wk", l.wk);
    mat(p + "wv", l.wv);
    mat(p + "wo", l.wo);
    mat(p + "w1", l.w1);
    vec(p + "b1", l.b1);
    mat(p + "w2", l.w2);
    vec(p + "b2", l.b2);
    vec(p + "ln1.gain", l.ln1_gain);
    vec(p + "ln1.bias", l.ln1_bias);
    vec(p + "ln2.gain", l.ln2_gain);
    vec(p + "ln2.bias", l.ln2_bias);
  }
  vec("final_norm.gain", w.final_gain);
  vec("final_norm.bias", w.final_bias);
  mat("output_projection", w.output_projection);
  return out;
}

}  // namespace

std::vector<TensorRef<float>> tensors(ModelWeights& weights) {
  return collect_tensors<float>(weights);
}

std::vector<TensorRef<const float>> tensors(const ModelWeights& weights) {
  return collect_tensors<const float>(weights);
}

ModelWeights zero_weights(const ModelConfig& cfg) {
  cfg.validate();
  const std::size_t d = cfg.d_model;
  ModelWeights w;
  w.token_embedding = Matrix(cfg.vocab_size, d);
  w.layers.resize(cfg.n_layers);
  for (auto& l : w.layers) {
    l.wq = Matrix(d, d);
    l.wk = Matrix(d, d);
    l.wv = Matrix(d, d);
    l.wo = Matrix(d, d);
    l.w1 = Matrix(d, cfg.d_ff);
    l.b1 = Vector(cfg.d_ff);
    l.w2 = Matrix(cfg.d_ff, d);
    l.b2 = Vector(d);
    l.ln1_gain = Vector(d);
    l.ln1_bias = Vector(d);
    l.ln2_gain = Vector(d);
    l.ln2_bias = Vector(d);
  }
  w.final_gain = Vector(d);
  w.final_bias = Vector(d);
  w.output_projection = Matrix(d, cfg.vocab_size);
  return w;
}

void validate_weights(const ModelConfig& cfg, const ModelWeights& weights) {
  cfg.validate();
  if (weights.layers.size() != cfg.n_layers) {
    throw RejectedInput("weights have " + std::to_string(weights.layers.size()) +
                        " layers, config says " + std::to_string(cfg.n_layers));
  }
  const ModelWeights expected = zero_weights(cfg);
  const auto want = tensors(expected);
  const auto have = tensors(weights);
  for (std::size_t i = 0; i < want.size(); ++i) {
    if (have[i].dims != want[i].dims) {
      throw RejectedInput("tensor " + want[i].name + " has the wrong shape");
    }
    if (!all_finite(have[i].values)) {
      throw RejectedInput("tensor " + want[i].name + " contains non-finite values");
    }
  }
}

Vector positional_encoding(std::size_t pos, const ModelConfig& cfg) {
  if (pos >= cfg.max_seq_len) {
    throw RejectedInput("positional_encoding: position " + std::to_string(pos) +
                        " outside [0, " + std::to_string(cfg.max_seq_len) + ")");
  }
  const std::size_t d = cfg.d_model;
  Vector pe(d);
  for (std::size_t i = 0; 2 * i < d; ++i) {
    const double angle = static_cast<double>(pos) /
                         std::pow(10000.0, static_cast<double>(2 * i) / static_cast<double>(d));
    pe[2 * i] = static_cast<float>(std::sin(angle));
    if (2 * i + 1 < d) pe[2 * i + 1] = static_cast<float>(std::cos(angle));
  }
  return pe;
}

Matrix scaled_dot_attention(const Matrix& q, const Matrix& k, const Matrix& v,
                            bool causal_mask) {
  if (q.cols() != k.cols()) {
    throw RejectedInput("scaled_dot_attention: Q and K widths differ");
  }
  if (k.rows() != v.rows()) {
    throw RejectedInput("scaled_dot_attention: K and V lengths differ");
  }
  Matrix scores = matmul_transposed_b(q, k);
  const float scale = static_cast<float>(1.0 / std::sqrt(static_cast<double>(q.cols())));
  scale_inplace(scores.values(), scale);
  if (causal_mask) {
    for (std::size_t i = 0; i < scores.rows(); ++i)
      for (std::size_t j = i + 1; j < scores.cols(); ++j) scores(i, j) += kMaskValue;
  }
  for (std::size_t i = 0; i < scores.rows(); ++i) softmax_inplace(scores.row(i));
  return matmul(scores, v);
}

namespace {

Matrix column_slice(const Matrix& m, std::size_t begin, std::size_t width) {
  Matrix out(m.rows(), width);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto src = m.row(r).subspan(begin, width);
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  return out;
}

void write_columns(Matrix& dst, const Matrix& src, std::size_t begin) {
  for (std::size_t r = 0; r < src.rows(); ++r) {
    auto s = src.row(r);
    std::copy(s.begin(), s.end(), dst.row(r).begin() + static_cast<std::ptrdiff_t>(begin));
  }
}

Matrix norm_rows(const Matrix& x, const Vector& gain, const Vector& bias, float eps) {
  Matrix out(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r)
    layer_norm_into(x.row(r), gain.values(), bias.values(), eps, out.row(r));
  return out;
}

}  // namespace

Matrix multi_head_attention(const Matrix& x, const LayerWeights& lw, const ModelConfig& cfg) {
  if (x.cols() != cfg.d_model) {
    throw RejectedInput("multi_head_attention: input width " + std::to_string(x.cols()) +
                        " != d_model " + std::to_string(cfg.d_model));
  }
  const Matrix q = matmul(x, lw.wq);
  const Matrix k = matmul(x, lw.wk);
  const Matrix v = matmul(x, lw.wv);
  const std::size_t dk = cfg.head_dim();
  Matrix heads(x.rows(), cfg.d_model);
  for (std::size_t h = 0; h < cfg.n_heads; ++h) {
    const std::size_t off = h * dk;
    write_columns(heads,
                  scaled_dot_attention(column_slice(q, off, dk), column_slice(k, off, dk),
                                       column_slice(v, off, dk), /*causal_mask=*/true),
                  off);
  }
  return matmul(heads, lw.wo);
}

Matrix feed_forward_rows(const Matrix& x, const Matrix& w1, const Vector& b1,
                         const Matrix& w2, const Vector& b2) {
  Matrix hidden = matmul(x, w1);
  add_row_bias(hidden, b1);
  relu_inplace(hidden);
  Matrix out = matmul(hidden, w2);
  add_row_bias(out, b2);
  return out;
}

Vector feed_forward(const Vector& x, const Matrix& w1, const Vector& b1, const Matrix& w2,
                    const Vector& b2) {
  const Matrix row(1, x.size(), std::vector<float>(x.values().begin(), x.values().end()));
  const Matrix out = feed_forward_rows(row, w1, b1, w2, b2);
  return Vector(std::vector<float>(out.values().begin(), out.values().end()));
}

Matrix attention_block(const Matrix& x, const LayerWeights& lw, const ModelConfig& cfg) {
  if (cfg.norm_placement == NormPlacement::Post) {
    return norm_rows(add(x, multi_head_attention(x, lw, cfg)), lw.ln1_gain, lw.ln1_bias,
                     cfg.layernorm_eps);
  }
  return add(x, multi_head_attention(norm_rows(x, lw.ln1_gain, lw.ln1_bias, cfg.layernorm_eps),
                                     lw, cfg));
}

Matrix ffwd_block(const Matrix& x, const LayerWeights& lw, const ModelConfig& cfg) {
  if (cfg.norm_placement == NormPlacement::Post) {
    return norm_rows(add(x, feed_forward_rows(x, lw.w1, lw.b1, lw.w2, lw.b2)), lw.ln2_gain,
                     lw.ln2_bias, cfg.layernorm_eps);
  }
  return add(x, feed_forward_rows(norm_rows(x, lw.ln2_gain, lw.ln2_bias, cfg.layernorm_eps),
                                  lw.w1, lw.b1, lw.w2, lw.b2));
}

Matrix sublayer_forward(const Matrix& x, const LayerWeights& lw, const ModelConfig& cfg,
                        bool run_attention, bool run_ffwd) {
  if (run_attention && run_ffwd) return ffwd_block(attention_block(x, lw, cfg), lw, cfg);
  if (run_attention) return attention_block(x, lw, cfg);
  if (run_ffwd) return ffwd_block(x, lw, cfg);
  return x;
}

Matrix layer_forward(const Matrix& x, const LayerWeights& lw, LayerSkipMode mode,
                     const ModelConfig& cfg, LayerTrace* trace, std::size_t layer_index) {
  const bool attn = mode == LayerSkipMode::Active || mode == LayerSkipMode::SkipFfwd;
  const bool ffwd = mode == LayerSkipMode::Active || mode == LayerSkipMode::SkipAttention;
  Matrix out = sublayer_forward(x, lw, cfg, attn, ffwd);
  if (trace != nullptr) trace->record_layer(layer_index, x, out);
  return out;
}

namespace {

void check_plan(const SkipPlan* plan, const ModelConfig& cfg) {
  if (plan != nullptr && plan->n_layers() != cfg.n_layers) {
    throw RejectedInput("plan covers " + std::to_string(plan->n_layers()) +
                        " layers but the model has " + std::to_string(cfg.n_layers));
  }
}

Matrix run_layers(std::span<const TokenId> tokens, const Model& model, const SkipPlan* plan,
                  LayerTrace* trace) {
  const ModelConfig& cfg = model.config;
  check_plan(plan, cfg);
  if (trace != nullptr && trace->n_layers() != cfg.n_layers) {
    throw RejectedInput("trace covers " + std::to_string(trace->n_layers()) +
                        " layers but the model has " + std::to_string(cfg.n_layers));
  }
  Matrix x = embed(tokens, model);
  for (std::size_t l = 0; l < cfg.n_layers; ++l) {
    const LayerSkipMode mode = plan != nullptr ? plan->mode(l) : LayerSkipMode::Active;
    Matrix y = layer_forward(x, model.weights.layers[l], mode, cfg, trace, l);
    if (y.rows() != x.rows() || y.cols() != x.cols()) {
      throw std::logic_error("layer " + std::to_string(l) + " changed the hidden-state shape");
    }
    x = std::move(y);
  }
  return x;
}

}  // namespace

Matrix embed(std::span<const TokenId> tokens, const Model& model) {
  const ModelConfig& cfg = model.config;
  if (tokens.empty()) throw RejectedInput("embed: empty token sequence");
  if (tokens.size() > cfg.max_seq_len) {
    throw RejectedInput("sequence of " + std::to_string(tokens.size()) +
                        " tokens exceeds max_seq_len " + std::to_string(cfg.max_seq_len));
  }
  Matrix x(tokens.size(), cfg.d_model);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i] >= cfg.vocab_size) {
      throw RejectedInput("token id " + std::to_string(tokens[i]) + " at position " +
                          std::to_string(i) + " is outside the vocabulary");
    }
    const auto emb = model.weights.token_embedding.row(tokens[i]);
    const Vector pe = positional_encoding(i, cfg);
    auto row = x.row(i);
    for (std::size_t c = 0; c < cfg.d_model; ++c) row[c] = emb[c] + pe[c];
  }
  return x;
}

Matrix model_forward(std::span<const TokenId> tokens, const Model& model, const SkipPlan* plan,
                     LayerTrace* trace) {
  const ModelConfig& cfg = model.config;
  const Matrix hidden = run_layers(tokens, model, plan, trace);
  Matrix normed(hidden.rows(), hidden.cols());
  for (std::size_t r = 0; r < hidden.rows(); ++r) {
    layer_norm_into(hidden.row(r), model.weights.final_gain.values(),
                    model.weights.final_bias.values(), cfg.layernorm_eps, normed.row(r));
  }
  return matmul(normed, model.weights.output_projection);
}

Vector next_token_logits(std::span<const TokenId> tokens, const Model& model,
                         const SkipPlan* plan) {
  const ModelConfig& cfg = model.config;
  const Matrix hidden = run_layers(tokens, model, plan, nullptr);
  Matrix last(1, cfg.d_model);
  layer_norm_into(hidden.row(hidden.rows() - 1), model.weights.final_gain.values(),
                  model.weights.final_bias.values(), cfg.layernorm_eps, last.row(0));
  const Matrix logits = matmul(last, model.weights.output_projection);
  return Vector(std::vector<float>(logits.values().begin(), logits.values().end()));
}

TokenId greedy_next_token(std::span<const TokenId> tokens, const Model& model,
                          const SkipPlan* plan) {
  const Vector logits = next_token_logits(tokens, model, plan);
  const auto v = logits.values();
  return static_cast<TokenId>(std::max_element(v.begin(), v.end()) - v.begin());
}

}  // namespace skiplab

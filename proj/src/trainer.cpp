// Copyright 2026 The skiplab Authors
// SPDX-License-Identifier: Apache-2.0

#include "skiplab/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <utility>

#include "skiplab/error.hpp"
#include "skiplab/tokenizer.hpp"

namespace skiplab {

void TrainConfig::validate(const ModelConfig& model) const {
  if (!(learning_rate > 0.0)) throw RejectedInput("learning rate must be positive");
  if (batch_size == 0) throw RejectedInput("batch size must be at least 1");
  if (context_length == 0 || context_length > model.max_seq_len) {
    throw RejectedInput("context length must lie in [1, max_seq_len]");
  }
  if (optimizer == OptimizerKind::Adam &&
      !(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0 && adam_eps > 0.0)) {
    throw RejectedInput("invalid Adam hyperparameters");
  }
}

double cross_entropy_loss(const Matrix& logits, std::span<const TokenId> targets) {
  if (targets.size() != logits.rows()) {
    throw RejectedInput("cross_entropy_loss: " + std::to_string(targets.size()) +
                        " targets for " + std::to_string(logits.rows()) + " rows");
  }
  if (targets.empty()) throw RejectedInput("cross_entropy_loss: no positions");
  double total = 0.0;
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    if (targets[r] >= logits.cols()) {
      throw RejectedInput("cross_entropy_loss: target id " + std::to_string(targets[r]) +
                          " outside the vocabulary");
    }
    const auto row = logits.row(r);
    const double max = *std::max_element(row.begin(), row.end());
    double sum = 0.0;
    for (float v : row) sum += std::exp(v - max);
    total += (max + std::log(sum)) - row[targets[r]];
  }
  return total / static_cast<double>(logits.rows());
}

Batch sample_batch(std::span<const TokenId> stream, std::size_t batch_size,
                   std::size_t context_length, Rng& rng) {
  if (stream.size() < 2) throw RejectedInput("training stream needs at least two tokens");
  const std::size_t t = std::min(context_length, stream.size() - 1);
  Batch batch;
  for (std::size_t b = 0; b < batch_size; ++b) {
    const std::size_t start = rng.uniform_index(stream.size() - t);
    batch.inputs.emplace_back(stream.begin() + start, stream.begin() + start + t);
    batch.targets.emplace_back(stream.begin() + start + 1, stream.begin() + start + t + 1);
  }
  return batch;
}

Batch sequential_batch(std::span<const TokenId> stream, std::size_t context_length) {
  if (stream.size() < 2) throw RejectedInput("stream needs at least two tokens");
  Batch batch;
  for (std::size_t start = 0; start + 1 < stream.size(); start += context_length) {
    const std::size_t t = std::min(context_length, stream.size() - 1 - start);
    batch.inputs.emplace_back(stream.begin() + start, stream.begin() + start + t);
    batch.targets.emplace_back(stream.begin() + start + 1, stream.begin() + start + t + 1);
  }
  return batch;
}

double batch_loss(const Model& model, const Batch& batch, const SkipPlan* plan) {
  double total = 0.0;
  std::size_t positions = 0;
  for (std::size_t i = 0; i < batch.inputs.size(); ++i) {
    const Matrix logits = model_forward(batch.inputs[i], model, plan);
    total += cross_entropy_loss(logits, batch.targets[i]) *
             static_cast<double>(batch.targets[i].size());
    positions += batch.targets[i].size();
  }
  if (positions == 0) throw RejectedInput("batch_loss: empty batch");
  return total / static_cast<double>(positions);
}

namespace {

// ---- reverse-mode building blocks -------------------------------------

struct NormCache {
  Matrix xhat;
  std::vector<double> inv_std;
};

Matrix norm_forward(const Matrix& x, const Vector& gain, const Vector& bias, float eps,
                    NormCache& cache) {
  Matrix out(x.rows(), x.cols());
  cache.xhat = Matrix(x.rows(), x.cols());
  cache.inv_std.assign(x.rows(), 0.0);
  const double n = static_cast<double>(x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    layer_norm_into(x.row(r), gain.values(), bias.values(), eps, out.row(r));
    const auto row = x.row(r);
    double mean = 0.0;
    for (float v : row) mean += v;
    mean /= n;
    double var = 0.0;
    for (float v : row) var += (v - mean) * (v - mean);
    var /= n;
    const double inv = 1.0 / std::sqrt(var + static_cast<double>(eps));
    cache.inv_std[r] = inv;
    for (std::size_t c = 0; c < row.size(); ++c)
      cache.xhat(r, c) = static_cast<float>((row[c] - mean) * inv);
  }
  return out;
}

Matrix norm_backward(const Matrix& dy, const NormCache& cache, const Vector& gain,
                     Vector& dgain, Vector& dbias) {
  Matrix dx(dy.rows(), dy.cols());
  const double n = static_cast<double>(dy.cols());
  std::vector<double> dxhat(dy.cols());
  for (std::size_t r = 0; r < dy.rows(); ++r) {
    double mean_d = 0.0, mean_dx = 0.0;
    for (std::size_t c = 0; c < dy.cols(); ++c) {
      const double g = dy(r, c);
      const double xh = cache.xhat(r, c);
      dgain[c] += static_cast<float>(g * xh);
      dbias[c] += static_cast<float>(g);
      dxhat[c] = g * gain[c];
      mean_d += dxhat[c];
      mean_dx += dxhat[c] * xh;
    }
    mean_d /= n;
    mean_dx /= n;
    for (std::size_t c = 0; c < dy.cols(); ++c) {
      dx(r, c) = static_cast<float>(cache.inv_std[r] *
                                    (dxhat[c] - mean_d - cache.xhat(r, c) * mean_dx));
    }
  }
  return dx;
}

void accumulate(Matrix& dst, const Matrix& delta) { add_inplace(dst, delta); }

void accumulate_column_sums(Vector& dst, const Matrix& m) {
  for (std::size_t c = 0; c < m.cols(); ++c) {
    double s = 0.0;
    for (std::size_t r = 0; r < m.rows(); ++r) s += m(r, c);
    dst[c] += static_cast<float>(s);
  }
}

Matrix column_slice(const Matrix& m, std::size_t begin, std::size_t width) {
  Matrix out(m.rows(), width);
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < width; ++c) out(r, c) = m(r, begin + c);
  return out;
}

void write_columns(Matrix& dst, const Matrix& src, std::size_t begin) {
  for (std::size_t r = 0; r < src.rows(); ++r)
    for (std::size_t c = 0; c < src.cols(); ++c) dst(r, begin + c) = src(r, c);
}

struct AttentionCache {
  Matrix input;
  Matrix q, k, v;
  std::vector<Matrix> probs;
  Matrix heads;
};

Matrix attention_forward(const Matrix& x, const LayerWeights& lw, const ModelConfig& cfg,
                         AttentionCache& c) {
  c.input = x;
  c.q = matmul(x, lw.wq);
  c.k = matmul(x, lw.wk);
  c.v = matmul(x, lw.wv);
  const std::size_t dk = cfg.head_dim();
  const float scale = static_cast<float>(1.0 / std::sqrt(static_cast<double>(dk)));
  c.heads = Matrix(x.rows(), cfg.d_model);
  c.probs.clear();
  for (std::size_t h = 0; h < cfg.n_heads; ++h) {
    const std::size_t off = h * dk;
    Matrix scores = matmul_transposed_b(column_slice(c.q, off, dk), column_slice(c.k, off, dk));
    scale_inplace(scores.values(), scale);
    for (std::size_t i = 0; i < scores.rows(); ++i)
      for (std::size_t j = i + 1; j < scores.cols(); ++j) scores(i, j) += kMaskValue;
    for (std::size_t i = 0; i < scores.rows(); ++i) softmax_inplace(scores.row(i));
    write_columns(c.heads, matmul(scores, column_slice(c.v, off, dk)), off);
    c.probs.push_back(std::move(scores));
  }
  return matmul(c.heads, lw.wo);
}

Matrix attention_backward(const Matrix& dout, const LayerWeights& lw, const ModelConfig& cfg,
                          const AttentionCache& c, LayerWeights& g) {
  accumulate(g.wo, matmul_transposed_a(c.heads, dout));
  const Matrix dheads = matmul_transposed_b(dout, lw.wo);
  const std::size_t dk = cfg.head_dim();
  const float scale = static_cast<float>(1.0 / std::sqrt(static_cast<double>(dk)));
  Matrix dq(dout.rows(), cfg.d_model), dk_all(dout.rows(), cfg.d_model),
      dv(dout.rows(), cfg.d_model);
  for (std::size_t h = 0; h < cfg.n_heads; ++h) {
    const std::size_t off = h * dk;
    const Matrix& p = c.probs[h];
    const Matrix qh = column_slice(c.q, off, dk);
    const Matrix kh = column_slice(c.k, off, dk);
    const Matrix vh = column_slice(c.v, off, dk);
    const Matrix doh = column_slice(dheads, off, dk);
    const Matrix dp = matmul_transposed_b(doh, vh);
    write_columns(dv, matmul_transposed_a(p, doh), off);
    Matrix ds(p.rows(), p.cols());
    for (std::size_t i = 0; i < p.rows(); ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < p.cols(); ++j) dot += static_cast<double>(dp(i, j)) * p(i, j);
      for (std::size_t j = 0; j < p.cols(); ++j)
        ds(i, j) = static_cast<float>(p(i, j) * (dp(i, j) - dot)) * scale;
    }
    write_columns(dq, matmul(ds, kh), off);
    write_columns(dk_all, matmul_transposed_a(ds, qh), off);
  }
  accumulate(g.wq, matmul_transposed_a(c.input, dq));
  accumulate(g.wk, matmul_transposed_a(c.input, dk_all));
  accumulate(g.wv, matmul_transposed_a(c.input, dv));
  Matrix dx = matmul_transposed_b(dq, lw.wq);
  add_inplace(dx, matmul_transposed_b(dk_all, lw.wk));
  add_inplace(dx, matmul_transposed_b(dv, lw.wv));
  return dx;
}

struct FfwdCache {
  Matrix input;
  Matrix pre;
  Matrix hidden;
};

Matrix ffwd_forward(const Matrix& x, const LayerWeights& lw, FfwdCache& c) {
  c.input = x;
  c.pre = matmul(x, lw.w1);
  add_row_bias(c.pre, lw.b1);
  c.hidden = c.pre;
  relu_inplace(c.hidden);
  Matrix out = matmul(c.hidden, lw.w2);
  add_row_bias(out, lw.b2);
  return out;
}

Matrix ffwd_backward(const Matrix& dout, const LayerWeights& lw, const FfwdCache& c,
                     LayerWeights& g) {
  accumulate(g.w2, matmul_transposed_a(c.hidden, dout));
  accumulate_column_sums(g.b2, dout);
  Matrix dpre = matmul_transposed_b(dout, lw.w2);
  for (std::size_t i = 0; i < dpre.size(); ++i)
    if (!(c.pre.values()[i] > 0.0f)) dpre.values()[i] = 0.0f;
  accumulate(g.w1, matmul_transposed_a(c.input, dpre));
  accumulate_column_sums(g.b1, dpre);
  return matmul_transposed_b(dpre, lw.w1);
}

// A sublayer wrapped in residual + norm, in either placement.
template <typename Cache>
struct BlockCache {
  Cache sub;
  NormCache norm;
};

template <typename Cache, typename Forward>
Matrix block_forward(const Matrix& x, const Vector& gain, const Vector& bias,
                     const ModelConfig& cfg, BlockCache<Cache>& c, Forward&& sublayer) {
  if (cfg.norm_placement == NormPlacement::Post) {
    return norm_forward(add(x, sublayer(x, c.sub)), gain, bias, cfg.layernorm_eps, c.norm);
  }
  const Matrix normed = norm_forward(x, gain, bias, cfg.layernorm_eps, c.norm);
  return add(x, sublayer(normed, c.sub));
}

template <typename Cache, typename Backward>
Matrix block_backward(const Matrix& dy, const Vector& gain, Vector& dgain, Vector& dbias,
                      const ModelConfig& cfg, const BlockCache<Cache>& c, Backward&& sublayer) {
  if (cfg.norm_placement == NormPlacement::Post) {
    Matrix dr = norm_backward(dy, c.norm, gain, dgain, dbias);
    Matrix dx = sublayer(dr, c.sub);
    add_inplace(dx, dr);
    return dx;
  }
  Matrix dx = norm_backward(sublayer(dy, c.sub), c.norm, gain, dgain, dbias);
  add_inplace(dx, dy);
  return dx;
}

struct LayerCache {
  LayerSkipMode mode = LayerSkipMode::Active;
  BlockCache<AttentionCache> attention;
  BlockCache<FfwdCache> ffwd;
};

bool runs_attention(LayerSkipMode m) {
  return m == LayerSkipMode::Active || m == LayerSkipMode::SkipFfwd;
}
bool runs_ffwd(LayerSkipMode m) {
  return m == LayerSkipMode::Active || m == LayerSkipMode::SkipAttention;
}

// Accumulates gradients for one sequence into `grads`; returns the summed
// (not averaged) loss over its positions. `weight` scales dlogits.
double sequence_backward(const Model& model, std::span<const TokenId> inputs,
                         std::span<const TokenId> targets, const SkipPlan* plan, double weight,
                         ModelWeights& grads) {
  const ModelConfig& cfg = model.config;
  const ModelWeights& w = model.weights;
  Matrix x = embed(inputs, model);
  std::vector<LayerCache> caches(cfg.n_layers);
  for (std::size_t l = 0; l < cfg.n_layers; ++l) {
    const LayerWeights& lw = w.layers[l];
    LayerCache& lc = caches[l];
    lc.mode = plan != nullptr ? plan->mode(l) : LayerSkipMode::Active;
    if (runs_attention(lc.mode)) {
      x = block_forward(x, lw.ln1_gain, lw.ln1_bias, cfg, lc.attention,
                        [&](const Matrix& in, AttentionCache& c) {
                          return attention_forward(in, lw, cfg, c);
                        });
    }
    if (runs_ffwd(lc.mode)) {
      x = block_forward(x, lw.ln2_gain, lw.ln2_bias, cfg, lc.ffwd,
                        [&](const Matrix& in, FfwdCache& c) { return ffwd_forward(in, lw, c); });
    }
  }
  NormCache final_norm;
  const Matrix normed = norm_forward(x, w.final_gain, w.final_bias, cfg.layernorm_eps, final_norm);
  const Matrix logits = matmul(normed, w.output_projection);

  // d(loss)/d(logits) = softmax − onehot, per row, times weight.
  Matrix dlogits(logits.rows(), logits.cols());
  double loss = 0.0;
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    const auto row = logits.row(r);
    if (targets[r] >= cfg.vocab_size) {
      throw RejectedInput("target id " + std::to_string(targets[r]) + " outside the vocabulary");
    }
    const double max = *std::max_element(row.begin(), row.end());
    double sum = 0.0;
    for (float v : row) sum += std::exp(v - max);
    const double log_z = max + std::log(sum);
    loss += log_z - row[targets[r]];
    for (std::size_t c = 0; c < row.size(); ++c) {
      double p = std::exp(row[c] - log_z);
      if (c == targets[r]) p -= 1.0;
      dlogits(r, c) = static_cast<float>(p * weight);
    }
  }

  accumulate(grads.output_projection, matmul_transposed_a(normed, dlogits));
  Matrix dx = norm_backward(matmul_transposed_b(dlogits, w.output_projection), final_norm,
                            w.final_gain, grads.final_gain, grads.final_bias);
  for (std::size_t l = cfg.n_layers; l-- > 0;) {
    const LayerWeights& lw = w.layers[l];
    LayerWeights& lg = grads.layers[l];
    const LayerCache& lc = caches[l];
    if (runs_ffwd(lc.mode)) {
      dx = block_backward(dx, lw.ln2_gain, lg.ln2_gain, lg.ln2_bias, cfg, lc.ffwd,
                          [&](const Matrix& d, const FfwdCache& c) {
                            return ffwd_backward(d, lw, c, lg);
                          });
    }
    if (runs_attention(lc.mode)) {
      dx = block_backward(dx, lw.ln1_gain, lg.ln1_gain, lg.ln1_bias, cfg, lc.attention,
                          [&](const Matrix& d, const AttentionCache& c) {
                            return attention_backward(d, lw, cfg, c, lg);
                          });
    }
  }
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    auto dst = grads.token_embedding.row(inputs[i]);
    const auto src = dx.row(i);
    for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += src[c];
  }
  return loss;
}

}  // namespace

LossAndGradients backward(const Model& model, const Batch& batch, const SkipPlan* plan) {
  if (batch.inputs.empty() || batch.inputs.size() != batch.targets.size()) {
    throw RejectedInput("backward: batch needs matching, nonempty inputs and targets");
  }
  if (plan != nullptr && plan->n_layers() != model.config.n_layers) {
    throw RejectedInput("backward: plan does not match the model depth");
  }
  std::size_t positions = 0;
  for (std::size_t i = 0; i < batch.inputs.size(); ++i) {
    if (batch.inputs[i].size() != batch.targets[i].size()) {
      throw RejectedInput("backward: input and target lengths differ");
    }
    positions += batch.inputs[i].size();
  }
  const double weight = 1.0 / static_cast<double>(positions);
  LossAndGradients out;
  out.gradients = zero_weights(model.config);
  double total = 0.0;
  for (std::size_t i = 0; i < batch.inputs.size(); ++i) {
    total += sequence_backward(model, batch.inputs[i], batch.targets[i], plan, weight,
                               out.gradients);
  }
  out.loss = total * weight;
  if (!std::isfinite(out.loss)) throw TrainingDivergence("non-finite loss", -1);
  for (const auto& t : tensors(std::as_const(out.gradients))) {
    if (!all_finite(t.values)) throw TrainingDivergence("non-finite gradient in " + t.name, -1);
  }
  return out;
}

TrainResult train(Model model, std::span<const std::uint8_t> corpus, const TrainConfig& config,
                  const SkipPlan* plan) {
  if (corpus.empty()) throw RejectedInput("train: empty corpus");
  config.validate(model.config);
  std::vector<TokenId> stream(corpus.begin(), corpus.end());
  for (TokenId t : stream) {
    if (t >= model.config.vocab_size) {
      throw RejectedInput("train: corpus byte " + std::to_string(t) +
                          " is outside the model vocabulary");
    }
  }
  Rng rng(config.seed);
  ModelWeights m1 = zero_weights(model.config);
  ModelWeights m2 = zero_weights(model.config);
  TrainResult result;
  for (std::size_t step = 0; step < config.steps; ++step) {
    const Batch batch = sample_batch(stream, config.batch_size, config.context_length, rng);
    LossAndGradients lg;
    try {
      lg = backward(model, batch, plan);
    } catch (const TrainingDivergence& e) {
      throw TrainingDivergence(std::string(e.what()) + " at step " + std::to_string(step),
                               static_cast<long>(step));
    }
    result.curve.push_back({step, lg.loss});

    auto params = tensors(model.weights);
    const auto grads = tensors(std::as_const(lg.gradients));
    auto first = tensors(m1);
    auto second = tensors(m2);
    const double t = static_cast<double>(step + 1);
    const double c1 = 1.0 - std::pow(config.beta1, t);
    const double c2 = 1.0 - std::pow(config.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto p = params[i].values;
      const auto g = grads[i].values;
      if (config.optimizer == OptimizerKind::Sgd) {
        for (std::size_t j = 0; j < p.size(); ++j)
          p[j] = static_cast<float>(p[j] - config.learning_rate * g[j]);
        continue;
      }
      auto m = first[i].values;
      auto v = second[i].values;
      for (std::size_t j = 0; j < p.size(); ++j) {
        m[j] = static_cast<float>(config.beta1 * m[j] + (1.0 - config.beta1) * g[j]);
        v[j] = static_cast<float>(config.beta2 * v[j] +
                                  (1.0 - config.beta2) * static_cast<double>(g[j]) * g[j]);
        const double m_hat = m[j] / c1;
        const double v_hat = v[j] / c2;
        p[j] = static_cast<float>(p[j] - config.learning_rate * m_hat /
                                             (std::sqrt(v_hat) + config.adam_eps));
      }
    }
  }
  result.model = std::move(model);
  return result;
}

std::string loss_curve_table(std::span<const LossPoint> curve) {
  std::ostringstream out;
  out << "step\tloss\n";
  char buf[64];
  for (const auto& p : curve) {
    std::snprintf(buf, sizeof buf, "%.9g", p.loss);
    out << p.step << '\t' << buf << '\n';
  }
  return out.str();
}

}  // namespace skiplab

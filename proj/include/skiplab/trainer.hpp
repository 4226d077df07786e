// Copyright 2026 The skiplab Authors
// SPDX-License-Identifier: Apache-2.0

// Next-token training for desk-scale models: cross-entropy loss, a
// hand-written reverse pass through the whole network, SGD and Adam.

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "skiplab/model.hpp"
#include "skiplab/random.hpp"
#include "skiplab/skip_plan.hpp"

namespace skiplab {

enum class OptimizerKind { Sgd, Adam };

struct TrainConfig {
  double learning_rate = 3e-4;
  std::size_t steps = 100;
  std::size_t batch_size = 8;
  std::size_t context_length = 32;
  std::uint64_t seed = 1;
  OptimizerKind optimizer = OptimizerKind::Adam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;

  void validate(const ModelConfig& model) const;
};

/// Mean over rows of −log softmax(row)[target].
double cross_entropy_loss(const Matrix& logits, std::span<const TokenId> targets);

/// Equal-length (input, target) pairs; targets are inputs shifted by one.
struct Batch {
  std::vector<std::vector<TokenId>> inputs;
  std::vector<std::vector<TokenId>> targets;
};

/// Random windows of `context_length + 1` tokens from `stream`.
Batch sample_batch(std::span<const TokenId> stream, std::size_t batch_size,
                   std::size_t context_length, Rng& rng);

/// Consecutive non-overlapping windows covering `stream` once.
Batch sequential_batch(std::span<const TokenId> stream, std::size_t context_length);

/// Mean loss over every position of every example, via model_forward.
double batch_loss(const Model& model, const Batch& batch, const SkipPlan* plan = nullptr);

struct LossAndGradients {
  double loss = 0.0;
  ModelWeights gradients;
};

/// Loss and its exact gradient with respect to every weight. Layers skipped
/// by `plan` get zero gradient in the bypassed blocks. Throws
/// TrainingDivergence on a non-finite loss or gradient.
LossAndGradients backward(const Model& model, const Batch& batch,
                          const SkipPlan* plan = nullptr);

struct LossPoint {
  std::size_t step = 0;
  double loss = 0.0;
};

struct TrainResult {
  Model model;
  std::vector<LossPoint> curve;
};

/// Trains on `corpus` bytes. Deterministic given (model, corpus, config).
TrainResult train(Model model, std::span<const std::uint8_t> corpus, const TrainConfig& config,
                  const SkipPlan* plan = nullptr);

/// "step<TAB>loss" rows with a header.
std::string loss_curve_table(std::span<const LossPoint> curve);

}  // namespace skiplab

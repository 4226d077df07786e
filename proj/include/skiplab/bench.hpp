// Copyright 2026 The skiplab Authors
// SPDX-License-Identifier: Apache-2.0

// One-token generation timing: a fixed seeded prompt set, one greedy token
// per prompt, a single monotonic interval around the whole set.

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "skiplab/model.hpp"
#include "skiplab/skip_plan.hpp"

namespace skiplab {

using Sequence = std::vector<TokenId>;

/// `count` sequences of `length` ids drawn uniformly from [0, vocab_size).
std::vector<Sequence> generate_sequences(std::uint64_t seed, std::size_t count,
                                         std::size_t length, std::uint32_t vocab_size);

struct TimingReport {
  std::string variant;
  std::string mode;  // "Full", "Attention", "ffwd", or empty for the baseline
  std::size_t sequence_length = 0;
  std::size_t sequence_count = 0;
  double total_seconds = 0.0;
  double mean_seconds = 0.0;
  std::optional<double> improvement_percent;
  std::vector<TokenId> predictions;
};

/// Predicts one token for every sequence. The first sequence is run once
/// untimed; the interval then spans the first timed sequence through the
/// last. Only forward passes are inside the interval.
TimingReport time_one_token(const Model& model, const SkipPlan* plan,
                            std::span<const Sequence> sequences, std::string variant = {},
                            std::string mode = {});

/// 100 · (baseline − variant) / baseline. Throws on a nonpositive baseline.
double improvement_pct(double t_variant, double t_baseline);

/// Median of `values` (mean of the middle pair for even sizes).
double median(std::vector<double> values);

/// Rows are variants in first-seen order, column pairs are modes:
/// "Time(s) ×10²" and "(%)".
std::string render_timing_table(std::span<const TimingReport> reports);
std::string timing_json(std::span<const TimingReport> reports);

}  // namespace skiplab

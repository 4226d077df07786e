// Copyright 2026 The skiplab Authors
// SPDX-License-Identifier: Apache-2.0

// Layer input/output cosine similarity traces and the VC-dimension sample
// size calculator.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "skiplab/skip_plan.hpp"
#include "skiplab/tensor.hpp"

namespace skiplab {

/// v·w / (‖v‖‖w‖), in [−1, 1]. Throws UndefinedSimilarity if either is zero.
double cosine_similarity(std::span<const float> v, std::span<const float> w);

/// Running per-layer mean of input/output cosine similarity.
///
/// One observation per layer per forward pass: the per-position cosines of
/// that pass averaged over positions. Partial traces from separate workers
/// combine with merge().
class LayerTrace {
 public:
  LayerTrace() = default;
  explicit LayerTrace(std::size_t n_layers) : sums_(n_layers, 0.0), counts_(n_layers, 0) {}

  std::size_t n_layers() const noexcept { return sums_.size(); }

  void record_layer(std::size_t layer, const Matrix& x_in, const Matrix& x_out);
  /// Adds a precomputed observation (used by fixtures and tests).
  void record_value(std::size_t layer, double score);

  void merge(const LayerTrace& other);

  std::uint64_t count(std::size_t layer) const { return counts_.at(layer); }
  double sum(std::size_t layer) const { return sums_.at(layer); }
  std::optional<double> mean(std::size_t layer) const;

  SimilarityProfile profile() const;

  /// Tab-separated "layer<TAB>mean<TAB>count" rows, with a header line.
  /// Unobserved layers are written with an empty mean and count 0.
  std::string to_table() const;
  static LayerTrace from_table(std::string_view text);
  std::string to_json() const;

  void save_table(const std::filesystem::path& path) const;
  static LayerTrace load_table(const std::filesystem::path& path);

 private:
  std::vector<double> sums_;
  std::vector<std::uint64_t> counts_;
};

struct TraceSummary {
  std::vector<std::optional<double>> means;
  std::size_t argmin = 0;
  double min = 0.0;
};

/// Means and the minimum (lowest index on ties). Throws RejectedInput if a
/// layer is unobserved, unless `allow_unobserved`, in which case those
/// layers are left out of the minimum.
TraceSummary summarize(const LayerTrace& trace, bool allow_unobserved = false);

/// Layer indices ordered by descending mean (ties: lower index first).
std::vector<std::size_t> rank_order(const SimilarityProfile& profile);

/// Fraction of snapshots whose rank order equals `reference`'s.
double ordinal_agreement(std::span<const SimilarityProfile> snapshots,
                         const SimilarityProfile& reference);

/// ⌊W/2⌋·⌊L/2⌋.
std::uint64_t vc_lower_bound(std::uint64_t parameter_count, std::uint64_t layer_count);

/// ⌈d / (320 ε²)⌉.
std::uint64_t sample_size_lower_bound(std::uint64_t vc_dimension, double epsilon);

struct ComplexityBound {
  std::uint64_t parameter_count = 0;
  std::uint64_t layer_count = 0;
  std::uint64_t vc_dimension = 0;
  double epsilon = 0.0;
  std::uint64_t sample_size = 0;
};

ComplexityBound complexity_bound(std::uint64_t parameter_count, std::uint64_t layer_count,
                                 double epsilon);

}  // namespace skiplab

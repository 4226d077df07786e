// Copyright 2026 The skiplab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "skiplab/model.hpp"

namespace skiplab {

enum class SkipKind { Full, Attention, Ffwd };

/// How the skipped layers were chosen.
enum class SkipSelection { None, Tail, First, Similarity, Explicit };

std::string_view to_string(SkipKind kind);
std::string_view to_string(SkipSelection selection);
SkipKind parse_skip_kind(std::string_view text);
LayerSkipMode mode_for(SkipKind kind);

/// What the user asked for, before resolution against a layer count.
struct SkipSpec {
  SkipKind mode = SkipKind::Full;
  double keep_fraction = 1.0;
  bool keep_last = false;
  std::optional<std::vector<std::size_t>> explicit_layers;
  SkipSelection selection = SkipSelection::None;

  friend bool operator==(const SkipSpec&, const SkipSpec&) = default;
};

/// A resolved per-layer assignment of skip modes.
class SkipPlan {
 public:
  SkipPlan() = default;
  SkipPlan(std::vector<LayerSkipMode> modes, SkipSpec provenance);

  /// Every layer Active.
  static SkipPlan all_active(std::size_t n_layers);

  std::size_t n_layers() const noexcept { return modes_.size(); }
  LayerSkipMode mode(std::size_t layer) const { return modes_.at(layer); }
  std::span<const LayerSkipMode> modes() const noexcept { return modes_; }
  const SkipSpec& provenance() const noexcept { return provenance_; }

  /// Indices whose mode is not Active, ascending.
  std::vector<std::size_t> skipped_layers() const;
  std::size_t skipped_count() const;

  /// One line per layer ("<index> <mode>") after a provenance header.
  std::string to_text() const;
  static SkipPlan from_text(std::string_view text);

  friend bool operator==(const SkipPlan&, const SkipPlan&) = default;

 private:
  std::vector<LayerSkipMode> modes_;
  SkipSpec provenance_;
};

/// Layers removed when keeping `keep_fraction` of `n_layers`:
/// n − ⌊keep_fraction·n + ½⌋.
std::size_t resolve_skip_count(std::size_t n_layers, double keep_fraction);

/// Skip the last k layers, or with `keep_last` the k layers just before the
/// final one.
SkipPlan tail_skip_plan(std::size_t n_layers, std::size_t k, SkipKind mode, bool keep_last);

/// Skip layers 0..k-1.
SkipPlan first_skip_plan(std::size_t n_layers, std::size_t k, SkipKind mode);

/// Skip exactly the listed layers.
SkipPlan explicit_skip_plan(std::size_t n_layers, std::span<const std::size_t> layers,
                            SkipKind mode);

/// Per-layer input/output similarity summary, as used for ranking.
/// Unobserved layers carry std::nullopt.
struct SimilarityProfile {
  std::vector<std::optional<double>> means;
};

/// Skip the k layers with the highest mean similarity, lower index first
/// on ties. Unless `allow_unobserved` is set, every layer must be observed;
/// unobserved layers are never selected.
SkipPlan similarity_rank_plan(const SimilarityProfile& profile, std::size_t k, SkipKind mode,
                              bool allow_unobserved = false);

/// Resolve a skip request against a layer count (tail selection by fraction, or
/// the explicit list when present).
SkipPlan resolve_plan(const SkipSpec& spec, std::size_t n_layers);

}  // namespace skiplab

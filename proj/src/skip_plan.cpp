// Copyright 2026 The skiplab Authors
// SPDX-License-Identifier: Apache-2.0

#include "skiplab/skip_plan.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>
#include <sstream>

#include "skiplab/error.hpp"

namespace skiplab {

std::string_view to_string(SkipKind kind) {
  switch (kind) {
    case SkipKind::Full:
      return "full";
    case SkipKind::Attention:
      return "attn";
    case SkipKind::Ffwd:
      return "ffwd";
  }
  return "?";
}

std::string_view to_string(SkipSelection selection) {
  switch (selection) {
    case SkipSelection::None:
      return "none";
    case SkipSelection::Tail:
      return "tail";
    case SkipSelection::First:
      return "first";
    case SkipSelection::Similarity:
      return "similarity";
    case SkipSelection::Explicit:
      return "explicit";
  }
  return "?";
}

SkipKind parse_skip_kind(std::string_view text) {
  if (text == "full") return SkipKind::Full;
  if (text == "attn" || text == "attention") return SkipKind::Attention;
  if (text == "ffwd") return SkipKind::Ffwd;
  throw RejectedInput("unknown skip mode '" + std::string(text) + "' (want full|attn|ffwd)");
}

LayerSkipMode mode_for(SkipKind kind) {
  switch (kind) {
    case SkipKind::Full:
      return LayerSkipMode::SkipFull;
    case SkipKind::Attention:
      return LayerSkipMode::SkipAttention;
    case SkipKind::Ffwd:
      return LayerSkipMode::SkipFfwd;
  }
  return LayerSkipMode::Active;
}

namespace {

SkipSelection parse_selection(std::string_view text) {
  for (auto s : {SkipSelection::None, SkipSelection::Tail, SkipSelection::First,
                 SkipSelection::Similarity, SkipSelection::Explicit}) {
    if (to_string(s) == text) return s;
  }
  throw RejectedInput("unknown plan selection '" + std::string(text) + "'");
}

LayerSkipMode parse_layer_mode(std::string_view text) {
  for (auto m : {LayerSkipMode::Active, LayerSkipMode::SkipFull, LayerSkipMode::SkipAttention,
                 LayerSkipMode::SkipFfwd}) {
    if (to_string(m) == text) return m;
  }
  throw RejectedInput("unknown layer mode '" + std::string(text) + "'");
}

std::size_t parse_index(std::string_view text) {
  std::size_t value = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size()) {
    throw RejectedInput("expected a non-negative integer, got '" + std::string(text) + "'");
  }
  return value;
}

SkipPlan plan_from_indices(std::size_t n_layers, const std::vector<std::size_t>& skipped,
                           SkipKind kind, SkipSpec provenance) {
  std::vector<LayerSkipMode> modes(n_layers, LayerSkipMode::Active);
  for (std::size_t i : skipped) modes[i] = mode_for(kind);
  return SkipPlan(std::move(modes), std::move(provenance));
}

void require_layers(std::size_t n_layers) {
  if (n_layers == 0) throw RejectedInput("a plan needs at least one layer");
}

void require_k_below(std::size_t k, std::size_t n_layers) {
  if (k >= n_layers) {
    throw RejectedInput("cannot skip " + std::to_string(k) + " of " + std::to_string(n_layers) +
                        " layers; at least one must stay active");
  }
}

}  // namespace

SkipPlan::SkipPlan(std::vector<LayerSkipMode> modes, SkipSpec provenance)
    : modes_(std::move(modes)), provenance_(std::move(provenance)) {}

SkipPlan SkipPlan::all_active(std::size_t n_layers) {
  return SkipPlan(std::vector<LayerSkipMode>(n_layers, LayerSkipMode::Active), SkipSpec{});
}

std::vector<std::size_t> SkipPlan::skipped_layers() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < modes_.size(); ++i)
    if (modes_[i] != LayerSkipMode::Active) out.push_back(i);
  return out;
}

std::size_t SkipPlan::skipped_count() const {
  return static_cast<std::size_t>(
      std::count_if(modes_.begin(), modes_.end(),
                    [](LayerSkipMode m) { return m != LayerSkipMode::Active; }));
}

std::string SkipPlan::to_text() const {
  std::ostringstream out;
  char fraction[64];
  std::snprintf(fraction, sizeof fraction, "%.17g", provenance_.keep_fraction);
  out << "# skiplab skip plan\n";
  out << "# request mode=" << to_string(provenance_.mode) << " keep_fraction=" << fraction
      << " keep_last=" << (provenance_.keep_last ? 1 : 0)
      << " selection=" << to_string(provenance_.selection) << " layers=";
  if (provenance_.explicit_layers) {
    for (std::size_t i = 0; i < provenance_.explicit_layers->size(); ++i) {
      if (i > 0) out << ',';
      out << (*provenance_.explicit_layers)[i];
    }
  } else {
    out << '-';
  }
  out << "\nlayers " << modes_.size() << '\n';
  for (std::size_t i = 0; i < modes_.size(); ++i) out << i << ' ' << to_string(modes_[i]) << '\n';
  return out.str();
}

SkipPlan SkipPlan::from_text(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  SkipSpec spec;
  std::optional<std::size_t> n_layers;
  std::vector<LayerSkipMode> modes;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line.rfind("# request ", 0) == 0) {
      std::istringstream fields(line.substr(10));
      std::string field;
      while (fields >> field) {
        const auto eq = field.find('=');
        if (eq == std::string::npos) throw RejectedInput("malformed plan header field " + field);
        const std::string key = field.substr(0, eq);
        const std::string value = field.substr(eq + 1);
        if (key == "mode") {
          spec.mode = parse_skip_kind(value);
        } else if (key == "keep_fraction") {
          spec.keep_fraction = std::stod(value);
        } else if (key == "keep_last") {
          spec.keep_last = value == "1";
        } else if (key == "selection") {
          spec.selection = parse_selection(value);
        } else if (key == "layers") {
          if (value != "-") {
            std::vector<std::size_t> layers;
            std::istringstream list(value);
            std::string item;
            while (std::getline(list, item, ',')) layers.push_back(parse_index(item));
            spec.explicit_layers = std::move(layers);
          }
        }
      }
      continue;
    }
    if (line[0] == '#') continue;
    std::istringstream fields(line);
    std::string first, second;
    fields >> first >> second;
    if (first == "layers") {
      n_layers = parse_index(second);
      continue;
    }
    if (parse_index(first) != modes.size()) {
      throw RejectedInput("plan lines must list layers in order; saw " + first + " at position " +
                          std::to_string(modes.size()));
    }
    modes.push_back(parse_layer_mode(second));
  }
  if (!n_layers || *n_layers != modes.size()) {
    throw RejectedInput("plan layer count does not match its layer lines");
  }
  require_layers(modes.size());
  return SkipPlan(std::move(modes), std::move(spec));
}

std::size_t resolve_skip_count(std::size_t n_layers, double keep_fraction) {
  require_layers(n_layers);
  if (!(keep_fraction > 0.0 && keep_fraction <= 1.0)) {
    throw RejectedInput("keep_fraction must lie in (0, 1]");
  }
  // The small epsilon keeps products such as 0.9 x 5 = 4.5 on the half-up side.
  const double kept = std::floor(keep_fraction * static_cast<double>(n_layers) + 0.5 + 1e-9);
  return n_layers - std::min(n_layers, static_cast<std::size_t>(kept));
}

SkipPlan tail_skip_plan(std::size_t n_layers, std::size_t k, SkipKind mode, bool keep_last) {
  require_layers(n_layers);
  require_k_below(k, n_layers);
  if (keep_last && k > 0 && k + 1 >= n_layers) {
    throw RejectedInput("keep_last with " + std::to_string(k) + " of " +
                        std::to_string(n_layers) + " layers leaves no window to shift");
  }
  std::vector<std::size_t> skipped(k);
  const std::size_t first = keep_last ? n_layers - k - 1 : n_layers - k;
  std::iota(skipped.begin(), skipped.end(), first);
  SkipSpec spec;
  spec.mode = mode;
  spec.keep_fraction =
      static_cast<double>(n_layers - k) / static_cast<double>(n_layers);
  spec.keep_last = keep_last;
  spec.selection = SkipSelection::Tail;
  return plan_from_indices(n_layers, skipped, mode, std::move(spec));
}

SkipPlan first_skip_plan(std::size_t n_layers, std::size_t k, SkipKind mode) {
  require_layers(n_layers);
  require_k_below(k, n_layers);
  std::vector<std::size_t> skipped(k);
  std::iota(skipped.begin(), skipped.end(), std::size_t{0});
  SkipSpec spec;
  spec.mode = mode;
  spec.keep_fraction = static_cast<double>(n_layers - k) / static_cast<double>(n_layers);
  spec.selection = SkipSelection::First;
  return plan_from_indices(n_layers, skipped, mode, std::move(spec));
}

SkipPlan explicit_skip_plan(std::size_t n_layers, std::span<const std::size_t> layers,
                            SkipKind mode) {
  require_layers(n_layers);
  std::set<std::size_t> seen;
  for (std::size_t i : layers) {
    if (i >= n_layers) {
      throw RejectedInput("layer index " + std::to_string(i) + " out of range for " +
                          std::to_string(n_layers) + " layers");
    }
    if (!seen.insert(i).second) {
      throw RejectedInput("layer index " + std::to_string(i) + " listed twice");
    }
  }
  std::vector<std::size_t> skipped(layers.begin(), layers.end());
  SkipSpec spec;
  spec.mode = mode;
  spec.keep_fraction =
      static_cast<double>(n_layers - skipped.size()) / static_cast<double>(n_layers);
  spec.explicit_layers = skipped;
  spec.selection = SkipSelection::Explicit;
  if (skipped.size() == n_layers) {
    throw RejectedInput("an explicit plan must leave at least one layer active");
  }
  return plan_from_indices(n_layers, skipped, mode, std::move(spec));
}

SkipPlan similarity_rank_plan(const SimilarityProfile& profile, std::size_t k, SkipKind mode,
                              bool allow_unobserved) {
  const std::size_t n = profile.means.size();
  require_layers(n);
  require_k_below(k, n);
  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < n; ++i) {
    if (profile.means[i]) {
      candidates.push_back(i);
    } else if (!allow_unobserved) {
      throw RejectedInput("similarity profile has no observation for layer " +
                          std::to_string(i));
    }
  }
  if (candidates.size() < k) {
    throw RejectedInput("only " + std::to_string(candidates.size()) +
                        " observed layers, cannot pick " + std::to_string(k));
  }
  std::stable_sort(candidates.begin(), candidates.end(), [&](std::size_t a, std::size_t b) {
    return *profile.means[a] > *profile.means[b];
  });
  candidates.resize(k);
  SkipSpec spec;
  spec.mode = mode;
  spec.keep_fraction = static_cast<double>(n - k) / static_cast<double>(n);
  spec.selection = SkipSelection::Similarity;
  std::vector<std::size_t> sorted = candidates;
  std::sort(sorted.begin(), sorted.end());
  spec.explicit_layers = sorted;
  return plan_from_indices(n, candidates, mode, std::move(spec));
}

SkipPlan resolve_plan(const SkipSpec& spec, std::size_t n_layers) {
  if (spec.explicit_layers) {
    SkipPlan plan = explicit_skip_plan(n_layers, *spec.explicit_layers, spec.mode);
    return plan;
  }
  const std::size_t k = resolve_skip_count(n_layers, spec.keep_fraction);
  SkipPlan plan;
  switch (spec.selection) {
    case SkipSelection::First:
      if (spec.keep_last) throw RejectedInput("first-layer skipping cannot keep the last layer");
      plan = first_skip_plan(n_layers, k, spec.mode);
      break;
    case SkipSelection::Similarity:
      throw RejectedInput("similarity selection needs a trace; use similarity_rank_plan");
    default:
      plan = tail_skip_plan(n_layers, k, spec.mode, spec.keep_last);
      break;
  }
  SkipSpec provenance = spec;
  if (provenance.selection == SkipSelection::None) provenance.selection = SkipSelection::Tail;
  return SkipPlan(std::vector<LayerSkipMode>(plan.modes().begin(), plan.modes().end()),
                  provenance);
}

}  // namespace skiplab

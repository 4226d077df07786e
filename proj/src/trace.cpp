// Copyright 2026 The skiplab Authors
// SPDX-License-Identifier: Apache-2.0

#include "skiplab/trace.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "skiplab/error.hpp"

namespace skiplab {

double cosine_similarity(std::span<const float> v, std::span<const float> w) {
  if (v.size() != w.size()) {
    throw RejectedInput("cosine_similarity: lengths " + std::to_string(v.size()) + " and " +
                        std::to_string(w.size()) + " differ");
  }
  double dot = 0.0, vv = 0.0, ww = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    dot += static_cast<double>(v[i]) * w[i];
    vv += static_cast<double>(v[i]) * v[i];
    ww += static_cast<double>(w[i]) * w[i];
  }
  if (vv == 0.0 || ww == 0.0) {
    throw UndefinedSimilarity("cosine similarity with a zero vector is undefined");
  }
  return std::clamp(dot / (std::sqrt(vv) * std::sqrt(ww)), -1.0, 1.0);
}

void LayerTrace::record_layer(std::size_t layer, const Matrix& x_in, const Matrix& x_out) {
  if (x_in.rows() != x_out.rows() || x_in.cols() != x_out.cols()) {
    throw RejectedInput("record_layer: input and output shapes differ");
  }
  if (x_in.rows() == 0) throw RejectedInput("record_layer: empty hidden state");
  double total = 0.0;
  for (std::size_t r = 0; r < x_in.rows(); ++r) total += cosine_similarity(x_in.row(r), x_out.row(r));
  record_value(layer, total / static_cast<double>(x_in.rows()));
}

void LayerTrace::record_value(std::size_t layer, double score) {
  if (layer >= sums_.size()) {
    throw RejectedInput("layer " + std::to_string(layer) + " outside a trace of " +
                        std::to_string(sums_.size()) + " layers");
  }
  sums_[layer] += score;
  ++counts_[layer];
}

void LayerTrace::merge(const LayerTrace& other) {
  if (other.n_layers() != n_layers()) {
    throw RejectedInput("cannot merge traces of different depth");
  }
  for (std::size_t i = 0; i < sums_.size(); ++i) {
    sums_[i] += other.sums_[i];
    counts_[i] += other.counts_[i];
  }
}

std::optional<double> LayerTrace::mean(std::size_t layer) const {
  if (counts_.at(layer) == 0) return std::nullopt;
  return sums_[layer] / static_cast<double>(counts_[layer]);
}

SimilarityProfile LayerTrace::profile() const {
  SimilarityProfile p;
  for (std::size_t i = 0; i < n_layers(); ++i) p.means.push_back(mean(i));
  return p;
}

std::string LayerTrace::to_table() const {
  std::ostringstream out;
  out << "layer\tmean\tcount\n";
  char buf[64];
  for (std::size_t i = 0; i < n_layers(); ++i) {
    out << i << '\t';
    if (auto m = mean(i)) {
      std::snprintf(buf, sizeof buf, "%.17g", *m);
      out << buf;
    }
    out << '\t' << counts_[i] << '\n';
  }
  return out.str();
}

LayerTrace LayerTrace::from_table(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  std::vector<std::pair<double, std::uint64_t>> rows;
  bool header_seen = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    if (!header_seen) {
      if (line.rfind("layer", 0) != 0) throw RejectedInput("trace table is missing its header");
      header_seen = true;
      continue;
    }
    std::vector<std::string> fields;
    std::istringstream cols(line);
    std::string field;
    while (std::getline(cols, field, '\t')) fields.push_back(field);
    if (fields.size() == 2) fields.emplace_back();
    if (fields.size() != 3) throw RejectedInput("trace row needs 3 fields: " + line);
    if (std::stoull(fields[0]) != rows.size()) {
      throw RejectedInput("trace rows must be listed in layer order: " + line);
    }
    const std::uint64_t count = std::stoull(fields[2]);
    double mean = 0.0;
    if (count > 0) {
      if (fields[1].empty()) throw RejectedInput("observed layer without a mean: " + line);
      mean = std::stod(fields[1]);
    }
    rows.emplace_back(mean, count);
  }
  LayerTrace trace(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    trace.sums_[i] = rows[i].first * static_cast<double>(rows[i].second);
    trace.counts_[i] = rows[i].second;
  }
  return trace;
}

std::string LayerTrace::to_json() const {
  nlohmann::ordered_json j;
  j["n_layers"] = n_layers();
  auto& layers = j["layers"] = nlohmann::ordered_json::array();
  for (std::size_t i = 0; i < n_layers(); ++i) {
    nlohmann::ordered_json row;
    row["layer"] = i;
    if (auto m = mean(i)) {
      row["mean"] = *m;
    } else {
      row["mean"] = nullptr;
    }
    row["count"] = counts_[i];
    layers.push_back(row);
  }
  const bool complete = std::all_of(counts_.begin(), counts_.end(), [](auto c) { return c > 0; });
  const bool any = std::any_of(counts_.begin(), counts_.end(), [](auto c) { return c > 0; });
  if (any) {
    const TraceSummary s = summarize(*this, !complete);
    j["argmin"] = s.argmin;
    j["min"] = s.min;
    j["rank_order"] = rank_order(profile());
  }
  return j.dump(2) + "\n";
}

void LayerTrace::save_table(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << to_table();
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

LayerTrace LayerTrace::load_table(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw RejectedInput("cannot read trace table " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_table(buf.str());
}

TraceSummary summarize(const LayerTrace& trace, bool allow_unobserved) {
  if (trace.n_layers() == 0) throw RejectedInput("summarize: empty trace");
  TraceSummary s;
  bool found = false;
  for (std::size_t i = 0; i < trace.n_layers(); ++i) {
    const auto m = trace.mean(i);
    s.means.push_back(m);
    if (!m) {
      if (!allow_unobserved) {
        throw RejectedInput("summarize: layer " + std::to_string(i) + " was never observed");
      }
      continue;
    }
    if (!found || *m < s.min) {
      s.min = *m;
      s.argmin = i;
      found = true;
    }
  }
  if (!found) throw RejectedInput("summarize: no layer was observed");
  return s;
}

std::vector<std::size_t> rank_order(const SimilarityProfile& profile) {
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < profile.means.size(); ++i)
    if (profile.means[i]) order.push_back(i);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return *profile.means[a] > *profile.means[b];
  });
  return order;
}

double ordinal_agreement(std::span<const SimilarityProfile> snapshots,
                         const SimilarityProfile& reference) {
  if (snapshots.empty()) return 0.0;
  const auto want = rank_order(reference);
  const auto matches = std::count_if(snapshots.begin(), snapshots.end(),
                                     [&](const SimilarityProfile& p) { return rank_order(p) == want; });
  return static_cast<double>(matches) / static_cast<double>(snapshots.size());
}

std::uint64_t vc_lower_bound(std::uint64_t parameter_count, std::uint64_t layer_count) {
  if (layer_count < 2) throw RejectedInput("vc_lower_bound: need at least 2 layers");
  const std::uint64_t a = parameter_count / 2;
  const std::uint64_t b = layer_count / 2;
  if (a != 0 && b > std::numeric_limits<std::uint64_t>::max() / a) {
    throw RejectedInput("vc_lower_bound: result overflows 64 bits");
  }
  return a * b;
}

std::uint64_t sample_size_lower_bound(std::uint64_t vc_dimension, double epsilon) {
  if (!(epsilon > 0.0 && epsilon < 1.0)) {
    throw RejectedInput("sample_size_lower_bound: epsilon must lie in (0, 1)");
  }
  const long double eps = epsilon;
  const long double exact = static_cast<long double>(vc_dimension) / (320.0L * eps * eps);
  if (exact > static_cast<long double>(std::numeric_limits<std::uint64_t>::max())) {
    throw RejectedInput("sample_size_lower_bound: result overflows 64 bits");
  }
  // ε itself is rarely representable (0.01 is not), so a quotient within a
  // few double ulps of an integer is taken as that integer.
  const long double slack = 4.0L * std::numeric_limits<double>::epsilon();
  const long double nearest = std::nearbyint(exact);
  if (std::fabs(exact - nearest) <= slack * std::max(1.0L, exact)) {
    return static_cast<std::uint64_t>(nearest);
  }
  return static_cast<std::uint64_t>(std::ceil(exact));
}

ComplexityBound complexity_bound(std::uint64_t parameter_count, std::uint64_t layer_count,
                                 double epsilon) {
  ComplexityBound b;
  b.parameter_count = parameter_count;
  b.layer_count = layer_count;
  b.vc_dimension = vc_lower_bound(parameter_count, layer_count);
  b.epsilon = epsilon;
  b.sample_size = sample_size_lower_bound(b.vc_dimension, epsilon);
  return b;
}

}  // namespace skiplab

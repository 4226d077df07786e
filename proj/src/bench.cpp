// Copyright 2026 The skiplab Authors
// SPDX-License-Identifier: Apache-2.0

#include "skiplab/bench.hpp"

#include <algorithm>
#include <chrono>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "skiplab/error.hpp"
#include "skiplab/random.hpp"

namespace skiplab {

std::vector<Sequence> generate_sequences(std::uint64_t seed, std::size_t count,
                                         std::size_t length, std::uint32_t vocab_size) {
  if (vocab_size == 0) throw RejectedInput("generate_sequences: empty vocabulary");
  Rng rng(seed);
  std::vector<Sequence> out(count, Sequence(length));
  for (auto& seq : out)
    for (auto& id : seq) id = static_cast<TokenId>(rng.uniform_index(vocab_size));
  return out;
}

TimingReport time_one_token(const Model& model, const SkipPlan* plan,
                            std::span<const Sequence> sequences, std::string variant,
                            std::string mode) {
  if (sequences.empty()) throw RejectedInput("time_one_token: no sequences");
  TimingReport report;
  report.variant = std::move(variant);
  report.mode = std::move(mode);
  report.sequence_length = sequences.front().size();
  report.sequence_count = sequences.size();
  report.predictions.resize(sequences.size());

  // Warmup, excluded from the interval.
  volatile TokenId sink = greedy_next_token(sequences.front(), model, plan);
  (void)sink;

  using clock = std::chrono::steady_clock;
  const auto start = clock::now();
  for (std::size_t i = 0; i < sequences.size(); ++i) {
    report.predictions[i] = greedy_next_token(sequences[i], model, plan);
  }
  const auto stop = clock::now();
  report.total_seconds = std::chrono::duration<double>(stop - start).count();
  report.mean_seconds = report.total_seconds / static_cast<double>(sequences.size());
  return report;
}

double improvement_pct(double t_variant, double t_baseline) {
  if (!(t_baseline > 0.0)) throw RejectedInput("improvement_pct: baseline must be positive");
  return 100.0 * (t_baseline - t_variant) / t_baseline;
}

double median(std::vector<double> values) {
  if (values.empty()) throw RejectedInput("median of nothing");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

namespace {

std::string fixed2(double v) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(2) << v;
  return s.str();
}

}  // namespace

std::string render_timing_table(std::span<const TimingReport> reports) {
  std::vector<std::string> variants, modes;
  auto note = [](std::vector<std::string>& list, const std::string& v) {
    if (std::find(list.begin(), list.end(), v) == list.end()) list.push_back(v);
  };
  for (const auto& r : reports) {
    note(variants, r.variant);
    note(modes, r.mode.empty() ? "Full" : r.mode);
  }
  auto find = [&](const std::string& variant, const std::string& mode) -> const TimingReport* {
    for (const auto& r : reports) {
      const std::string m = r.mode.empty() ? "Full" : r.mode;
      if (r.variant == variant && m == mode) return &r;
    }
    return nullptr;
  };
  std::ostringstream out;
  out << "Forward passes only (tokenization and I/O excluded); mean seconds per predicted "
         "token.\n\n| Model |";
  for (const auto& m : modes) out << ' ' << m << " Time(s) x10^2 | " << m << " (%) |";
  out << "\n|---|";
  for (std::size_t i = 0; i < modes.size(); ++i) out << "---|---|";
  out << '\n';
  for (const auto& v : variants) {
    out << "| " << v << " |";
    for (const auto& m : modes) {
      const TimingReport* r = find(v, m);
      if (r == nullptr) {
        out << " - | - |";
        continue;
      }
      out << ' ' << fixed2(r->mean_seconds * 100.0) << " | "
          << (r->improvement_percent ? fixed2(*r->improvement_percent) : std::string("0"))
          << " |";
    }
    out << '\n';
  }
  return out.str();
}

std::string timing_json(std::span<const TimingReport> reports) {
  nlohmann::ordered_json j = nlohmann::ordered_json::array();
  for (const auto& r : reports) {
    nlohmann::ordered_json o;
    o["variant"] = r.variant;
    o["mode"] = r.mode;
    o["sequence_length"] = r.sequence_length;
    o["sequence_count"] = r.sequence_count;
    o["total_seconds"] = r.total_seconds;
    o["mean_seconds"] = r.mean_seconds;
    o["mean_seconds_x100"] = r.mean_seconds * 100.0;
    o["improvement_percent"] =
        r.improvement_percent ? nlohmann::ordered_json(*r.improvement_percent) : nullptr;
    o["predictions"] = r.predictions;
    j.push_back(o);
  }
  return j.dump(2) + "\n";
}

}  // namespace skiplab

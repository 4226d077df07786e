// Copyright 2026 The skiplab Authors
// SPDX-License-Identifier: Apache-2.0

// skiplab: command-line front end for model generation, training, skip
// planning, similarity tracing, evaluation and timing.
//
// Exit status: 0 ok, 1 usage error, 2 runtime error.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <iterator>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "skiplab/bench.hpp"
#include "skiplab/checkpoint.hpp"
#include "skiplab/error.hpp"
#include "skiplab/eval.hpp"
#include "skiplab/model.hpp"
#include "skiplab/skip_plan.hpp"
#include "skiplab/tokenizer.hpp"
#include "skiplab/trace.hpp"
#include "skiplab/trainer.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace skiplab;

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Files written by one invocation. Unless commit() runs, they are deleted
// when the set goes out of scope, so a failed run leaves nothing behind.
class Outputs {
 public:
  Outputs() = default;
  Outputs(const Outputs&) = delete;
  Outputs& operator=(const Outputs&) = delete;
  ~Outputs() {
    if (committed_) return;
    std::error_code ec;
    for (const auto& p : files_) fs::remove(p, ec);
  }

  void write(const fs::path& path, std::string_view content) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    files_.push_back(path);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw std::runtime_error("write to " + path.string() + " failed");
  }
  void save_model(const fs::path& path, const Model& model) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    files_.push_back(path);
    save(model, path);
  }
  const std::vector<fs::path>& files() const { return files_; }
  void commit() { committed_ = true; }

 private:
  std::vector<fs::path> files_;
  bool committed_ = false;
};

// Every option of `sub` with its effective value.
json resolved_flags(const CLI::App* sub) {
  json flags = json::object();
  for (const CLI::Option* opt : sub->get_options()) {
    if (opt == sub->get_help_ptr()) continue;
    const std::string key = opt->get_single_name();
    if (opt->count() > 0) {
      const auto& res = opt->results();
      flags[key] = res.size() == 1 ? json(res.front()) : json(res);
    } else {
      const std::string def = opt->get_default_str();
      flags[key] = def.empty() ? json(nullptr) : json(def);
    }
  }
  return flags;
}

json spec_json(const SkipSpec& s) {
  json j;
  j["mode"] = std::string(to_string(s.mode));
  j["keep_fraction"] = s.keep_fraction;
  j["keep_last"] = s.keep_last;
  j["selection"] = std::string(to_string(s.selection));
  j["layers"] = s.explicit_layers ? json(*s.explicit_layers) : json(nullptr);
  return j;
}

void write_manifest(Outputs& outputs, const fs::path& path, const CLI::App* sub,
                    json seeds, std::vector<std::string> inputs, const SkipPlan* plan) {
  json m;
  m["subcommand"] = sub->get_name();
  m["config"] = resolved_flags(sub);
  m["seeds"] = std::move(seeds);
  m["inputs"] = std::move(inputs);
  m["skip_spec"] = plan ? spec_json(plan->provenance()) : json(nullptr);
  m["skipped_layers"] = plan ? json(plan->skipped_layers()) : json(nullptr);
  std::vector<std::string> emitted;
  for (const auto& f : outputs.files()) emitted.push_back(f.string());
  emitted.push_back(path.string());
  m["emitted"] = emitted;
  outputs.write(path, m.dump(2) + "\n");
}

fs::path manifest_beside(const fs::path& output) {
  fs::path p = output;
  p += ".manifest.json";
  return p;
}

std::string percent_label(double keep_fraction) {
  return std::to_string(std::lround(keep_fraction * 100.0)) + "%";
}

// Skip-plan selection flags shared by several subcommands.
struct PlanFlags {
  std::string mode = "full";
  double keep_fraction = 1.0;
  bool keep_last = false;
  bool first = false;
  bool allow_unobserved = false;
  std::string from_trace;
  std::string plan_file;
  std::vector<std::size_t> layers;

  void add_to(CLI::App* sub) {
    sub->add_option("--mode", mode, "What a skipped layer drops: full, attn or ffwd")
        ->check(CLI::IsMember({"full", "attn", "attention", "ffwd"}))
        ->capture_default_str();
    sub->add_option("--keep-fraction", keep_fraction, "Fraction of layers kept")
        ->check(CLI::Range(0.0, 1.0))
        ->capture_default_str();
    sub->add_flag("--keep-last", keep_last, "Shift the skipped window down so the final layer runs");
    sub->add_flag("--first", first, "Skip the first layers instead of the last");
    sub->add_option("--from-trace", from_trace,
                    "Skip the layers with the highest mean similarity in this trace table")
        ->check(CLI::ExistingFile);
    sub->add_flag("--allow-unobserved", allow_unobserved,
                  "With --from-trace, tolerate layers the trace never observed");
    sub->add_option("--layers", layers, "Explicit comma-separated layer indices to skip")
        ->delimiter(',');
    sub->add_option("--plan", plan_file, "Load a saved plan file")->check(CLI::ExistingFile);
  }

  void check_combinations(const CLI::App* sub) const {
    auto given = [&](const char* name) { return sub->count(name) > 0; };
    const int selectors = given("--first") + given("--from-trace") + given("--layers") +
                          given("--plan");
    if (selectors > 1)
      throw UsageError("--first, --from-trace, --layers and --plan are mutually exclusive");
    if (keep_last && (first || !from_trace.empty() || !layers.empty() || !plan_file.empty()))
      throw UsageError("--keep-last applies only to the default tail selection");
    if ((!layers.empty() || !plan_file.empty()) && given("--keep-fraction"))
      throw UsageError("--keep-fraction has no effect with --layers or --plan");
    if (!plan_file.empty() && given("--mode"))
      throw UsageError("--mode has no effect with --plan");
    if (allow_unobserved && from_trace.empty())
      throw UsageError("--allow-unobserved needs --from-trace");
  }

  SkipPlan resolve(std::size_t n_layers) const {
    const SkipKind kind = parse_skip_kind(mode);
    if (!plan_file.empty()) {
      SkipPlan plan = SkipPlan::from_text(read_file(plan_file));
      if (plan.n_layers() != n_layers)
        throw RejectedInput("plan covers " + std::to_string(plan.n_layers()) +
                            " layers, model has " + std::to_string(n_layers));
      return plan;
    }
    if (!layers.empty()) return explicit_skip_plan(n_layers, layers, kind);
    if (!from_trace.empty()) {
      const LayerTrace trace = LayerTrace::load_table(from_trace);
      if (trace.n_layers() != n_layers)
        throw RejectedInput("trace covers " + std::to_string(trace.n_layers()) +
                            " layers, model has " + std::to_string(n_layers));
      const std::size_t k = resolve_skip_count(n_layers, keep_fraction);
      const SkipPlan ranked = similarity_rank_plan(trace.profile(), k, kind, allow_unobserved);
      SkipSpec spec{kind, keep_fraction, false, std::nullopt, SkipSelection::Similarity};
      return SkipPlan({ranked.modes().begin(), ranked.modes().end()}, spec);
    }
    SkipSpec spec{kind, keep_fraction, keep_last, std::nullopt,
                  first ? SkipSelection::First : SkipSelection::Tail};
    return resolve_plan(spec, n_layers);
  }
};

// --- gen ------------------------------------------------------------------

struct GenArgs {
  std::string out;
  std::uint64_t seed = 1;
  ModelConfig cfg;
  std::string norm = "post";
};

void run_gen(const GenArgs& a, const CLI::App* sub) {
  ModelConfig cfg = a.cfg;
  cfg.norm_placement = a.norm == "pre" ? NormPlacement::Pre : NormPlacement::Post;
  const Model model = make_random_model(cfg, a.seed);
  Outputs outputs;
  outputs.save_model(a.out, model);
  write_manifest(outputs, manifest_beside(a.out), sub, json{{"init", a.seed}}, {}, nullptr);
  outputs.commit();
  std::cout << "wrote " << a.out << " (" << cfg.n_layers << " layers, d_model " << cfg.d_model
            << ", " << to_string(cfg.norm_placement) << "-norm)\n";
}

// --- train ----------------------------------------------------------------

struct TrainArgs {
  std::string model, corpus, out;
  TrainConfig cfg;
  std::string optimizer = "adam";
};

void run_train(const TrainArgs& a, const CLI::App* sub) {
  const Model model = load(a.model);
  TrainConfig cfg = a.cfg;
  cfg.optimizer = a.optimizer == "sgd" ? OptimizerKind::Sgd : OptimizerKind::Adam;
  const std::string text = read_file(a.corpus);
  const std::vector<std::uint8_t> corpus(text.begin(), text.end());
  TrainResult result = train(model, corpus, cfg);
  Outputs outputs;
  outputs.save_model(a.out, result.model);
  fs::path curve = a.out;
  curve += ".loss.tsv";
  outputs.write(curve, loss_curve_table(result.curve));
  write_manifest(outputs, manifest_beside(a.out), sub, json{{"train", cfg.seed}},
                 {a.model, a.corpus}, nullptr);
  outputs.commit();
  if (!result.curve.empty())
    std::cout << "final loss " << result.curve.back().loss << " after " << cfg.steps
              << " steps\n";
  std::cout << "wrote " << a.out << "\n";
}

// --- plan -----------------------------------------------------------------

struct PlanArgs {
  std::size_t layers_total = 0;
  std::string model;
  std::string out;
  PlanFlags flags;
};

void run_plan(const PlanArgs& a, const CLI::App* sub) {
  a.flags.check_combinations(sub);
  std::size_t n = a.layers_total;
  if (!a.model.empty()) {
    const std::size_t from_model = load(a.model).config.n_layers;
    if (n != 0 && n != from_model)
      throw UsageError("--layers-total disagrees with the model's layer count");
    n = from_model;
  }
  if (n == 0) throw UsageError("give --layers-total or --model");
  const SkipPlan plan = a.flags.resolve(n);
  const std::string text = plan.to_text();
  if (a.out.empty()) {
    std::cout << text;
    return;
  }
  Outputs outputs;
  outputs.write(a.out, text);
  std::vector<std::string> inputs;
  if (!a.model.empty()) inputs.push_back(a.model);
  if (!a.flags.from_trace.empty()) inputs.push_back(a.flags.from_trace);
  write_manifest(outputs, manifest_beside(a.out), sub, json::object(), inputs, &plan);
  outputs.commit();
  std::cout << "skipping " << plan.skipped_count() << " of " << n << " layers; wrote " << a.out
            << "\n";
}

// --- trace ----------------------------------------------------------------

struct TraceArgs {
  std::string model, corpus, out;
  std::size_t context = 0;
  std::size_t snapshots = 4;
  PlanFlags flags;
};

void run_trace(const TraceArgs& a, const CLI::App* sub) {
  a.flags.check_combinations(sub);
  const Model model = load(a.model);
  const SkipPlan plan = a.flags.resolve(model.config.n_layers);
  const std::size_t context = a.context == 0 ? model.config.max_seq_len : a.context;
  if (context > model.config.max_seq_len)
    throw UsageError("--context exceeds the model's max_seq_len");
  const std::string text = read_file(a.corpus);
  const std::vector<TokenId> stream = encode_bytes(text);
  const std::vector<std::vector<TokenId>> windows = sequential_batch(stream, context).inputs;
  if (windows.empty()) throw RejectedInput("corpus is shorter than one window");

  // Windows are dealt round-robin into snapshot traces; the full trace is
  // their merge.
  const std::size_t snaps = std::max<std::size_t>(1, std::min(a.snapshots, windows.size()));
  std::vector<LayerTrace> parts(snaps, LayerTrace(model.config.n_layers));
  for (std::size_t i = 0; i < windows.size(); ++i)
    model_forward(windows[i], model, &plan, &parts[i % snaps]);
  LayerTrace total(model.config.n_layers);
  for (const auto& p : parts) total.merge(p);

  std::vector<SimilarityProfile> profiles;
  for (const auto& p : parts) profiles.push_back(p.profile());
  const SimilarityProfile reference = total.profile();
  const double agreement = ordinal_agreement(profiles, reference);

  const bool partial = plan.skipped_count() > 0;
  const TraceSummary summary = summarize(total, partial);
  json doc = json::parse(total.to_json());
  doc["windows"] = windows.size();
  doc["context"] = context;
  doc["snapshots"] = snaps;
  doc["snapshot_rank_agreement"] = agreement;

  Outputs outputs;
  outputs.write(a.out, total.to_table());
  fs::path structured = a.out;
  structured += ".json";
  outputs.write(structured, doc.dump(2) + "\n");
  write_manifest(outputs, manifest_beside(a.out), sub, json::object(), {a.model, a.corpus},
                 &plan);
  outputs.commit();
  const auto order = rank_order(reference);
  std::cout << "lowest mean similarity: layer " << summary.argmin << " (" << summary.min
            << ")\n";
  std::cout << "highest mean similarity: layer " << order.front() << "\n";
  std::cout << "snapshot rank agreement: " << agreement << "\n";
}

// --- eval -----------------------------------------------------------------

struct EvalArgs {
  std::string model, out, variant;
  std::vector<std::string> tasks;
  std::vector<std::string> exclude;
  std::size_t workers = 1;
  PlanFlags flags;
};

std::vector<TaskFile> load_tasks(const std::vector<std::string>& paths) {
  std::vector<TaskFile> tasks;
  for (const auto& p : paths) tasks.push_back(load_task_file(p));
  return tasks;
}

std::string default_variant(const std::string& model_path, const SkipPlan& plan) {
  const double kept = 1.0 - static_cast<double>(plan.skipped_count()) /
                                static_cast<double>(plan.n_layers());
  const double label = plan.provenance().selection == SkipSelection::Explicit
                           ? kept
                           : plan.provenance().keep_fraction;
  return fs::path(model_path).stem().string() + "-" + percent_label(label);
}

void run_eval(const EvalArgs& a, const CLI::App* sub) {
  a.flags.check_combinations(sub);
  const Model model = load(a.model);
  const SkipPlan plan = a.flags.resolve(model.config.n_layers);
  const std::vector<TaskFile> tasks = load_tasks(a.tasks);
  std::vector<TaskScore> scores;
  for (const auto& t : tasks) scores.push_back(evaluate_task(model, &plan, t, a.workers));
  const std::string variant = a.variant.empty() ? default_variant(a.model, plan) : a.variant;
  const std::vector<EvalReport> rows{make_report(variant, scores, a.exclude)};

  Outputs outputs;
  outputs.write(a.out, render_report_table(rows));
  fs::path structured = a.out;
  structured += ".json";
  outputs.write(structured, report_json(rows));
  std::vector<std::string> inputs{a.model};
  inputs.insert(inputs.end(), a.tasks.begin(), a.tasks.end());
  write_manifest(outputs, manifest_beside(a.out), sub, json::object(), inputs, &plan);
  outputs.commit();
  std::cout << render_report_table(rows);
}

// --- bench ----------------------------------------------------------------

struct BenchArgs {
  std::string model, out, variant, baseline_model;
  std::size_t seq_len = 50;
  std::size_t count = 1000;
  std::uint64_t seed = 1;
  PlanFlags flags;
};

std::string mode_label(const SkipPlan& plan) {
  if (plan.skipped_count() == 0) return "Full";
  switch (plan.provenance().mode) {
    case SkipKind::Full: return "Full";
    case SkipKind::Attention: return "Attention";
    case SkipKind::Ffwd: return "ffwd";
  }
  return "Full";
}

void run_bench(const BenchArgs& a, const CLI::App* sub) {
  a.flags.check_combinations(sub);
  const Model model = load(a.model);
  if (a.seq_len > model.config.max_seq_len)
    throw UsageError("--seq-len exceeds the model's max_seq_len");
  const SkipPlan plan = a.flags.resolve(model.config.n_layers);
  const auto sequences =
      generate_sequences(a.seed, a.count, a.seq_len, model.config.vocab_size);
  std::vector<TimingReport> reports;
  const SkipPlan active = SkipPlan::all_active(model.config.n_layers);
  TimingReport baseline = time_one_token(model, &active, sequences,
                                         fs::path(a.model).stem().string() + "-100%", "Full");
  baseline.improvement_percent = 0.0;
  reports.push_back(baseline);
  if (plan.skipped_count() > 0) {
    TimingReport r = time_one_token(model, &plan, sequences,
                                    a.variant.empty() ? default_variant(a.model, plan) : a.variant,
                                    mode_label(plan));
    r.improvement_percent = improvement_pct(r.mean_seconds, baseline.mean_seconds);
    reports.push_back(r);
  }

  Outputs outputs;
  outputs.write(a.out, render_timing_table(reports));
  fs::path structured = a.out;
  structured += ".json";
  outputs.write(structured, timing_json(reports));
  write_manifest(outputs, manifest_beside(a.out), sub, json{{"sequences", a.seed}}, {a.model},
                 &plan);
  outputs.commit();
  std::cout << render_timing_table(reports);
}

// --- diagnose -------------------------------------------------------------

struct DiagnoseArgs {
  std::uint64_t parameters = 0;
  std::uint64_t layers = 0;
  double eps = 0.01;
};

void run_diagnose(const DiagnoseArgs& a) {
  if (a.layers < 2) throw UsageError("--L must be at least 2");
  if (!(a.eps > 0.0 && a.eps < 1.0)) throw UsageError("--eps must lie in (0, 1)");
  const ComplexityBound b = complexity_bound(a.parameters, a.layers, a.eps);
  std::cout << "W = " << b.parameter_count << "\n"
            << "L = " << b.layer_count << "\n"
            << "vc_lower_bound d = " << b.vc_dimension << "\n"
            << "eps = " << b.epsilon << "\n"
            << "sample_size_lower_bound m = " << b.sample_size << "\n";
}

// --- sweep ----------------------------------------------------------------

struct SweepArgs {
  std::string model, out_dir, name;
  std::vector<std::string> tasks;
  std::vector<std::string> modes{"full", "attn", "ffwd"};
  std::size_t seq_len = 50;
  std::size_t count = 100;
  std::uint64_t seed = 1;
  std::size_t workers = 1;
};

std::string fixed(double v, int digits) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

void run_sweep(const SweepArgs& a, const CLI::App* sub) {
  const Model model = load(a.model);
  const std::size_t n = model.config.n_layers;
  if (a.seq_len > model.config.max_seq_len)
    throw UsageError("--seq-len exceeds the model's max_seq_len");
  const std::vector<TaskFile> tasks = load_tasks(a.tasks);
  const auto sequences = generate_sequences(a.seed, a.count, a.seq_len, model.config.vocab_size);
  const std::string name = a.name.empty() ? fs::path(a.model).stem().string() : a.name;
  const std::vector<double> fractions{0.66, 0.75, 0.90};

  struct Row {
    EvalReport eval;
    TimingReport timing;
  };
  auto run_variant = [&](const SkipPlan& plan, const std::string& label, const std::string& mode) {
    std::vector<TaskScore> scores;
    for (const auto& t : tasks) scores.push_back(evaluate_task(model, &plan, t, a.workers));
    return Row{make_report(label, scores), time_one_token(model, &plan, sequences, label, mode)};
  };

  const SkipPlan active = SkipPlan::all_active(n);
  Row baseline = run_variant(active, name + "-100%", "Full");
  baseline.timing.improvement_percent = 0.0;

  std::ostringstream md;
  json doc;
  doc["model"] = a.model;
  doc["timing_note"] = "forward passes only; mean seconds per predicted token";
  doc["sections"] = json::array();
  md << "# Skip sweep: " << name << " (" << n << " layers)\n\n"
     << "Times cover forward passes only; Time is mean seconds per predicted token x10^2.\n";

  for (const bool keep_last : {false, true}) {
    for (const auto& mode_text : a.modes) {
      const SkipKind kind = parse_skip_kind(mode_text);
      std::vector<Row> rows;
      for (double f : fractions) {
        const std::size_t k = resolve_skip_count(n, f);
        if (keep_last && k + 1 >= n) continue;
        const SkipPlan plan =
            resolve_plan(SkipSpec{kind, f, keep_last, std::nullopt, SkipSelection::Tail}, n);
        Row row = run_variant(plan, name + "-" + percent_label(f),
                              std::string(to_string(kind)));
        row.timing.improvement_percent =
            improvement_pct(row.timing.mean_seconds, baseline.timing.mean_seconds);
        rows.push_back(std::move(row));
      }
      rows.push_back(baseline);

      md << "\n## mode=" << to_string(kind) << " keep_last=" << (keep_last ? "yes" : "no")
         << "\n\n| Model |";
      for (const auto& t : baseline.eval.tasks) md << ' ' << t.task << " |";
      md << " Average | Time | % |\n|---|";
      for (std::size_t i = 0; i < baseline.eval.tasks.size(); ++i) md << "---|";
      md << "---|---|---|\n";
      json section;
      section["mode"] = std::string(to_string(kind));
      section["keep_last"] = keep_last;
      section["rows"] = json::array();
      for (const auto& r : rows) {
        md << "| " << r.eval.variant << " |";
        for (const auto& t : r.eval.tasks) md << ' ' << fixed(report_percent(t.primary()), 1) << " |";
        md << ' ' << fixed(report_percent(r.eval.average), 1) << " | "
           << fixed(r.timing.mean_seconds * 100.0, 2) << " | "
           << fixed(r.timing.improvement_percent.value_or(0.0), 2) << " |\n";
        json row;
        row["variant"] = r.eval.variant;
        row["eval"] = json::parse(report_json(std::span<const EvalReport>(&r.eval, 1)));
        row["timing"] = json::parse(timing_json(std::span<const TimingReport>(&r.timing, 1)));
        section["rows"].push_back(row);
      }
      doc["sections"].push_back(section);
    }
  }

  Outputs outputs;
  const fs::path dir = a.out_dir;
  outputs.write(dir / "sweep.md", md.str());
  outputs.write(dir / "sweep.json", doc.dump(2) + "\n");
  std::vector<std::string> inputs{a.model};
  inputs.insert(inputs.end(), a.tasks.begin(), a.tasks.end());
  write_manifest(outputs, dir / "manifest.json", sub, json{{"sequences", a.seed}}, inputs,
                 nullptr);
  outputs.commit();
  std::cout << md.str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"skiplab: layer-skipping experiments on small decoder-only transformers"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* gen_cmd = app.add_subcommand("gen", "Write a seeded random checkpoint");
  gen_cmd->add_option("--out", gen.out, "Checkpoint path")->required();
  gen_cmd->add_option("--seed", gen.seed, "Initialization seed")->capture_default_str();
  gen_cmd->add_option("--vocab", gen.cfg.vocab_size)->capture_default_str();
  gen_cmd->add_option("--d-model", gen.cfg.d_model)->capture_default_str();
  gen_cmd->add_option("--layers", gen.cfg.n_layers)->capture_default_str();
  gen_cmd->add_option("--heads", gen.cfg.n_heads)->capture_default_str();
  gen_cmd->add_option("--d-ff", gen.cfg.d_ff)->capture_default_str();
  gen_cmd->add_option("--max-seq-len", gen.cfg.max_seq_len)->capture_default_str();
  gen_cmd->add_option("--eps", gen.cfg.layernorm_eps, "Layer norm epsilon")->capture_default_str();
  gen_cmd->add_option("--norm", gen.norm, "Norm placement")
      ->check(CLI::IsMember({"post", "pre"}))
      ->capture_default_str();

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Train a checkpoint on a byte corpus");
  train_cmd->add_option("--model", tr.model)->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--corpus", tr.corpus)->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--out", tr.out)->required();
  train_cmd->add_option("--steps", tr.cfg.steps)->capture_default_str();
  train_cmd->add_option("--lr", tr.cfg.learning_rate)->capture_default_str();
  train_cmd->add_option("--batch", tr.cfg.batch_size)->capture_default_str();
  train_cmd->add_option("--context", tr.cfg.context_length)->capture_default_str();
  train_cmd->add_option("--seed", tr.cfg.seed, "Batch sampling seed")->capture_default_str();
  train_cmd->add_option("--optimizer", tr.optimizer)
      ->check(CLI::IsMember({"adam", "sgd"}))
      ->capture_default_str();

  PlanArgs pl;
  auto* plan_cmd = app.add_subcommand("plan", "Print or save a skip plan");
  plan_cmd->add_option("--layers-total", pl.layers_total, "Number of layers in the model");
  plan_cmd->add_option("--model", pl.model, "Take the layer count from a checkpoint")
      ->check(CLI::ExistingFile);
  plan_cmd->add_option("--out", pl.out, "Plan file to write (default: stdout)");
  pl.flags.add_to(plan_cmd);

  TraceArgs tc;
  auto* trace_cmd = app.add_subcommand("trace", "Per-layer input/output cosine similarity");
  trace_cmd->add_option("--model", tc.model)->required()->check(CLI::ExistingFile);
  trace_cmd->add_option("--corpus", tc.corpus)->required()->check(CLI::ExistingFile);
  trace_cmd->add_option("--out", tc.out, "Trace table path")->required();
  trace_cmd->add_option("--context", tc.context, "Window length (default: max_seq_len)");
  trace_cmd->add_option("--snapshots", tc.snapshots, "Partial traces for the rank-stability report")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  tc.flags.add_to(trace_cmd);

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "Score multiple-choice task files");
  eval_cmd->add_option("--model", ev.model)->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--tasks", ev.tasks)->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--out", ev.out, "Report table path")->required();
  eval_cmd->add_option("--variant", ev.variant, "Row label");
  eval_cmd->add_option("--exclude", ev.exclude, "Tasks left out of the average");
  eval_cmd->add_option("--workers", ev.workers)->check(CLI::PositiveNumber)->capture_default_str();
  ev.flags.add_to(eval_cmd);

  BenchArgs bn;
  auto* bench_cmd = app.add_subcommand("bench", "Time one-token generation");
  bench_cmd->add_option("--model", bn.model)->required()->check(CLI::ExistingFile);
  bench_cmd->add_option("--out", bn.out, "Timing table path")->required();
  bench_cmd->add_option("--variant", bn.variant, "Row label");
  bench_cmd->add_option("--seq-len", bn.seq_len)->check(CLI::PositiveNumber)->capture_default_str();
  bench_cmd->add_option("--count", bn.count)->check(CLI::PositiveNumber)->capture_default_str();
  bench_cmd->add_option("--seed", bn.seed, "Sequence seed")->capture_default_str();
  bench_cmd->add_option("--workers", "Ignored: timing is single-worker");
  bn.flags.add_to(bench_cmd);

  DiagnoseArgs dg;
  auto* diag_cmd = app.add_subcommand("diagnose", "VC-dimension and sample-size lower bounds");
  diag_cmd->add_option("--W", dg.parameters, "Parameter count")->required();
  diag_cmd->add_option("--L", dg.layers, "Layer count")->required();
  diag_cmd->add_option("--eps", dg.eps, "Accuracy gap")->capture_default_str();

  SweepArgs sw;
  auto* sweep_cmd =
      app.add_subcommand("sweep", "Evaluate and time every keep-fraction, mode and keep-last");
  sweep_cmd->add_option("--model", sw.model)->required()->check(CLI::ExistingFile);
  sweep_cmd->add_option("--tasks", sw.tasks)->required()->check(CLI::ExistingFile);
  sweep_cmd->add_option("--out-dir", sw.out_dir)->required();
  sweep_cmd->add_option("--name", sw.name, "Row label prefix (default: checkpoint stem)");
  sweep_cmd->add_option("--modes", sw.modes)
      ->delimiter(',')
      ->check(CLI::IsMember({"full", "attn", "attention", "ffwd"}))
      ->capture_default_str();
  sweep_cmd->add_option("--seq-len", sw.seq_len)->check(CLI::PositiveNumber)->capture_default_str();
  sweep_cmd->add_option("--count", sw.count)->check(CLI::PositiveNumber)->capture_default_str();
  sweep_cmd->add_option("--seed", sw.seed, "Sequence seed")->capture_default_str();
  sweep_cmd->add_option("--workers", sw.workers)->check(CLI::PositiveNumber)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (*gen_cmd) run_gen(gen, gen_cmd);
    if (*train_cmd) run_train(tr, train_cmd);
    if (*plan_cmd) run_plan(pl, plan_cmd);
    if (*trace_cmd) run_trace(tc, trace_cmd);
    if (*eval_cmd) run_eval(ev, eval_cmd);
    if (*bench_cmd) run_bench(bn, bench_cmd);
    if (*diag_cmd) run_diagnose(dg);
    if (*sweep_cmd) run_sweep(sw, sweep_cmd);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}

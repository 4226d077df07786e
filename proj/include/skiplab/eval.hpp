// Copyright 2026 The skiplab Authors
// SPDX-License-Identifier: Apache-2.0

// Multiple-choice log-likelihood scoring: accuracy, length-normalized
// accuracy, the multi-true-answer "mc2" probability mass, and averaging
// across tasks.

#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "skiplab/model.hpp"
#include "skiplab/skip_plan.hpp"

namespace skiplab {

enum class ItemKind {
  SingleGold,  // one correct choice, scored by accuracy / normalized accuracy
  Mc2,         // true/false partition, scored by mc2
};

struct FewShotExample {
  std::string context;
  std::string answer;
};

struct EvalItem {
  ItemKind kind = ItemKind::SingleGold;
  std::string context;
  std::vector<std::string> choices;
  std::size_t gold = 0;
  std::vector<std::size_t> true_set;
  std::vector<std::size_t> false_set;
  std::vector<FewShotExample> fewshot;

  /// Throws RejectedInput unless the item is well formed.
  void validate() const;
};

struct TaskFile {
  std::string name;
  std::size_t num_fewshot = 0;
  std::vector<EvalItem> items;
};

/// Parses line-delimited JSON. An optional first record without a
/// "context" field sets the task name and few-shot count.
TaskFile parse_task_file(std::string_view text, std::string default_name);
TaskFile load_task_file(const std::filesystem::path& path);

struct LogLikelihood {
  double total = 0.0;
  std::size_t tokens = 0;
};

/// Σ log p(continuation token | everything before it). The prefix is the
/// few-shot examples (context, answer, separator each) followed by
/// `context`; an empty prefix is replaced by a lone separator token.
LogLikelihood sequence_loglikelihood(const Model& model, const SkipPlan* plan,
                                     std::string_view context, std::string_view continuation,
                                     std::span<const FewShotExample> fewshot = {});

struct ChoiceScore {
  double raw = 0.0;
  double normalized = 0.0;
  std::size_t tokens = 0;
};

struct ItemScore {
  std::vector<ChoiceScore> choices;
  std::size_t predicted_raw = 0;
  std::size_t predicted_normalized = 0;
  std::optional<double> mc2;
};

/// Scores every choice; predictions are argmax with ties to the lowest index.
ItemScore score_item(const Model& model, const SkipPlan* plan, const EvalItem& item,
                     std::size_t num_fewshot = 0);

/// Σ_true e^LL / Σ_all e^LL, via log-sum-exp.
double mc2_score(std::span<const double> loglikelihoods, std::span<const std::size_t> true_set,
                 std::span<const std::size_t> false_set);

struct TaskScore {
  std::string task;
  std::size_t item_count = 0;
  std::optional<double> accuracy;
  std::optional<double> normalized_accuracy;
  std::optional<double> mc2;

  /// Normalized accuracy for single-gold tasks, mc2 for mc2 tasks. In [0, 1].
  double primary() const;
};

/// Scores all items over `workers` threads; results are merged in item order.
TaskScore evaluate_task(const Model& model, const SkipPlan* plan, const TaskFile& task,
                        std::size_t workers = 1);

/// Arithmetic mean. Throws RejectedInput when empty.
double aggregate(std::span<const double> scores);

struct EvalReport {
  std::string variant;
  std::vector<TaskScore> tasks;
  std::vector<std::string> excluded;
  double average = 0.0;
};

/// Averages the primary scores of every task not named in `excluded`.
EvalReport make_report(std::string variant, std::vector<TaskScore> tasks,
                       std::vector<std::string> excluded = {});

/// Rounds a [0, 1] score to the one-decimal percentage used in reports.
double report_percent(double score);

/// Markdown table: one row per variant, one column per task, then Average.
std::string render_report_table(std::span<const EvalReport> rows);
std::string report_json(std::span<const EvalReport> rows);

}  // namespace skiplab

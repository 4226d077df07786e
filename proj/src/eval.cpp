// Copyright 2026 The skiplab Authors
// SPDX-License-Identifier: Apache-2.0

#include "skiplab/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "skiplab/error.hpp"
#include "skiplab/tokenizer.hpp"

namespace skiplab {

using nlohmann::json;

void EvalItem::validate() const {
  if (choices.empty()) throw RejectedInput("eval item has no choices");
  if (kind == ItemKind::SingleGold) {
    if (gold >= choices.size()) {
      throw RejectedInput("gold index " + std::to_string(gold) + " outside " +
                          std::to_string(choices.size()) + " choices");
    }
    return;
  }
  if (true_set.empty() || false_set.empty()) {
    throw RejectedInput("mc2 item needs nonempty true and false sets");
  }
  std::set<std::size_t> seen;
  for (auto set : {&true_set, &false_set}) {
    for (std::size_t i : *set) {
      if (i >= choices.size()) throw RejectedInput("mc2 index outside the choice list");
      if (!seen.insert(i).second) throw RejectedInput("mc2 index listed twice");
    }
  }
  if (seen.size() != choices.size()) {
    throw RejectedInput("mc2 true/false sets must cover every choice");
  }
}

TaskFile parse_task_file(std::string_view text, std::string default_name) {
  TaskFile task;
  task.name = std::move(default_name);
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json record;
    try {
      record = json::parse(line);
    } catch (const json::exception& e) {
      throw RejectedInput("task file line " + std::to_string(line_no) + ": " + e.what());
    }
    try {
      if (!record.contains("context")) {
        if (!task.items.empty()) {
          throw RejectedInput("task header must come before the items");
        }
        task.name = record.value("task", task.name);
        task.num_fewshot = record.value("num_fewshot", std::size_t{0});
        continue;
      }
      EvalItem item;
      const std::string type = record.value("type", std::string("acc"));
      item.context = record.at("context").get<std::string>();
      item.choices = record.at("choices").get<std::vector<std::string>>();
      if (type == "mc2") {
        item.kind = ItemKind::Mc2;
        item.true_set = record.at("true_set").get<std::vector<std::size_t>>();
        item.false_set = record.at("false_set").get<std::vector<std::size_t>>();
      } else if (type == "acc") {
        item.gold = record.at("gold").get<std::size_t>();
      } else {
        throw RejectedInput("unknown item type '" + type + "'");
      }
      if (record.contains("fewshot")) {
        for (const auto& ex : record.at("fewshot")) {
          item.fewshot.push_back(
              {ex.at("context").get<std::string>(), ex.at("answer").get<std::string>()});
        }
      }
      item.validate();
      task.items.push_back(std::move(item));
    } catch (const json::exception& e) {
      throw RejectedInput("task file line " + std::to_string(line_no) + ": " + e.what());
    } catch (const RejectedInput& e) {
      throw RejectedInput("task file line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (task.items.empty()) throw RejectedInput("task file has no items");
  return task;
}

TaskFile load_task_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw RejectedInput("cannot read task file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_task_file(buf.str(), path.stem().string());
}

LogLikelihood sequence_loglikelihood(const Model& model, const SkipPlan* plan,
                                     std::string_view context, std::string_view continuation,
                                     std::span<const FewShotExample> fewshot) {
  if (continuation.empty()) throw RejectedInput("empty continuation");
  std::vector<TokenId> tokens;
  for (const auto& ex : fewshot) {
    const auto c = encode_bytes(ex.context);
    const auto a = encode_bytes(ex.answer);
    tokens.insert(tokens.end(), c.begin(), c.end());
    tokens.insert(tokens.end(), a.begin(), a.end());
    tokens.push_back(kSeparatorToken);
  }
  const auto ctx = encode_bytes(context);
  tokens.insert(tokens.end(), ctx.begin(), ctx.end());
  if (tokens.empty()) tokens.push_back(kSeparatorToken);
  const std::size_t prefix = tokens.size();
  const auto cont = encode_bytes(continuation);
  tokens.insert(tokens.end(), cont.begin(), cont.end());
  if (tokens.size() > model.config.max_seq_len) {
    throw RejectedInput("context plus continuation is " + std::to_string(tokens.size()) +
                        " tokens; the model accepts " +
                        std::to_string(model.config.max_seq_len));
  }
  // The last token is never conditioned on, so it need not be fed.
  const std::span<const TokenId> fed(tokens.data(), tokens.size() - 1);
  const Matrix logits = model_forward(fed, model, plan);
  LogLikelihood ll;
  for (std::size_t pos = prefix; pos < tokens.size(); ++pos) {
    const auto row = logits.row(pos - 1);
    const double max = *std::max_element(row.begin(), row.end());
    double sum = 0.0;
    for (float v : row) sum += std::exp(v - max);
    ll.total += row[tokens[pos]] - (max + std::log(sum));
    ++ll.tokens;
  }
  return ll;
}

namespace {

std::size_t argmax_lowest(const std::vector<double>& v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

double log_sum_exp(std::span<const double> lls, std::span<const std::size_t> idx) {
  double max = -std::numeric_limits<double>::infinity();
  for (std::size_t i : idx) max = std::max(max, lls[i]);
  double sum = 0.0;
  for (std::size_t i : idx) sum += std::exp(lls[i] - max);
  return max + std::log(sum);
}

}  // namespace

ItemScore score_item(const Model& model, const SkipPlan* plan, const EvalItem& item,
                     std::size_t num_fewshot) {
  item.validate();
  const std::size_t shots = std::min(num_fewshot, item.fewshot.size());
  const std::span<const FewShotExample> fewshot(item.fewshot.data(), shots);
  ItemScore out;
  std::vector<double> raw, norm;
  for (const auto& choice : item.choices) {
    const LogLikelihood ll = sequence_loglikelihood(model, plan, item.context, choice, fewshot);
    ChoiceScore cs{ll.total, ll.total / static_cast<double>(ll.tokens), ll.tokens};
    raw.push_back(cs.raw);
    norm.push_back(cs.normalized);
    out.choices.push_back(cs);
  }
  out.predicted_raw = argmax_lowest(raw);
  out.predicted_normalized = argmax_lowest(norm);
  if (item.kind == ItemKind::Mc2) out.mc2 = mc2_score(raw, item.true_set, item.false_set);
  return out;
}

double mc2_score(std::span<const double> loglikelihoods, std::span<const std::size_t> true_set,
                 std::span<const std::size_t> false_set) {
  if (true_set.empty() || false_set.empty()) {
    throw RejectedInput("mc2_score: true and false sets must both be nonempty");
  }
  std::vector<std::size_t> all(true_set.begin(), true_set.end());
  all.insert(all.end(), false_set.begin(), false_set.end());
  for (std::size_t i : all) {
    if (i >= loglikelihoods.size()) throw RejectedInput("mc2_score: index out of range");
  }
  return std::exp(log_sum_exp(loglikelihoods, true_set) - log_sum_exp(loglikelihoods, all));
}

double TaskScore::primary() const {
  if (mc2) return *mc2;
  if (normalized_accuracy) return *normalized_accuracy;
  throw RejectedInput("task " + task + " has no score");
}

TaskScore evaluate_task(const Model& model, const SkipPlan* plan, const TaskFile& task,
                        std::size_t workers) {
  if (task.items.empty()) throw RejectedInput("task " + task.name + " has no items");
  std::vector<ItemScore> scores(task.items.size());
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto work = [&] {
    for (std::size_t i = next++; i < task.items.size(); i = next++) {
      try {
        scores[i] = score_item(model, plan, task.items[i], task.num_fewshot);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
      }
    }
  };
  const std::size_t n = std::clamp<std::size_t>(workers, 1, task.items.size());
  if (n == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < n; ++t) pool.emplace_back(work);
  }
  if (failure) std::rethrow_exception(failure);

  TaskScore out;
  out.task = task.name;
  out.item_count = task.items.size();
  std::size_t single = 0, hits_raw = 0, hits_norm = 0, mc2_items = 0;
  double mc2_total = 0.0;
  for (std::size_t i = 0; i < task.items.size(); ++i) {
    const EvalItem& item = task.items[i];
    if (item.kind == ItemKind::SingleGold) {
      ++single;
      hits_raw += scores[i].predicted_raw == item.gold;
      hits_norm += scores[i].predicted_normalized == item.gold;
    } else {
      ++mc2_items;
      mc2_total += *scores[i].mc2;
    }
  }
  if (single > 0) {
    out.accuracy = static_cast<double>(hits_raw) / static_cast<double>(single);
    out.normalized_accuracy = static_cast<double>(hits_norm) / static_cast<double>(single);
  }
  if (mc2_items > 0) out.mc2 = mc2_total / static_cast<double>(mc2_items);
  return out;
}

double aggregate(std::span<const double> scores) {
  if (scores.empty()) throw RejectedInput("aggregate: no included tasks");
  double sum = 0.0;
  for (double s : scores) sum += s;
  return sum / static_cast<double>(scores.size());
}

EvalReport make_report(std::string variant, std::vector<TaskScore> tasks,
                       std::vector<std::string> excluded) {
  EvalReport report;
  report.variant = std::move(variant);
  std::vector<double> included;
  for (const auto& t : tasks) {
    if (std::find(excluded.begin(), excluded.end(), t.task) == excluded.end()) {
      included.push_back(t.primary());
    }
  }
  report.average = aggregate(included);
  report.tasks = std::move(tasks);
  report.excluded = std::move(excluded);
  return report;
}

double report_percent(double score) { return std::round(score * 1000.0) / 10.0; }

namespace {

std::string fmt1(double v) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(1) << v;
  return s.str();
}

}  // namespace

std::string render_report_table(std::span<const EvalReport> rows) {
  if (rows.empty()) return {};
  std::ostringstream out;
  out << "| Model |";
  for (const auto& t : rows.front().tasks) out << ' ' << t.task << " |";
  for (const auto& e : rows.front().excluded) {
    bool present = false;
    for (const auto& t : rows.front().tasks) present |= t.task == e;
    if (!present) out << ' ' << e << " |";
  }
  out << " Average |\n|---|";
  const std::size_t extra = rows.front().tasks.size();
  for (std::size_t i = 0; i < extra; ++i) out << "---|";
  for (const auto& e : rows.front().excluded) {
    bool present = false;
    for (const auto& t : rows.front().tasks) present |= t.task == e;
    if (!present) out << "---|";
  }
  out << "---|\n";
  for (const auto& row : rows) {
    out << "| " << row.variant << " |";
    for (const auto& t : row.tasks) {
      const bool excluded =
          std::find(row.excluded.begin(), row.excluded.end(), t.task) != row.excluded.end();
      out << ' ' << (excluded ? std::string("-") : fmt1(report_percent(t.primary()))) << " |";
    }
    for (const auto& e : row.excluded) {
      bool present = false;
      for (const auto& t : row.tasks) present |= t.task == e;
      if (!present) out << " - |";
    }
    out << ' ' << fmt1(report_percent(row.average)) << " |\n";
  }
  return out.str();
}

std::string report_json(std::span<const EvalReport> rows) {
  nlohmann::ordered_json j = nlohmann::ordered_json::array();
  for (const auto& row : rows) {
    nlohmann::ordered_json r;
    r["variant"] = row.variant;
    auto& tasks = r["tasks"] = nlohmann::ordered_json::array();
    for (const auto& t : row.tasks) {
      nlohmann::ordered_json tj;
      tj["task"] = t.task;
      tj["items"] = t.item_count;
      tj["accuracy"] = t.accuracy ? nlohmann::ordered_json(*t.accuracy) : nullptr;
      tj["normalized_accuracy"] =
          t.normalized_accuracy ? nlohmann::ordered_json(*t.normalized_accuracy) : nullptr;
      tj["mc2"] = t.mc2 ? nlohmann::ordered_json(*t.mc2) : nullptr;
      tj["score_percent"] = report_percent(t.primary());
      tasks.push_back(tj);
    }
    r["excluded"] = row.excluded;
    r["average"] = row.average;
    r["average_percent"] = report_percent(row.average);
    j.push_back(r);
  }
  return j.dump(2) + "\n";
}

}  // namespace skiplab

// Copyright 2026 The skiplab Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <string>

#include <gtest/gtest.h>
#include <json.hpp>

#include "oracle/reference_model.hpp"
#include "skiplab/error.hpp"
#include "skiplab/eval.hpp"
#include "skiplab/tokenizer.hpp"
#include "test_util.hpp"

using namespace skiplab;

namespace {

Model eval_model(std::uint64_t seed) {
  ModelConfig cfg = testutil::small_config();
  cfg.max_seq_len = 64;
  return testutil::jittered_model(cfg, seed, 0.05);
}

// Σ log-softmax of the oracle logits over the continuation positions.
double oracle_loglikelihood(const Model& m, const std::string& prefix, const std::string& cont) {
  std::vector<TokenId> tokens = encode_bytes(prefix);
  if (tokens.empty()) tokens.push_back(kSeparatorToken);
  const std::size_t start = tokens.size();
  for (TokenId t : encode_bytes(cont)) tokens.push_back(t);
  const ref::Rows z = ref::logits(tokens, m);
  double total = 0.0;
  for (std::size_t p = start; p < tokens.size(); ++p) {
    const auto& row = z[p - 1];
    double mx = -1e300, sum = 0.0;
    for (double v : row) mx = std::max(mx, v);
    for (double v : row) sum += std::exp(v - mx);
    total += row[tokens[p]] - mx - std::log(sum);
  }
  return total;
}

EvalItem acc_item(std::string context, std::vector<std::string> choices, std::size_t gold) {
  EvalItem it;
  it.context = std::move(context);
  it.choices = std::move(choices);
  it.gold = gold;
  return it;
}

}  // namespace

TEST(Mc2, MatchesDirectProbabilityRatio) {
  Rng rng(31);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> ll(5);
    for (double& v : ll) v = -20.0 * rng.uniform01();
    const std::vector<std::size_t> t{0, 3}, f{1, 2, 4};
    const double num = std::exp(ll[0]) + std::exp(ll[3]);
    double den = 0.0;
    for (double v : ll) den += std::exp(v);
    ASSERT_NEAR(mc2_score(ll, t, f), num / den, 1e-12);
  }
}

TEST(Mc2, StableForVeryNegativeLogLikelihoods) {
  const std::vector<double> ll{-2000.0, -2001.0, -2000.0};
  const std::vector<std::size_t> t{0}, f{1, 2};
  const double want = 1.0 / (2.0 + std::exp(-1.0));
  EXPECT_NEAR(mc2_score(ll, t, f), want, 1e-12);
  EXPECT_THROW(mc2_score(ll, std::vector<std::size_t>{}, f), RejectedInput);
  EXPECT_THROW(mc2_score(ll, t, std::vector<std::size_t>{5}), RejectedInput);
}

TEST(LogLikelihood, MatchesOracle) {
  const Model m = eval_model(32);
  for (const auto& [ctx, cont] : std::vector<std::pair<std::string, std::string>>{
           {"the cat sat on", " the mat."}, {"", "hello"}, {"a", "b"}}) {
    const LogLikelihood ll = sequence_loglikelihood(m, nullptr, ctx, cont);
    EXPECT_EQ(ll.tokens, cont.size());
    EXPECT_NEAR(ll.total, oracle_loglikelihood(m, ctx, cont), 1e-4 * (1.0 + std::abs(ll.total)));
  }
}

TEST(LogLikelihood, FewShotPrefixIsJoinedWithSeparators) {
  const Model m = eval_model(33);
  const std::vector<FewShotExample> shots{{"the fox likes to eat", " eggs."}};
  const LogLikelihood ll = sequence_loglikelihood(m, nullptr, "the cat ran", " home.", shots);
  std::vector<TokenId> tokens = encode_bytes("the fox likes to eat eggs.");
  tokens.push_back(kSeparatorToken);
  for (TokenId t : encode_bytes("the cat ran home.")) tokens.push_back(t);
  const ref::Rows z = ref::logits(tokens, m);
  double want = 0.0;
  const std::size_t start = tokens.size() - 6;
  for (std::size_t p = start; p < tokens.size(); ++p) {
    double mx = -1e300, sum = 0.0;
    for (double v : z[p - 1]) mx = std::max(mx, v);
    for (double v : z[p - 1]) sum += std::exp(v - mx);
    want += z[p - 1][tokens[p]] - mx - std::log(sum);
  }
  EXPECT_NEAR(ll.total, want, 1e-4 * (1.0 + std::abs(want)));
}

TEST(LogLikelihood, ChainRuleAdditivity) {
  const Model m = eval_model(34);
  Rng rng(34);
  for (int trial = 0; trial < 20; ++trial) {
    std::string ctx, a, b;
    for (std::size_t i = 0, n = 1 + rng.uniform_index(10); i < n; ++i)
      ctx += static_cast<char>('a' + rng.uniform_index(26));
    for (std::size_t i = 0, n = 1 + rng.uniform_index(8); i < n; ++i)
      a += static_cast<char>('a' + rng.uniform_index(26));
    for (std::size_t i = 0, n = 1 + rng.uniform_index(8); i < n; ++i)
      b += static_cast<char>('a' + rng.uniform_index(26));
    const double whole = sequence_loglikelihood(m, nullptr, ctx, a + b).total;
    const double parts = sequence_loglikelihood(m, nullptr, ctx, a).total +
                         sequence_loglikelihood(m, nullptr, ctx + a, b).total;
    ASSERT_NEAR(whole, parts, 1e-5 * (1.0 + std::abs(whole)));
  }
}

TEST(LogLikelihood, RejectsOverlongAndEmpty) {
  const Model m = eval_model(35);
  EXPECT_THROW(sequence_loglikelihood(m, nullptr, std::string(60, 'x'), "abcdef"), RejectedInput);
  EXPECT_THROW(sequence_loglikelihood(m, nullptr, "x", ""), RejectedInput);
}

TEST(ScoreItem, NormalizationDividesByTokenCount) {
  const Model m = eval_model(36);
  const EvalItem it = acc_item("the dog", {" ran.", " sat on the rug."}, 0);
  const ItemScore s = score_item(m, nullptr, it);
  for (const auto& c : s.choices) EXPECT_DOUBLE_EQ(c.normalized, c.raw / c.tokens);
  EXPECT_EQ(s.choices[1].tokens, 16u);
  EXPECT_FALSE(s.mc2.has_value());
}

TEST(ScoreItem, TiesGoToLowestIndex) {
  // All-zero weights give a uniform next-token distribution.
  Model m = eval_model(37);
  m.weights = zero_weights(m.config);
  const ItemScore s = score_item(m, nullptr, acc_item("x", {"ab", "cd", "ef"}, 2));
  EXPECT_EQ(s.choices[0].raw, s.choices[2].raw);
  EXPECT_EQ(s.predicted_raw, 0u);
  EXPECT_EQ(s.predicted_normalized, 0u);
}

TEST(EvaluateTask, WorkerCountDoesNotChangeResults) {
  const Model m = eval_model(38);
  const TaskFile task = load_task_file(testutil::fixture("tasks/arc_like.jsonl"));
  const TaskScore one = evaluate_task(m, nullptr, task, 1);
  const TaskScore four = evaluate_task(m, nullptr, task, 4);
  EXPECT_EQ(one.accuracy, four.accuracy);
  EXPECT_EQ(one.normalized_accuracy, four.normalized_accuracy);
  EXPECT_EQ(one.item_count, 24u);

  const TaskFile tqa = load_task_file(testutil::fixture("tasks/truthfulqa_like.jsonl"));
  const TaskScore a = evaluate_task(m, nullptr, tqa, 1);
  const TaskScore b = evaluate_task(m, nullptr, tqa, 3);
  ASSERT_TRUE(a.mc2.has_value());
  EXPECT_EQ(*a.mc2, *b.mc2);
  EXPECT_GE(a.primary(), 0.0);
  EXPECT_LE(a.primary(), 1.0);
}

TEST(TaskFiles, FixturesParse) {
  const TaskFile arc = load_task_file(testutil::fixture("tasks/arc_like.jsonl"));
  EXPECT_EQ(arc.name, "ARC-like");
  EXPECT_EQ(arc.num_fewshot, 0u);
  const TaskFile hs = load_task_file(testutil::fixture("tasks/hellaswag_like.jsonl"));
  EXPECT_EQ(hs.num_fewshot, 1u);
  EXPECT_EQ(hs.items.front().fewshot.size(), 1u);
  const TaskFile tqa = load_task_file(testutil::fixture("tasks/truthfulqa_like.jsonl"));
  EXPECT_EQ(tqa.items.front().kind, ItemKind::Mc2);
}

TEST(TaskFiles, ParseErrors) {
  EXPECT_THROW(parse_task_file("", "t"), RejectedInput);
  EXPECT_THROW(parse_task_file("{not json", "t"), RejectedInput);
  EXPECT_THROW(parse_task_file(R"({"context":"a","choices":["b"],"gold":3})", "t"),
               RejectedInput);
  EXPECT_THROW(parse_task_file(R"({"type":"mc9","context":"a","choices":["b"]})", "t"),
               RejectedInput);
  EXPECT_THROW(
      parse_task_file(R"({"type":"mc2","context":"a","choices":["b","c"],"true_set":[0],"false_set":[0]})",
                      "t"),
      RejectedInput);
  const TaskFile ok = parse_task_file(R"({"context":"a","choices":["b","c"],"gold":1})", "dflt");
  EXPECT_EQ(ok.name, "dflt");
}

TEST(Reports, AggregateAndPercent) {
  const std::vector<double> s{0.5, 0.25, 0.75};
  EXPECT_DOUBLE_EQ(aggregate(s), 0.5);
  EXPECT_THROW(aggregate(std::vector<double>{}), RejectedInput);
  EXPECT_DOUBLE_EQ(report_percent(0.5725), 57.3);
  EXPECT_DOUBLE_EQ(report_percent(0.0), 0.0);
  EXPECT_DOUBLE_EQ(report_percent(1.0), 100.0);
}

TEST(Reports, ExcludedTasksLeaveTheAverage) {
  TaskScore a{"A", 4, 0.5, 0.5, std::nullopt};
  TaskScore b{"B", 4, 0.25, 0.25, std::nullopt};
  TaskScore c{"C", 4, std::nullopt, std::nullopt, 0.9};
  const EvalReport r = make_report("100%", {a, b, c}, {"C"});
  EXPECT_DOUBLE_EQ(r.average, 0.375);
  const std::vector<EvalReport> rows{r};
  const std::string table = render_report_table(rows);
  EXPECT_NE(table.find("| Model | A | B | C | Average |"), std::string::npos);
  EXPECT_NE(table.find("| 100% | 50.0 | 25.0 | - | 37.5 |"), std::string::npos);
  const auto j = nlohmann::json::parse(report_json(rows));
  ASSERT_TRUE(j.is_array());
  EXPECT_EQ(j[0]["variant"], "100%");
}

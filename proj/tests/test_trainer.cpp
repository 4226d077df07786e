// Copyright 2026 The skiplab Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>

#include <gtest/gtest.h>

#include "oracle/reference_model.hpp"
#include "skiplab/error.hpp"
#include "skiplab/trainer.hpp"
#include "test_util.hpp"

using namespace skiplab;

namespace {

Batch micro_batch(std::uint32_t vocab, std::uint64_t seed) {
  Rng rng(seed);
  Batch b;
  for (int s = 0; s < 2; ++s) {
    const auto seq = testutil::random_tokens(7, vocab, rng);
    b.inputs.emplace_back(seq.begin(), seq.end() - 1);
    b.targets.emplace_back(seq.begin() + 1, seq.end());
  }
  return b;
}

// Central differences on the double-precision oracle, every coordinate.
// Returns the number of coordinates outside tolerance.
int count_gradient_mismatches(Model m, const Batch& batch, std::span<const LayerSkipMode> modes) {
  const SkipPlan plan(std::vector<LayerSkipMode>(modes.begin(), modes.end()), SkipSpec{});
  const LossAndGradients lg = backward(m, batch, modes.empty() ? nullptr : &plan);
  const auto grads = tensors(std::as_const(lg.gradients));
  auto params = tensors(m.weights);
  const double h = 1e-3;
  int bad = 0;
  for (std::size_t t = 0; t < params.size(); ++t) {
    for (std::size_t j = 0; j < params[t].values.size(); ++j) {
      float& w = params[t].values[j];
      const float saved = w;
      const float up = static_cast<float>(saved + h);
      const float down = static_cast<float>(saved - h);
      w = up;
      const double lu = ref::mean_loss(m, batch.inputs, batch.targets, modes);
      w = down;
      const double ld = ref::mean_loss(m, batch.inputs, batch.targets, modes);
      w = saved;
      const double numeric = (lu - ld) / (static_cast<double>(up) - static_cast<double>(down));
      const double analytic = grads[t].values[j];
      const double abs_err = std::abs(numeric - analytic);
      const double rel_err = abs_err / std::max(std::abs(numeric), std::abs(analytic));
      if (abs_err > 1e-6 && rel_err > 1e-4) {
        ++bad;
        ADD_FAILURE() << params[t].name << "[" << j << "] analytic " << analytic << " numeric "
                      << numeric;
      }
    }
  }
  return bad;
}

std::vector<std::uint8_t> read_corpus() {
  const std::string path = testutil::fixture("corpus.txt");
  std::FILE* f = std::fopen(path.c_str(), "rb");
  std::vector<std::uint8_t> bytes;
  if (!f) return bytes;
  int c;
  while ((c = std::fgetc(f)) != EOF) bytes.push_back(static_cast<std::uint8_t>(c));
  std::fclose(f);
  return bytes;
}

bool same_weights(const ModelWeights& a, const ModelWeights& b) {
  const auto ta = tensors(a);
  const auto tb = tensors(b);
  for (std::size_t i = 0; i < ta.size(); ++i)
    if (!std::equal(ta[i].values.begin(), ta[i].values.end(), tb[i].values.begin())) return false;
  return true;
}

}  // namespace

TEST(CrossEntropy, Examples) {
  // Uniform logits over 4 classes: log 4 regardless of target.
  const Matrix uniform(2, 4);
  const std::vector<TokenId> t{0, 3};
  EXPECT_NEAR(cross_entropy_loss(uniform, t), std::log(4.0), 1e-12);
  const Matrix z{{0.0f, std::log(3.0f)}};
  EXPECT_NEAR(cross_entropy_loss(z, std::vector<TokenId>{1}), std::log(4.0 / 3.0), 1e-6);
  EXPECT_THROW(cross_entropy_loss(z, std::vector<TokenId>{2}), RejectedInput);
  EXPECT_THROW(cross_entropy_loss(z, std::vector<TokenId>{0, 1}), RejectedInput);
}

TEST(Gradients, MatchCentralDifferencesPostNorm) {
  const Model m = testutil::jittered_model(testutil::micro_config(NormPlacement::Post), 21);
  EXPECT_EQ(count_gradient_mismatches(m, micro_batch(11, 21), {}), 0);
}

TEST(Gradients, MatchCentralDifferencesPreNorm) {
  const Model m = testutil::jittered_model(testutil::micro_config(NormPlacement::Pre), 22);
  EXPECT_EQ(count_gradient_mismatches(m, micro_batch(11, 22), {}), 0);
}

TEST(Gradients, MatchCentralDifferencesWithSkippedBlocks) {
  const Model m = testutil::jittered_model(testutil::micro_config(), 23);
  const std::vector<LayerSkipMode> modes{LayerSkipMode::SkipAttention, LayerSkipMode::SkipFfwd};
  EXPECT_EQ(count_gradient_mismatches(m, micro_batch(11, 23), modes), 0);
}

TEST(Gradients, BypassedBlocksGetZeroGradient) {
  const Model m = testutil::jittered_model(testutil::micro_config(), 24);
  const SkipPlan plan({LayerSkipMode::SkipAttention, LayerSkipMode::SkipFull}, SkipSpec{});
  const LossAndGradients lg = backward(m, micro_batch(11, 24), &plan);
  for (const auto& t : tensors(std::as_const(lg.gradients))) {
    const bool layer1 = t.name.starts_with("layers.1.");
    const bool layer0_attn = t.name == "layers.0.wq" || t.name == "layers.0.wk" ||
                             t.name == "layers.0.wv" || t.name == "layers.0.wo" ||
                             t.name.starts_with("layers.0.ln1.");
    if (!(layer1 || layer0_attn)) continue;
    for (float g : t.values) ASSERT_EQ(g, 0.0f) << t.name;
  }
}

TEST(Gradients, LossAgreesWithForward) {
  const Model m = testutil::jittered_model(testutil::micro_config(), 25);
  const Batch b = micro_batch(11, 25);
  EXPECT_NEAR(backward(m, b).loss, batch_loss(m, b), 1e-9);
  EXPECT_NEAR(batch_loss(m, b), ref::mean_loss(m, b.inputs, b.targets), 1e-4);
}

TEST(Batches, SampleShapesAndShift) {
  std::vector<TokenId> stream(100);
  for (std::size_t i = 0; i < stream.size(); ++i) stream[i] = static_cast<TokenId>(i % 50);
  Rng rng(3);
  const Batch b = sample_batch(stream, 5, 16, rng);
  ASSERT_EQ(b.inputs.size(), 5u);
  for (std::size_t i = 0; i < 5; ++i) {
    ASSERT_EQ(b.inputs[i].size(), 16u);
    for (std::size_t p = 0; p < 16; ++p) ASSERT_EQ(b.targets[i][p], (b.inputs[i][p] + 1) % 50);
  }
  EXPECT_THROW(sample_batch(std::vector<TokenId>{1}, 1, 4, rng), RejectedInput);
}

TEST(Batches, SequentialCoversTheStreamOnce) {
  std::vector<TokenId> stream(23);
  for (std::size_t i = 0; i < stream.size(); ++i) stream[i] = static_cast<TokenId>(i);
  const Batch b = sequential_batch(stream, 5);
  std::size_t covered = 0;
  for (const auto& in : b.inputs) {
    ASSERT_EQ(in.front(), covered);
    covered += in.size();
  }
  EXPECT_EQ(covered, stream.size() - 1);
}

TEST(Train, DeterministicAndLossFalls) {
  const auto corpus = read_corpus();
  ASSERT_FALSE(corpus.empty());
  ModelConfig cfg = testutil::small_config();
  cfg.n_layers = 2;
  const Model init = make_random_model(cfg, 5);
  TrainConfig tc;
  tc.steps = 60;
  tc.learning_rate = 3e-3;
  tc.batch_size = 4;
  tc.context_length = 24;
  const TrainResult a = train(init, corpus, tc);
  const TrainResult b = train(init, corpus, tc);
  ASSERT_EQ(a.curve.size(), 60u);
  EXPECT_TRUE(same_weights(a.model.weights, b.model.weights));

  const Batch held = sequential_batch(std::vector<TokenId>(corpus.begin(), corpus.begin() + 481),
                                      24);
  EXPECT_LT(batch_loss(a.model, held), batch_loss(init, held) - 0.5);
}

TEST(Train, ZeroStepsLeavesModelUnchanged) {
  const Model init = make_random_model(testutil::micro_config(), 6);
  TrainConfig tc;
  tc.steps = 0;
  tc.context_length = 4;
  const std::vector<std::uint8_t> corpus{1, 2, 3, 4, 5, 6, 7, 8};
  const TrainResult r = train(init, corpus, tc);
  EXPECT_TRUE(r.curve.empty());
  EXPECT_TRUE(same_weights(init.weights, r.model.weights));
}

TEST(Train, HugeLearningRateDiverges) {
  const Model init = make_random_model(testutil::micro_config(), 7);
  TrainConfig tc;
  tc.steps = 5;
  tc.context_length = 4;
  tc.learning_rate = 1e39;
  const std::vector<std::uint8_t> corpus{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  try {
    train(init, corpus, tc);
    FAIL() << "expected divergence";
  } catch (const TrainingDivergence& e) {
    EXPECT_GE(e.step(), 0);
    EXPECT_NE(std::string(e.what()).find("at step"), std::string::npos);
  }
}

TEST(Train, RejectsOutOfVocabularyCorpus) {
  const Model init = make_random_model(testutil::micro_config(), 8);
  TrainConfig tc;
  tc.context_length = 4;
  EXPECT_THROW(train(init, std::vector<std::uint8_t>{1, 200, 3}, tc), RejectedInput);
}

TEST(Train, LossCurveTable) {
  const std::vector<LossPoint> curve{{0, 2.5}, {1, 2.25}};
  const std::string t = loss_curve_table(curve);
  EXPECT_EQ(t.substr(0, 10), "step\tloss\n");
  EXPECT_NE(t.find("1\t2.25"), std::string::npos);
}

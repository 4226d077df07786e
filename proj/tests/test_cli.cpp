// Copyright 2026 The skiplab Authors
// SPDX-License-Identifier: Apache-2.0

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>
#include <json.hpp>

#include "test_util.hpp"

namespace fs = std::filesystem;

namespace {

struct CliResult {
  int status = -1;
  std::string out;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("skiplab_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  CliResult run(const std::string& args) {
    const fs::path out = dir_ / "stdout.txt";
    const std::string cmd = std::string(SKIPLAB_CLI_PATH) + " " + args + " > " + out.string() +
                            " 2> " + (dir_ / "stderr.txt").string();
    const int raw = std::system(cmd.c_str());
    CliResult r;
    r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    r.out = slurp(out);
    return r;
  }

  fs::path path(const std::string& name) const { return dir_ / name; }
  std::string arg(const std::string& name) const { return path(name).string(); }

  // A 4-layer model small enough for the bundled tasks.
  std::string tiny_model() {
    const std::string m = arg("tiny.skpf");
    EXPECT_EQ(run("gen --out " + m +
                  " --seed 3 --d-model 16 --layers 4 --heads 2 --d-ff 32 --max-seq-len 64")
                  .status,
              0);
    return m;
  }

  fs::path dir_;
};

}  // namespace

TEST_F(Cli, PlanPrintsTheTailWindow) {
  const CliResult r = run("plan --layers-total 32 --keep-fraction 0.9 --mode full");
  ASSERT_EQ(r.status, 0);
  EXPECT_NE(r.out.find("29 skip_full"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("31 skip_full"), std::string::npos);
  EXPECT_NE(r.out.find("28 active"), std::string::npos);
}

TEST_F(Cli, Diagnose) {
  const CliResult r = run("diagnose --W 131072000 --L 2 --eps 0.01");
  ASSERT_EQ(r.status, 0);
  EXPECT_NE(r.out.find("vc_lower_bound d = 65536000"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("sample_size_lower_bound m = 2048000000"), std::string::npos);
}

TEST_F(Cli, UsageErrorsExitOne) {
  EXPECT_EQ(run("").status, 1);
  EXPECT_EQ(run("plan --layers-total 8 --keep-last --first").status, 1);
  EXPECT_EQ(run("plan --layers-total 8 --keep-fraction 1.5").status, 1);
  EXPECT_EQ(run("eval --model " + arg("missing.skpf") + " --tasks x --out y").status, 1);
  EXPECT_EQ(run("diagnose --W 10 --L 1").status, 1);
  EXPECT_EQ(run("frobnicate").status, 1);
}

TEST_F(Cli, RuntimeFailureExitsTwoAndLeavesNoOutputs) {
  const std::string m = arg("micro.skpf");
  ASSERT_EQ(run("gen --out " + m + " --vocab 258 --d-model 8 --layers 2 --heads 2 --d-ff 16 "
                "--max-seq-len 16").status,
            0);
  const std::string corpus = testutil::fixture("corpus.txt");
  const CliResult r = run("train --model " + m + " --corpus " + corpus + " --out " + arg("bad.skpf") +
                    " --steps 5 --lr 1e39 --context 8");
  EXPECT_EQ(r.status, 2);
  EXPECT_FALSE(fs::exists(path("bad.skpf")));
  EXPECT_FALSE(fs::exists(path("bad.skpf.loss.tsv")));
  EXPECT_FALSE(fs::exists(path("bad.skpf.manifest.json")));
}

TEST_F(Cli, GenTrainAndTraceWriteManifests) {
  const std::string m = tiny_model();
  ASSERT_TRUE(fs::exists(path("tiny.skpf.manifest.json")));
  const std::string corpus = testutil::fixture("corpus.txt");
  ASSERT_EQ(run("train --model " + m + " --corpus " + corpus + " --out " + arg("t.skpf") +
                " --steps 3 --context 16 --batch 2")
                .status,
            0);
  EXPECT_TRUE(fs::exists(path("t.skpf.loss.tsv")));
  const auto manifest = nlohmann::json::parse(slurp(path("t.skpf.manifest.json")));
  EXPECT_EQ(manifest["subcommand"], "train");
  EXPECT_FALSE(manifest["config"].contains("help"));

  ASSERT_EQ(run("trace --model " + arg("t.skpf") + " --corpus " + corpus + " --out " +
                arg("trace.tsv") + " --context 32")
                .status,
            0);
  const std::string table = slurp(path("trace.tsv"));
  EXPECT_EQ(table.rfind("layer\tmean\tcount\n", 0), 0u);
  const auto tj = nlohmann::json::parse(slurp(path("trace.tsv.json")));
  EXPECT_EQ(tj["n_layers"], 4);
  EXPECT_TRUE(tj.contains("snapshot_rank_agreement"));

  ASSERT_EQ(run("plan --model " + arg("t.skpf") + " --from-trace " + arg("trace.tsv") +
                " --keep-fraction 0.75 --out " + arg("p.plan"))
                .status,
            0);
  EXPECT_TRUE(fs::exists(path("p.plan")));
}

TEST_F(Cli, EvalAndBenchTables) {
  const std::string m = tiny_model();
  const std::string tasks = testutil::fixture("tasks/arc_like.jsonl") + " " +
                            testutil::fixture("tasks/truthfulqa_like.jsonl");
  ASSERT_EQ(run("eval --model " + m + " --tasks " + tasks + " --out " + arg("e.md") +
                " --variant tiny-75% --keep-fraction 0.75 --workers 2")
                .status,
            0);
  const std::string table = slurp(path("e.md"));
  EXPECT_NE(table.find("| Model | ARC-like | TruthfulQA-like | Average |"), std::string::npos)
      << table;
  EXPECT_NE(table.find("| tiny-75% |"), std::string::npos);

  ASSERT_EQ(run("bench --model " + m + " --out " + arg("b.md") +
                " --seq-len 8 --count 4 --keep-fraction 0.75 --mode attn")
                .status,
            0);
  const std::string bench = slurp(path("b.md"));
  EXPECT_EQ(bench.rfind("Forward passes only", 0), 0u);
  EXPECT_TRUE(fs::exists(path("b.md.manifest.json")));
}

TEST_F(Cli, SweepFormat) {
  const std::string m = tiny_model();
  const std::string tasks = testutil::fixture("tasks/arc_like.jsonl") + " " +
                            testutil::fixture("tasks/truthfulqa_like.jsonl");
  ASSERT_EQ(run("sweep --model " + m + " --tasks " + tasks + " --out-dir " + arg("sw") +
                " --name tiny --seq-len 8 --count 2")
                .status,
            0);
  const std::string md = slurp(path("sw/sweep.md"));
  for (const char* section : {"## mode=full keep_last=no", "## mode=attn keep_last=yes",
                              "## mode=ffwd keep_last=no"})
    EXPECT_NE(md.find(section), std::string::npos) << section << "\n" << md;
  EXPECT_NE(md.find("| Model | ARC-like | TruthfulQA-like | Average | Time | % |"),
            std::string::npos);
  EXPECT_NE(md.find("| tiny-100% |"), std::string::npos);
  EXPECT_TRUE(fs::exists(path("sw/manifest.json")));
  const auto j = nlohmann::json::parse(slurp(path("sw/sweep.json")));
  EXPECT_EQ(j["sections"].size(), 6u);
}

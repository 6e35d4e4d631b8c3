// Copyright 2026 The avunify Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>

#include <gtest/gtest.h>

#include "avu/checkpoint.h"
#include "avu/pipeline.h"
#include "test_support.h"

#ifndef AVU_CLI
#error "AVU_CLI must name the avu executable"
#endif

namespace avu {
namespace {

namespace fs = std::filesystem;

int run(const std::string& args) {
  const std::string cmd = std::string(AVU_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

TEST(Cli, HelpOnEverySubcommand) {
  EXPECT_EQ(run("--help"), 0);
  for (const char* sub : {"synth", "train", "eval", "ablate", "plot"})
    EXPECT_EQ(run(std::string(sub) + " --help"), 0) << sub;
}

TEST(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run(""), 2);
  EXPECT_EQ(run("frobnicate"), 2);
  EXPECT_EQ(run("synth --bogus-flag 1 --out /tmp/x"), 2);
  EXPECT_EQ(run("eval --manifest /nonexistent.jsonl"), 2);
  EXPECT_EQ(run("plot --csv /nonexistent.csv --out /tmp/x"), 2);
}

class CliRun : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new testing::TempDir("cli");
    ASSERT_EQ(run("synth --out " + (*dir_ / "data").string() +
                  " --classes 2 --per-class 4 --seed 3"),
              0);
    std::ofstream(*dir_ / "tiny.json")
        << R"({"model":{"embed_dim":16,"proj_dim":8,"compact_width":4,"decoder_depth":4},)"
        << R"("train":{"epochs":1,"batch_size":4,"learning_rate":0.001}})";
  }
  static void TearDownTestSuite() { delete dir_; }

  static std::string path(const std::string& name) { return (*dir_ / name).string(); }
  static testing::TempDir* dir_;
};

testing::TempDir* CliRun::dir_ = nullptr;

TEST_F(CliRun, TrainEvalAndConfigErrors) {
  const std::string manifest = path("data/manifest.jsonl");
  ASSERT_EQ(run("train --manifest " + manifest + " --out " + path("run") + " --config " +
                path("tiny.json")),
            0);
  ASSERT_TRUE(fs::exists(path("run/last.ckpt")));
  EXPECT_EQ(run("eval --checkpoint " + path("run/last.ckpt") + " --manifest " + manifest +
                " --tasks loc,sep,recog --out " + path("report.json") + " --csv " +
                path("rows.csv")),
            0);
  const MetricsReport r = MetricsReport::from_json(testing::slurp(path("report.json")));
  EXPECT_TRUE(r.piap && r.sdr && r.ir_acc);
  EXPECT_EQ(r.n_samples, 8);
  EXPECT_TRUE(fs::exists(path("rows.csv")));

  // A pruned head makes its task fail and the command exit nonzero.
  Checkpoint ck = load_checkpoint(path("run/last.ckpt"));
  remove_component(ck, Component::kHeadVLoc);
  save_checkpoint(path("pruned.ckpt"), ck);
  EXPECT_EQ(run("eval --checkpoint " + path("pruned.ckpt") + " --manifest " + manifest), 1);
  EXPECT_EQ(run("eval --checkpoint " + path("pruned.ckpt") + " --manifest " + manifest +
                " --tasks sep,recog"),
            0);

  EXPECT_EQ(run("eval --checkpoint " + path("run/last.ckpt") + " --manifest " + manifest +
                " --tasks loc,nope"),
            2);
  std::ofstream(path("bad.json")) << R"({"train":{"epochz":3}})";
  EXPECT_EQ(run("train --manifest " + manifest + " --out " + path("bad") + " --config " +
                path("bad.json")),
            2);
  EXPECT_EQ(run("train --manifest " + manifest + " --out " + path("bad") + " --config " +
                path("tiny.json") + " --depth 6"),
            2);
  EXPECT_EQ(run("train --manifest " + manifest + " --out " + path("bad") + " --init " +
                path("run/last.ckpt") + " --resume " + path("run/last.ckpt")),
            2);
  setenv("AVU_DEVICE", "cuda", 1);
  EXPECT_EQ(run("train --manifest " + manifest + " --out " + path("bad") + " --config " +
                path("tiny.json")),
            2);
  unsetenv("AVU_DEVICE");
}

TEST_F(CliRun, AblateAndPlot) {
  const std::string manifest = path("data/manifest.jsonl");
  ASSERT_EQ(run("ablate --axis depth --train-manifest " + manifest + " --test-manifest " +
                manifest + " --out " + path("ablate") + " --config " + path("tiny.json")),
            0);
  ASSERT_TRUE(fs::exists(path("ablate/ablation.csv")));
  EXPECT_EQ(run("plot --csv " + path("ablate/ablation.csv") + " --out " + path("plots")), 0);
  EXPECT_TRUE(fs::exists(path("plots/sdr_vs_depth.svg")));
  EXPECT_TRUE(fs::exists(path("plots/f1_vs_depth.svg")));
  EXPECT_EQ(run("ablate --axis lr --train-manifest " + manifest + " --test-manifest " +
                manifest + " --out " + path("x")),
            2);
}

}  // namespace
}  // namespace avu

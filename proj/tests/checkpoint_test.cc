// Copyright 2026 The avunify Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <fstream>
#include <map>

#include <gtest/gtest.h>

#include "avu/checkpoint.h"
#include "avu/errors.h"
#include "avu/pipeline.h"
#include "test_support.h"

namespace avu {
namespace {

ModelConfig tiny() {
  ModelConfig c;
  c.embed_dim = 16;
  c.proj_dim = 8;
  c.compact_width = 4;
  c.image_size = 64;
  c.spectrogram_size = 64;
  c.decoder_depth = 4;
  return c;
}

TEST(Checkpoint, RoundTripRestoresEveryTensor) {
  testing::TempDir dir("ckpt");
  AvModel a(tiny(), 1);
  nn::Adam adam({1e-3, 0.9, 0.999, 1e-8});
  auto params = a.parameters();
  for (auto* p : params) p->grad.setConstant(0.5f);
  adam.step(params, std::vector<bool>(params.size(), true));

  Checkpoint ck = capture(a, &adam);
  ck.config_json = "{\"model\":{}}";
  ck.epoch = 3;
  ck.step = 42;
  ck.rng_state = "123 456";
  ck.trained_components = {"audio_encoder", "decoder"};
  save_checkpoint(dir / "x.ckpt", ck);
  EXPECT_FALSE(std::filesystem::exists(dir / "x.ckpt.tmp"));

  const Checkpoint back = load_checkpoint(dir / "x.ckpt");
  EXPECT_EQ(back.config_json, ck.config_json);
  EXPECT_EQ(back.epoch, 3);
  EXPECT_EQ(back.step, 42);
  EXPECT_EQ(back.rng_state, "123 456");
  EXPECT_EQ(back.adam_steps, 1);
  EXPECT_EQ(back.trained_components, ck.trained_components);
  EXPECT_EQ(back.params, ck.params);
  EXPECT_EQ(back.adam_m, ck.adam_m);
  EXPECT_EQ(back.adam_v, ck.adam_v);

  AvModel b(tiny(), 99);
  EXPECT_TRUE(restore_parameters(b, back).empty());
  for (auto* p : b.parameters()) EXPECT_EQ(p->value, back.params.at(p->name)) << p->name;
  nn::Adam adam2({1e-3, 0.9, 0.999, 1e-8});
  restore_optimizer(adam2, back);
  EXPECT_EQ(adam2.steps(), 1);
  using Moments = std::map<std::string, Eigen::MatrixXf>;
  const auto m1 = adam.first_moments(), m2 = adam2.first_moments();
  EXPECT_EQ(Moments(m2.begin(), m2.end()), Moments(m1.begin(), m1.end()));
}

TEST(Checkpoint, RemovedComponentIsReportedMissing) {
  AvModel a(tiny(), 1);
  Checkpoint ck = capture(a, nullptr);
  remove_component(ck, Component::kHeadALoc);
  for (const auto& [name, m] : ck.params) EXPECT_EQ(name.find("head.a_loc"), std::string::npos);
  AvModel b(tiny(), 2);
  EXPECT_EQ(restore_parameters(b, ck), std::set<Component>{Component::kHeadALoc});
}

TEST(Checkpoint, ShapeMismatchIsConfigError) {
  AvModel a(tiny(), 1);
  const Checkpoint ck = capture(a, nullptr);
  ModelConfig other = tiny();
  other.embed_dim = 24;
  AvModel b(other, 1);
  EXPECT_THROW(restore_parameters(b, ck), ConfigError);
}

TEST(Checkpoint, CorruptFilesAreRejected) {
  testing::TempDir dir("ckpt_bad");
  std::ofstream(dir / "junk.ckpt") << "definitely not a checkpoint";
  EXPECT_THROW(load_checkpoint(dir / "junk.ckpt"), Error);
  EXPECT_THROW(load_checkpoint(dir / "missing.ckpt"), Error);

  AvModel a(tiny(), 1);
  save_checkpoint(dir / "ok.ckpt", capture(a, nullptr));
  const std::string bytes = testing::slurp(dir / "ok.ckpt");
  std::ofstream(dir / "short.ckpt", std::ios::binary) << bytes.substr(0, bytes.size() / 2);
  EXPECT_THROW(load_checkpoint(dir / "short.ckpt"), Error);
}

}  // namespace
}  // namespace avu

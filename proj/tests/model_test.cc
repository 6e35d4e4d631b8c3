// Copyright 2026 The avunify Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <cstdlib>
#include <fstream>
#include <random>

#include <gtest/gtest.h>

#include "avu/errors.h"
#include "avu/model.h"
#include "avu/pipeline.h"
#include "test_support.h"

#ifndef AVU_GOLDEN_DIR
#error "AVU_GOLDEN_DIR must point at tests/golden"
#endif

namespace avu {
namespace {

using nn::FeatureMap;

ModelConfig small_config() {
  ModelConfig c;
  c.embed_dim = 32;
  c.proj_dim = 16;
  c.compact_width = 4;
  c.image_size = 64;
  c.spectrogram_size = 64;
  c.decoder_depth = 4;
  return c;
}

FeatureMap random_map(int c, int n, int h, int w, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> g;
  FeatureMap m(c, n, h, w);
  for (auto& v : m.x.reshaped()) v = g(rng);
  return m;
}

void expect_unit_columns(const Eigen::MatrixXf& m, const char* what) {
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    ASSERT_NEAR(m.col(j).norm(), 1.0f, 1e-5f) << what << " column " << j;
}

TEST(Encoder, CompactShapes) {
  auto enc = make_encoder(Arch::kCompactCnn, "v", 3, 512, 16, nn::Padding::kReplicate);
  std::mt19937_64 rng(0);
  enc->init(rng);
  const FeatureMap y = enc->forward(random_map(3, 2, 224, 224, 1));
  EXPECT_EQ(y.channels(), 512);
  EXPECT_EQ(y.n, 2);
  EXPECT_EQ(y.h, 7);
  EXPECT_EQ(y.w, 7);
  EXPECT_EQ(enc->out_extent(224), 7);

  auto audio = make_encoder(Arch::kCompactCnn, "a", 2, 512, 16, nn::Padding::kZero);
  audio->init(rng);
  const FeatureMap a = audio->forward(random_map(2, 1, 128, 128, 2));
  EXPECT_EQ(a.h, 4);
  EXPECT_EQ(audio->skips()[0].h, 32);
  EXPECT_EQ(audio->skips()[1].h, 16);
  EXPECT_EQ(audio->skips()[2].h, 8);
}

TEST(Encoder, Resnet18Shapes) {
  auto enc = make_encoder(Arch::kResnet18Shape, "v", 3, 512, 16, nn::Padding::kReplicate);
  std::mt19937_64 rng(0);
  enc->init(rng);
  const FeatureMap y = enc->forward(random_map(3, 1, 224, 224, 1));
  EXPECT_EQ(y.channels(), 512);
  EXPECT_EQ(y.h, 7);
  EXPECT_EQ(y.w, 7);
  EXPECT_EQ(enc->skip_channels(), (std::array<int, 3>{64, 128, 256}));
}

TEST(Encoder, ConstantInputGivesConstantGrid) {
  auto enc = make_encoder(Arch::kCompactCnn, "v", 3, 16, 4, nn::Padding::kReplicate);
  std::mt19937_64 rng(0);
  enc->init(rng);
  FeatureMap x(3, 1, 64, 64);
  x.x.row(0).setConstant(0.3f);
  x.x.row(1).setConstant(-1.2f);
  x.x.row(2).setConstant(0.7f);
  const FeatureMap y = enc->forward(x);
  for (Eigen::Index c = 0; c < y.channels(); ++c)
    EXPECT_LT(y.x.row(c).maxCoeff() - y.x.row(c).minCoeff(), 1e-5f) << "channel " << c;
}

TEST(Encoder, BatchOrderPreserved) {
  auto enc = make_encoder(Arch::kCompactCnn, "v", 3, 16, 4, nn::Padding::kReplicate);
  std::mt19937_64 rng(0);
  enc->init(rng);
  const FeatureMap a = random_map(3, 1, 64, 64, 5), b = random_map(3, 1, 64, 64, 6);
  const FeatureMap ya = enc->forward(a), yb = enc->forward(b);
  const FeatureMap both = enc->forward(nn::concat_batch(b, a));
  EXPECT_EQ(both.slice(0, 1).x, yb.x);
  EXPECT_EQ(both.slice(1, 1).x, ya.x);
}

TEST(Encoder, ZeroFinalLayerGivesZeroOutput) {
  auto enc = make_encoder(Arch::kCompactCnn, "a", 2, 16, 4, nn::Padding::kZero);
  std::mt19937_64 rng(0);
  enc->init(rng);
  auto params = enc->parameters();
  // The last two tensors are the final layer's weight and bias.
  params[params.size() - 2]->value.setZero();
  params[params.size() - 1]->value.setZero();
  const FeatureMap y = enc->forward(random_map(2, 1, 64, 64, 3));
  EXPECT_EQ(y.x.cwiseAbs().maxCoeff(), 0.0f);
}

TEST(Model, EmbeddingsAreUnitNormAndSized) {
  AvModel m(small_config(), 1);
  const Embeddings e =
      m.embed(random_map(2, 3, 64, 64, 1), random_map(3, 3, 64, 64, 2));
  EXPECT_EQ(e.cells, 4);
  EXPECT_EQ(e.a_glb.rows(), 16);
  EXPECT_EQ(e.a_glb.cols(), 3);
  EXPECT_EQ(e.v_loc.cols(), 12);
  EXPECT_EQ(e.v_mva.cols(), 12);
  expect_unit_columns(e.a_glb, "a_glb");
  expect_unit_columns(e.a_loc, "a_loc");
  expect_unit_columns(e.a_mva, "a_mva");
  expect_unit_columns(e.v_glb, "v_glb");
  expect_unit_columns(e.v_loc, "v_loc");
  expect_unit_columns(e.v_mva, "v_mva");
}

TEST(Model, LocalSetHas49CellsAt224) {
  ModelConfig c = small_config();
  c.image_size = 224;
  AvModel m(c, 1);
  const Embeddings e =
      m.embed(random_map(2, 1, 64, 64, 1), random_map(3, 1, 224, 224, 2));
  EXPECT_EQ(e.cells, 49);
}

TEST(Model, IdentityHeadPreservesUnitVector) {
  ModelConfig c = small_config();
  c.proj_dim = c.embed_dim;
  AvModel m(c, 1);
  nn::Linear& h = m.head(Component::kHeadAGlb);
  h.weight().value.setIdentity();
  h.bias().value.setZero();
  Eigen::MatrixXf u = Eigen::MatrixXf::Zero(c.embed_dim, 1);
  u(3) = 0.6f;
  u(7) = 0.8f;
  EXPECT_TRUE(nn::l2_normalize(h.forward(u)).isApprox(u));
}

TEST(Model, ForwardIsBitDeterministic) {
  AvModel m1(small_config(), 9), m2(small_config(), 9);
  const FeatureMap a = random_map(2, 2, 64, 64, 1), v = random_map(3, 2, 64, 64, 2);
  const Embeddings e1 = m1.embed(a, v), e2 = m1.embed(a, v), e3 = m2.embed(a, v);
  EXPECT_EQ(e1.a_glb, e2.a_glb);
  EXPECT_EQ(e1.v_loc, e2.v_loc);
  EXPECT_EQ(e1.a_glb, e3.a_glb);
  EXPECT_EQ(e1.v_mva, e3.v_mva);
  EXPECT_EQ(m1.separate(a, v).x, m2.separate(a, v).x);
}

TEST(Model, MaskIsStrictlyInsideUnitInterval) {
  for (int depth : {4, 8, 12, 16}) {
    ModelConfig c = small_config();
    c.decoder_depth = depth;
    AvModel m(c, 1);
    const FeatureMap mask = m.separate(random_map(2, 2, 64, 64, 1), random_map(3, 2, 64, 64, 2));
    EXPECT_EQ(mask.channels(), 1);
    EXPECT_GT(mask.x.minCoeff(), 0.0f);
    EXPECT_LT(mask.x.maxCoeff(), 1.0f);
  }
}

TEST(Decoder, DepthIntrospection) {
  for (int depth : {4, 8, 12, 16}) {
    SeparationDecoder d(depth, 512, 512, {16, 32, 64});
    EXPECT_EQ(d.depth(), depth);
    EXPECT_EQ(d.num_up_blocks(), std::min(depth, 5));
    EXPECT_EQ(d.num_up_blocks() + d.num_refine_blocks(), depth);
  }
  SeparationDecoder d8(8, 512, 512, {16, 32, 64});
  EXPECT_EQ(d8.out_extent(4), 128);
}

TEST(Config, ValidatesDepthAndDims) {
  ModelConfig c;
  EXPECT_NO_THROW(c.validate());
  c.decoder_depth = 6;
  EXPECT_THROW(c.validate(), ConfigError);
  c = ModelConfig{};
  c.proj_dim = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_THROW(AvModel{c}, ConfigError);
  EXPECT_THROW(arch_from_string("vgg"), ConfigError);
  EXPECT_EQ(arch_from_string(to_string(Arch::kResnet18Shape)), Arch::kResnet18Shape);
}

TEST(Model, ParameterNamesMapToComponents) {
  AvModel m(small_config(), 1);
  int counts[kNumComponents] = {};
  for (nn::Parameter* p : m.parameters()) ++counts[static_cast<int>(m.component_of(p->name))];
  for (int c = 0; c < kNumComponents; ++c) {
    EXPECT_GT(counts[c], 0) << to_string(static_cast<Component>(c));
    EXPECT_EQ(static_cast<std::size_t>(counts[c]),
              m.parameters(static_cast<Component>(c)).size());
  }
}

// Layer shapes and parameter counts are fixed by the configuration.
void check_golden(const ModelConfig& cfg, const std::string& file) {
  AvModel m(cfg, 0);
  const std::string text =
      m.describe() + "total " + std::to_string(m.num_parameters()) + "\n";
  const std::filesystem::path path = std::filesystem::path(AVU_GOLDEN_DIR) / file;
  if (std::getenv("AVU_UPDATE_GOLDEN")) std::ofstream(path) << text;
  ASSERT_TRUE(std::filesystem::exists(path)) << path;
  EXPECT_EQ(text, testing::slurp(path));
  AvModel again(cfg, 123);
  EXPECT_EQ(again.describe(), m.describe());
}

TEST(Golden, DeskModel) { check_golden(RunConfig::desk().model, "model_desk.txt"); }

TEST(Golden, Resnet18Model) {
  ModelConfig c;
  c.visual_arch = Arch::kResnet18Shape;
  c.audio_arch = Arch::kResnet18Shape;
  check_golden(c, "model_resnet18.txt");
}

// Every trainable tensor receives gradient from the full objective.
TEST(Model, EveryTensorReceivesGradient) {
  RunConfig cfg;
  cfg.model = small_config();
  cfg.train.batch_size = 3;
  cfg.data.image_size = 64;
  AvModel model(cfg.model, 2);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g(0.0, 0.2);
  std::vector<LoadedSample> samples(3);
  for (int k = 0; k < 3; ++k) {
    samples[k].image.height = samples[k].image.width = 64;
    samples[k].image.pixels =
        Eigen::MatrixXf::NullaryExpr(3, 64 * 64, [&] { return static_cast<float>(g(rng)); });
    samples[k].audio.sample_rate = 8000;
    samples[k].audio.samples = Eigen::VectorXd::NullaryExpr(24000, [&] { return g(rng); });
  }
  std::vector<const LoadedSample*> ptrs{&samples[0], &samples[1], &samples[2]};
  const TrainingBatch batch = make_training_batch(ptrs, 0.5, {1, 2, 0}, cfg.data.dsp);
  Trainer trainer(model, cfg.train, cfg.data);
  const LossBundle loss = trainer.compute_gradients(batch);
  EXPECT_GT(loss.cl, 0.0);
  EXPECT_GT(loss.mas, 0.0);
  EXPECT_GT(loss.mva, 0.0);
  for (nn::Parameter* p : model.parameters())
    EXPECT_GT(p->grad.cwiseAbs().maxCoeff(), 0.0f) << p->name;
}

}  // namespace
}  // namespace avu

// Copyright 2026 The avunify Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef AVU_MODEL_H_
#define AVU_MODEL_H_

#include <array>
#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "avu/dsp.h"
#include "avu/nn.h"

namespace avu {

enum class Arch { kCompactCnn, kResnet18Shape };

std::string to_string(Arch arch);
Arch arch_from_string(const std::string& name);

struct ModelConfig {
  Arch visual_arch = Arch::kCompactCnn;
  Arch audio_arch = Arch::kCompactCnn;
  int embed_dim = 512;
  int proj_dim = 512;
  int decoder_depth = 8;
  double temperature = 0.07;
  // Initialize the visual encoder from the checkpoint at
  // pretrained_visual_path.
  bool pretrained_visual = false;
  std::string pretrained_visual_path;
  // Width of the first compact_cnn block; later blocks double it.
  int compact_width = 16;
  int image_size = 224;
  int spectrogram_size = 128;

  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

// Named parameter groups. Each objective trains a fixed subset.
enum class Component {
  kAudioEncoder,
  kVisualEncoder,
  kHeadAGlb,
  kHeadALoc,
  kHeadVGlb,
  kHeadVLoc,
  kHeadAMva,
  kHeadVMva,
  kDecoder,
};
inline constexpr int kNumComponents = 9;
std::string to_string(Component c);

// Convolutional trunk over a batched FeatureMap. Audio trunks also expose
// the activations at 1/4, 1/8 and 1/16 of the input extent for the
// decoder's skip connections.
class Encoder {
 public:
  virtual ~Encoder() = default;
  virtual void init(std::mt19937_64& rng) = 0;
  virtual nn::FeatureMap forward(const nn::FeatureMap& x) = 0;
  // d_skips may hold empty maps for unused skips.
  virtual void backward(const nn::FeatureMap& d_out,
                        const std::array<nn::FeatureMap, 3>& d_skips) = 0;
  virtual std::vector<nn::Parameter*> parameters() = 0;
  // Finest to coarsest.
  virtual const std::array<nn::FeatureMap, 3>& skips() const = 0;
  virtual std::array<int, 3> skip_channels() const = 0;
  virtual int out_channels() const = 0;
  virtual int out_extent(int in) const = 0;
};

std::unique_ptr<Encoder> make_encoder(Arch arch, const std::string& name,
                                      int in_channels, int embed_dim,
                                      int compact_width, nn::Padding padding);

// U-Net style mask decoder: `refine` stride-1 transposed convolutions at
// the bottleneck followed by up to five 2x upsampling blocks, the first
// three of which concatenate an encoder skip. A 1x1 head and a sigmoid
// produce the mask.
class SeparationDecoder {
 public:
  SeparationDecoder(int depth, int bottleneck_channels, int cond_channels,
                    std::array<int, 3> skip_channels);

  void init(std::mt19937_64& rng);
  // Returns the clamped sigmoid mask, one channel.
  nn::FeatureMap forward(const nn::FeatureMap& bottleneck,
                         const std::array<nn::FeatureMap, 3>& skips,
                         const Eigen::MatrixXf& cond);
  // Takes dL/dmask (pre-clamp pass-through) and returns the gradients of
  // the bottleneck, the skips and the conditioning vectors.
  nn::FeatureMap backward(const nn::FeatureMap& d_mask,
                          std::array<nn::FeatureMap, 3>& d_skips,
                          Eigen::MatrixXf& d_cond);
  std::vector<nn::Parameter*> parameters();

  int depth() const { return static_cast<int>(blocks_.size()); }
  int num_up_blocks() const { return up_blocks_; }
  int num_refine_blocks() const { return depth() - up_blocks_; }
  int out_extent(int bottleneck_extent) const {
    return bottleneck_extent << up_blocks_;
  }

 private:
  int up_blocks_;
  int cond_channels_;
  std::vector<nn::ConvTranspose2d> blocks_;
  std::vector<nn::Relu> relus_;
  std::vector<int> skip_at_;  // skip index consumed after block k, or -1
  std::vector<int> block_out_;
  nn::Conv2d head_;
  nn::FeatureMap mask_;
  int bottleneck_channels_;
};

// Batch of unit-norm projections. Local sets hold `cells` columns per sample.
struct Embeddings {
  int cells = 0;
  Eigen::MatrixXf a_glb, a_loc, a_mva;
  Eigen::MatrixXf v_glb, v_loc, v_mva;
};

class AvModel {
 public:
  explicit AvModel(const ModelConfig& cfg, std::uint64_t seed = 0);

  const ModelConfig& config() const { return cfg_; }

  // Log-magnitude grids (bins x frames) to the 2-channel encoder input:
  // the log-spectrogram resized to spectrogram_size^2 (frequency along
  // rows) and a normalized frequency coordinate.
  nn::FeatureMap audio_input(const std::vector<const Eigen::ArrayXXd*>& logmags) const;
  // 3 x (n * size * size) normalized pixels as a FeatureMap.
  nn::FeatureMap visual_input(const Eigen::MatrixXf& pixels, int n) const;

  Encoder& audio_encoder() { return *audio_; }
  Encoder& visual_encoder() { return *visual_; }
  nn::Linear& head(Component c);
  SeparationDecoder& decoder() { return decoder_; }

  // Forward-only convenience for evaluation.
  Embeddings embed(const nn::FeatureMap& audio, const nn::FeatureMap& visual);
  // Mask at decoder resolution for mixtures conditioned on images.
  nn::FeatureMap separate(const nn::FeatureMap& mixture_audio,
                          const nn::FeatureMap& visual);

  std::vector<nn::Parameter*> parameters();
  std::vector<nn::Parameter*> parameters(Component c);
  Component component_of(const std::string& parameter_name) const;
  std::int64_t num_parameters();
  // One line per parameter tensor: name and shape.
  std::string describe();

 private:
  ModelConfig cfg_;
  std::unique_ptr<Encoder> audio_, visual_;
  std::array<nn::Linear, 6> heads_;
  SeparationDecoder decoder_;
};

inline constexpr std::array<Component, 6> kHeadComponents = {
    Component::kHeadAGlb, Component::kHeadALoc, Component::kHeadVGlb,
    Component::kHeadVLoc, Component::kHeadAMva, Component::kHeadVMva};

}  // namespace avu

#endif  // AVU_MODEL_H_

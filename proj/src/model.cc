// Copyright 2026 The avunify Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "avu/model.h"

#include <algorithm>
#include <sstream>

#include "avu/errors.h"
#include "avu/resize.h"

namespace avu {

using nn::FeatureMap;

std::string to_string(Arch arch) {
  return arch == Arch::kCompactCnn ? "compact_cnn" : "resnet18_shape";
}

Arch arch_from_string(const std::string& name) {
  if (name == "compact_cnn") return Arch::kCompactCnn;
  if (name == "resnet18_shape") return Arch::kResnet18Shape;
  throw ConfigError("unknown architecture '" + name + "'");
}

std::string to_string(Component c) {
  switch (c) {
    case Component::kAudioEncoder: return "audio_encoder";
    case Component::kVisualEncoder: return "visual_encoder";
    case Component::kHeadAGlb: return "head.a_glb";
    case Component::kHeadALoc: return "head.a_loc";
    case Component::kHeadVGlb: return "head.v_glb";
    case Component::kHeadVLoc: return "head.v_loc";
    case Component::kHeadAMva: return "head.a_mva";
    case Component::kHeadVMva: return "head.v_mva";
    case Component::kDecoder: return "decoder";
  }
  return "?";
}

void ModelConfig::validate() const {
  if (embed_dim <= 0) throw ConfigError("embed_dim must be positive");
  if (proj_dim <= 0) throw ConfigError("proj_dim must be positive");
  if (decoder_depth != 4 && decoder_depth != 8 && decoder_depth != 12 &&
      decoder_depth != 16)
    throw ConfigError("decoder_depth " + std::to_string(decoder_depth) +
                      " not in {4, 8, 12, 16}");
  if (!(temperature > 0.0)) throw ConfigError("temperature must be positive");
  if (compact_width < 2) throw ConfigError("compact_width must be >= 2");
  if (image_size < 32 || image_size % 32 != 0)
    throw ConfigError("image_size must be a positive multiple of 32");
  if (spectrogram_size < 32 || spectrogram_size % 32 != 0)
    throw ConfigError("spectrogram_size must be a positive multiple of 32");
  if (pretrained_visual && pretrained_visual_path.empty())
    throw ConfigError("pretrained_visual needs pretrained_visual_path");
}

namespace {

void append(std::vector<nn::Parameter*>& out, std::vector<nn::Parameter*> more) {
  out.insert(out.end(), more.begin(), more.end());
}

void add_skip_grad(FeatureMap& g, const FeatureMap& d_skip) {
  if (d_skip.x.size() != 0) g.x += d_skip.x;
}

class CompactEncoder : public Encoder {
 public:
  CompactEncoder(const std::string& name, int in, int embed, int width,
                 nn::Padding padding)
      : convs_{nn::Conv2d(name + ".conv0", in, width, 4, 4, 0, padding),
               nn::Conv2d(name + ".conv1", width, 2 * width, 3, 2, 1, padding),
               nn::Conv2d(name + ".conv2", 2 * width, 4 * width, 3, 2, 1, padding),
               nn::Conv2d(name + ".conv3", 4 * width, embed, 3, 2, 1, padding)} {}

  void init(std::mt19937_64& rng) override {
    for (auto& c : convs_) c.init(rng);
  }

  FeatureMap forward(const FeatureMap& x) override {
    FeatureMap h = x;
    for (int k = 0; k < 4; ++k) {
      h = convs_[k].forward(h);
      relus_[k].forward_inplace(h.x);
      if (k < 3) skips_[k] = h;
    }
    return h;
  }

  void backward(const FeatureMap& d_out,
                const std::array<FeatureMap, 3>& d_skips) override {
    FeatureMap g = d_out;
    for (int k = 3; k >= 0; --k) {
      if (k < 3) add_skip_grad(g, d_skips[k]);
      relus_[k].backward_inplace(g.x);
      g = convs_[k].backward(g, k > 0);
    }
  }

  std::vector<nn::Parameter*> parameters() override {
    std::vector<nn::Parameter*> out;
    for (auto& c : convs_) append(out, c.parameters());
    return out;
  }

  const std::array<FeatureMap, 3>& skips() const override { return skips_; }
  std::array<int, 3> skip_channels() const override {
    return {convs_[0].out_channels(), convs_[1].out_channels(),
            convs_[2].out_channels()};
  }
  int out_channels() const override { return convs_[3].out_channels(); }
  int out_extent(int in) const override {
    for (const auto& c : convs_) in = c.out_extent(in);
    return in;
  }

 private:
  std::array<nn::Conv2d, 4> convs_;
  std::array<nn::Relu, 4> relus_;
  std::array<FeatureMap, 3> skips_;
};

// Residual basic block without normalization layers.
class BasicBlock {
 public:
  BasicBlock(const std::string& name, int in, int out, int stride,
             nn::Padding padding)
      : conv1_(name + ".conv1", in, out, 3, stride, 1, padding),
        conv2_(name + ".conv2", out, out, 3, 1, 1, padding) {
    if (stride != 1 || in != out)
      down_.emplace_back(name + ".down", in, out, 1, stride, 0);
  }

  void init(std::mt19937_64& rng) {
    conv1_.init(rng);
    conv2_.init(rng);
    conv2_.weight().value *= 0.25f;
    for (auto& d : down_) d.init(rng);
  }

  FeatureMap forward(const FeatureMap& x) {
    FeatureMap h = conv1_.forward(x);
    relu1_.forward_inplace(h.x);
    h = conv2_.forward(h);
    h.x += down_.empty() ? x.x : down_[0].forward(x).x;
    relu_out_.forward_inplace(h.x);
    return h;
  }

  FeatureMap backward(const FeatureMap& dy) {
    FeatureMap g = dy;
    relu_out_.backward_inplace(g.x);
    FeatureMap dh = conv2_.backward(g);
    relu1_.backward_inplace(dh.x);
    FeatureMap dx = conv1_.backward(dh);
    dx.x += down_.empty() ? g.x : down_[0].backward(g).x;
    return dx;
  }

  std::vector<nn::Parameter*> parameters() {
    std::vector<nn::Parameter*> out;
    append(out, conv1_.parameters());
    append(out, conv2_.parameters());
    for (auto& d : down_) append(out, d.parameters());
    return out;
  }

  int out_extent(int in) const {
    return conv2_.out_extent(conv1_.out_extent(in));
  }

 private:
  nn::Conv2d conv1_, conv2_;
  std::vector<nn::Conv2d> down_;
  nn::Relu relu1_, relu_out_;
};

// 18-layer residual shape: 7x7/2 stem, 3x3/2 max pool, four stages of two
// blocks at widths 64, 128, 256, embed.
class Resnet18Encoder : public Encoder {
 public:
  Resnet18Encoder(const std::string& name, int in, int embed,
                  nn::Padding padding)
      : stem_(name + ".stem", in, 64, 7, 2, 3, padding) {
    const std::array<int, 4> widths{64, 128, 256, embed};
    int prev = 64;
    for (int s = 0; s < 4; ++s)
      for (int b = 0; b < 2; ++b) {
        const std::string block =
            name + ".layer" + std::to_string(s + 1) + "." + std::to_string(b);
        blocks_.emplace_back(block, prev, widths[s], (b == 0 && s > 0) ? 2 : 1,
                             padding);
        prev = widths[s];
      }
    skip_channels_ = {widths[0], widths[1], widths[2]};
    out_channels_ = embed;
  }

  void init(std::mt19937_64& rng) override {
    stem_.init(rng);
    for (auto& b : blocks_) b.init(rng);
  }

  FeatureMap forward(const FeatureMap& x) override {
    FeatureMap h = stem_.forward(x);
    stem_relu_.forward_inplace(h.x);
    h = pool_.forward(h);
    for (std::size_t k = 0; k < blocks_.size(); ++k) {
      h = blocks_[k].forward(h);
      if (k % 2 == 1 && k < 6) skips_[k / 2] = h;
    }
    return h;
  }

  void backward(const FeatureMap& d_out,
                const std::array<FeatureMap, 3>& d_skips) override {
    FeatureMap g = d_out;
    for (int k = static_cast<int>(blocks_.size()) - 1; k >= 0; --k) {
      if (k % 2 == 1 && k < 6) add_skip_grad(g, d_skips[k / 2]);
      g = blocks_[k].backward(g);
    }
    g = pool_.backward(g);
    stem_relu_.backward_inplace(g.x);
    stem_.backward(g, false);
  }

  std::vector<nn::Parameter*> parameters() override {
    std::vector<nn::Parameter*> out = stem_.parameters();
    for (auto& b : blocks_) append(out, b.parameters());
    return out;
  }

  const std::array<FeatureMap, 3>& skips() const override { return skips_; }
  std::array<int, 3> skip_channels() const override { return skip_channels_; }
  int out_channels() const override { return out_channels_; }
  int out_extent(int in) const override {
    in = stem_.out_extent(in);
    in = (in + 2 - 3) / 2 + 1;
    for (const auto& b : blocks_) in = b.out_extent(in);
    return in;
  }

 private:
  nn::Conv2d stem_;
  nn::Relu stem_relu_;
  nn::MaxPool2d pool_;
  std::vector<BasicBlock> blocks_;
  std::array<FeatureMap, 3> skips_;
  std::array<int, 3> skip_channels_{};
  int out_channels_ = 0;
};

FeatureMap tile(const Eigen::MatrixXf& v, int n, int h, int w) {
  FeatureMap out(static_cast<int>(v.rows()), n, h, w);
  const Eigen::Index hw = static_cast<Eigen::Index>(h) * w;
  for (int b = 0; b < n; ++b)
    out.x.middleCols(b * hw, hw).colwise() = v.col(b);
  return out;
}

}  // namespace

std::unique_ptr<Encoder> make_encoder(Arch arch, const std::string& name,
                                      int in_channels, int embed_dim,
                                      int compact_width, nn::Padding padding) {
  if (arch == Arch::kCompactCnn)
    return std::make_unique<CompactEncoder>(name, in_channels, embed_dim,
                                            compact_width, padding);
  return std::make_unique<Resnet18Encoder>(name, in_channels, embed_dim,
                                           padding);
}

SeparationDecoder::SeparationDecoder(int depth, int bottleneck_channels,
                                     int cond_channels,
                                     std::array<int, 3> skip_channels)
    : up_blocks_(std::min(depth, 5)),
      cond_channels_(cond_channels),
      head_("decoder.head", 1, 1, 1, 1, 0),
      bottleneck_channels_(bottleneck_channels) {
  if (depth < 1) throw ConfigError("decoder depth must be positive");
  const int c1 = skip_channels[0];
  const std::array<int, 5> up_width{skip_channels[2], skip_channels[1], c1,
                                    std::max(1, c1 / 2), std::max(1, c1 / 2)};
  int channels = bottleneck_channels + cond_channels;
  const int refine = depth - up_blocks_;
  for (int k = 0; k < depth; ++k) {
    const std::string name = "decoder.block" + std::to_string(k);
    if (k < refine) {
      blocks_.emplace_back(name, channels, bottleneck_channels, 3, 1, 1);
      channels = bottleneck_channels;
      skip_at_.push_back(-1);
    } else {
      const int u = k - refine;
      blocks_.emplace_back(name, channels, up_width[u], 2, 2, 0);
      channels = up_width[u];
      // Skips are stored finest first; the first up block meets the coarsest.
      if (u < 3) {
        skip_at_.push_back(2 - u);
        channels += skip_channels[2 - u];
      } else {
        skip_at_.push_back(-1);
      }
    }
    block_out_.push_back(blocks_.back().out_channels());
  }
  relus_.resize(blocks_.size());
  head_ = nn::Conv2d("decoder.head", channels, 1, 1, 1, 0);
}

void SeparationDecoder::init(std::mt19937_64& rng) {
  for (auto& b : blocks_) b.init(rng);
  head_.init(rng);
}

FeatureMap SeparationDecoder::forward(const FeatureMap& bottleneck,
                                      const std::array<FeatureMap, 3>& skips,
                                      const Eigen::MatrixXf& cond) {
  if (cond.rows() != cond_channels_ || cond.cols() != bottleneck.n)
    throw InputError("decoder conditioning does not match the batch");
  FeatureMap x = nn::concat_channels(
      bottleneck, tile(cond, bottleneck.n, bottleneck.h, bottleneck.w));
  for (std::size_t k = 0; k < blocks_.size(); ++k) {
    x = blocks_[k].forward(x);
    relus_[k].forward_inplace(x.x);
    if (skip_at_[k] >= 0) x = nn::concat_channels(x, skips[skip_at_[k]]);
  }
  mask_ = head_.forward(x);
  mask_.x = (1.0f / (1.0f + (-mask_.x.array()).exp())).matrix();
  FeatureMap out = mask_;
  out.x = out.x.cwiseMax(1e-6f).cwiseMin(1.0f - 1e-6f);
  return out;
}

FeatureMap SeparationDecoder::backward(const FeatureMap& d_mask,
                                       std::array<FeatureMap, 3>& d_skips,
                                       Eigen::MatrixXf& d_cond) {
  FeatureMap g = d_mask;
  g.x = (g.x.array() * mask_.x.array() * (1.0f - mask_.x.array())).matrix();
  g = head_.backward(g);
  for (int k = static_cast<int>(blocks_.size()) - 1; k >= 0; --k) {
    if (skip_at_[k] >= 0) {
      const int s = skip_at_[k];
      FeatureMap ds = g;
      ds.x = g.x.bottomRows(g.channels() - block_out_[k]);
      d_skips[s] = std::move(ds);
      g.x = g.x.topRows(block_out_[k]).eval();
    }
    relus_[k].backward_inplace(g.x);
    g = blocks_[k].backward(g);
  }
  const Eigen::Index hw = g.pixels();
  d_cond.resize(cond_channels_, g.n);
  for (int b = 0; b < g.n; ++b)
    d_cond.col(b) =
        g.x.bottomRows(cond_channels_).middleCols(b * hw, hw).rowwise().sum();
  g.x = g.x.topRows(bottleneck_channels_).eval();
  return g;
}

std::vector<nn::Parameter*> SeparationDecoder::parameters() {
  std::vector<nn::Parameter*> out;
  for (auto& b : blocks_) append(out, b.parameters());
  append(out, head_.parameters());
  return out;
}

AvModel::AvModel(const ModelConfig& cfg, std::uint64_t seed)
    : cfg_((cfg.validate(), cfg)),
      audio_(make_encoder(cfg.audio_arch, "audio_encoder", 2, cfg.embed_dim,
                          cfg.compact_width, nn::Padding::kZero)),
      visual_(make_encoder(cfg.visual_arch, "visual_encoder", 3, cfg.embed_dim,
                           cfg.compact_width, nn::Padding::kReplicate)),
      heads_{nn::Linear("head.a_glb", cfg.embed_dim, cfg.proj_dim),
             nn::Linear("head.a_loc", cfg.embed_dim, cfg.proj_dim),
             nn::Linear("head.v_glb", cfg.embed_dim, cfg.proj_dim),
             nn::Linear("head.v_loc", cfg.embed_dim, cfg.proj_dim),
             nn::Linear("head.a_mva", cfg.embed_dim, cfg.proj_dim),
             nn::Linear("head.v_mva", cfg.embed_dim, cfg.proj_dim)},
      decoder_(cfg.decoder_depth, cfg.embed_dim, cfg.embed_dim,
               audio_->skip_channels()) {
  std::mt19937_64 rng(seed);
  audio_->init(rng);
  visual_->init(rng);
  for (auto& h : heads_) h.init(rng);
  decoder_.init(rng);
}

nn::Linear& AvModel::head(Component c) {
  const int k = static_cast<int>(c) - static_cast<int>(Component::kHeadAGlb);
  if (k < 0 || k >= 6) throw InputError(to_string(c) + " is not a head");
  return heads_[k];
}

FeatureMap AvModel::audio_input(
    const std::vector<const Eigen::ArrayXXd*>& logmags) const {
  constexpr double kLogCenter = -2.0, kLogScale = 4.0;
  const int s = cfg_.spectrogram_size;
  const Eigen::Index hw = static_cast<Eigen::Index>(s) * s;
  FeatureMap out(2, static_cast<int>(logmags.size()), s, s);
  for (std::size_t b = 0; b < logmags.size(); ++b) {
    const Eigen::MatrixXd grid = resize_bilinear(logmags[b]->matrix(), s, s);
    for (int y = 0; y < s; ++y) {
      const float coord = static_cast<float>(-1.0 + 2.0 * (y + 0.5) / s);
      for (int x = 0; x < s; ++x) {
        const Eigen::Index col = static_cast<Eigen::Index>(b) * hw + y * s + x;
        out.x(0, col) = static_cast<float>((grid(y, x) - kLogCenter) / kLogScale);
        out.x(1, col) = coord;
      }
    }
  }
  return out;
}

FeatureMap AvModel::visual_input(const Eigen::MatrixXf& pixels, int n) const {
  const int s = cfg_.image_size;
  if (pixels.rows() != 3 ||
      pixels.cols() != static_cast<Eigen::Index>(n) * s * s)
    throw InputError("expected " + std::to_string(n) + " images of " +
                     std::to_string(s) + "x" + std::to_string(s) + "x3");
  FeatureMap out;
  out.n = n;
  out.h = s;
  out.w = s;
  out.x = pixels;
  return out;
}

Embeddings AvModel::embed(const FeatureMap& audio, const FeatureMap& visual) {
  if (audio.h != cfg_.spectrogram_size || audio.w != cfg_.spectrogram_size ||
      audio.channels() != 2)
    throw InputError("audio input must be 2 x " +
                     std::to_string(cfg_.spectrogram_size) + "^2");
  if (visual.h != cfg_.image_size || visual.w != cfg_.image_size ||
      visual.channels() != 3)
    throw InputError("visual input must be 3 x " +
                     std::to_string(cfg_.image_size) + "^2");
  Embeddings e;
  const Eigen::MatrixXf a = nn::global_max_pool(audio_->forward(audio)).values;
  const FeatureMap grid = visual_->forward(visual);
  const Eigen::MatrixXf v = nn::global_max_pool(grid).values;
  e.cells = static_cast<int>(grid.pixels());
  e.a_glb = nn::l2_normalize(head(Component::kHeadAGlb).forward(a));
  e.a_loc = nn::l2_normalize(head(Component::kHeadALoc).forward(a));
  e.a_mva = nn::l2_normalize(head(Component::kHeadAMva).forward(a));
  e.v_glb = nn::l2_normalize(head(Component::kHeadVGlb).forward(v));
  e.v_loc = nn::l2_normalize(head(Component::kHeadVLoc).forward(grid.x));
  e.v_mva = nn::l2_normalize(head(Component::kHeadVMva).forward(grid.x));
  return e;
}

FeatureMap AvModel::separate(const FeatureMap& mixture_audio,
                             const FeatureMap& visual) {
  const FeatureMap bottleneck = audio_->forward(mixture_audio);
  const Eigen::MatrixXf cond =
      nn::global_max_pool(visual_->forward(visual)).values;
  return decoder_.forward(bottleneck, audio_->skips(), cond);
}

std::vector<nn::Parameter*> AvModel::parameters() {
  std::vector<nn::Parameter*> out;
  for (int c = 0; c < kNumComponents; ++c)
    append(out, parameters(static_cast<Component>(c)));
  return out;
}

std::vector<nn::Parameter*> AvModel::parameters(Component c) {
  switch (c) {
    case Component::kAudioEncoder: return audio_->parameters();
    case Component::kVisualEncoder: return visual_->parameters();
    case Component::kDecoder: return decoder_.parameters();
    default: return head(c).parameters();
  }
}

Component AvModel::component_of(const std::string& parameter_name) const {
  for (int c = kNumComponents - 1; c >= 0; --c) {
    const std::string prefix = to_string(static_cast<Component>(c)) + ".";
    if (parameter_name.rfind(prefix, 0) == 0) return static_cast<Component>(c);
  }
  throw InputError("parameter '" + parameter_name + "' has no component");
}

std::int64_t AvModel::num_parameters() {
  std::int64_t n = 0;
  for (const auto* p : parameters()) n += p->value.size();
  return n;
}

std::string AvModel::describe() {
  std::ostringstream os;
  os << "visual_arch " << to_string(cfg_.visual_arch) << "\n"
     << "audio_arch " << to_string(cfg_.audio_arch) << "\n"
     << "visual_grid " << visual_->out_extent(cfg_.image_size) << "x"
     << visual_->out_extent(cfg_.image_size) << "x" << visual_->out_channels()
     << "\n"
     << "audio_bottleneck " << audio_->out_extent(cfg_.spectrogram_size) << "x"
     << audio_->out_extent(cfg_.spectrogram_size) << "x"
     << audio_->out_channels() << "\n"
     << "decoder_blocks " << decoder_.depth() << " (refine "
     << decoder_.num_refine_blocks() << ", up " << decoder_.num_up_blocks()
     << ")\n"
     << "mask " << decoder_.out_extent(audio_->out_extent(cfg_.spectrogram_size))
     << "\n";
  for (const auto* p : parameters())
    os << p->name << " " << p->value.rows() << "x" << p->value.cols() << "\n";
  os << "total " << num_parameters() << "\n";
  return os.str();
}

}  // namespace avu

// Copyright 2026 The avunify Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef AVU_DATA_H_
#define AVU_DATA_H_

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "avu/dsp.h"

namespace avu {

struct BoundingBox {
  int x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // pixels, x1/y1 exclusive

  bool operator==(const BoundingBox&) const = default;
};

struct SampleRecord {
  std::string id;
  std::filesystem::path audio_path;
  std::filesystem::path image_path;
  std::optional<int> label;
  std::optional<BoundingBox> bbox;
  std::optional<std::filesystem::path> gt_mask_path;

  bool operator==(const SampleRecord&) const = default;
};

// Dataset index. On disk: JSON lines, a header object followed by one
// object per record. Relative paths resolve against the manifest directory.
struct Manifest {
  bool labeled = false;
  std::vector<SampleRecord> records;

  std::size_t size() const { return records.size(); }
};

Manifest read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const Manifest& m);

// Git blob hash ("blob <len>\0" + bytes, SHA-1, hex) of a file.
std::string content_hash(const std::filesystem::path& path);

struct DataConfig {
  int image_size = 224;
  std::array<float, 3> mean{0.485f, 0.456f, 0.406f};
  std::array<float, 3> stddev{0.229f, 0.224f, 0.225f};
  DspConfig dsp;
};

// Channel-normalized image, 3 x (height * width), pixel (x, y) in column
// y * width + x.
struct ImageTensor {
  int height = 0;
  int width = 0;
  Eigen::MatrixXf pixels;
};

enum class CropMode { kRandom, kCenter };

struct LoadedSample {
  std::string id;
  ImageTensor image;
  Waveform audio;
  std::optional<int> label;
};

// Loads, resizes and normalizes the image and brings the audio to the
// configured rate and clip length (random or center crop, zero-pad if
// short). File problems surface as DataError carrying the record id.
LoadedSample load_sample(const SampleRecord& rec, const DataConfig& cfg,
                         CropMode crop, std::mt19937_64* rng = nullptr);

// Binary localization target at image_size x image_size: the mask file when
// present, else the box. Returns nullopt when the record has neither.
std::optional<Eigen::ArrayXXd> load_ground_truth_mask(const SampleRecord& rec,
                                                      int image_size);

// Uniform random permutation of 0..n-1 without fixed points.
std::vector<Eigen::Index> random_derangement(Eigen::Index n,
                                             std::mt19937_64& rng);

struct TrainingBatch {
  std::vector<Eigen::Index> partner;  // j = partner[i], never i
  double alpha = 0.5;
  int image_height = 0;
  int image_width = 0;
  // 3 x (B * H * W) blocks, sample b occupying columns [b*H*W, (b+1)*H*W).
  Eigen::MatrixXf base_images;
  Eigen::MatrixXf partner_images;
  Eigen::MatrixXf mixed_images;
  // One waveform per column.
  Eigen::MatrixXd base_audio;
  Eigen::MatrixXd partner_audio;
  Eigen::MatrixXd mixture_audio;
  std::vector<ComplexSpectrogram> base_spectra;
  std::vector<ComplexSpectrogram> mixture_spectra;
  std::vector<BinaryMask> target_masks;

  Eigen::Index size() const { return static_cast<Eigen::Index>(partner.size()); }
};

// Pairs every sample with a partner drawn as a random derangement, mixes the
// images as alpha * v_i + (1 - alpha) * v_j and the audio as a_i + a_j, and
// derives the separation targets with cfg.mask_rule. `spectra`, when given,
// holds the precomputed STFT of each sample's audio and the mixture STFT is
// formed by linearity.
TrainingBatch make_training_batch(
    std::span<const LoadedSample* const> samples, double alpha,
    std::mt19937_64& rng, const DspConfig& cfg,
    std::span<const ComplexSpectrogram* const> spectra = {});

// Same, with the partner assignment given explicitly.
TrainingBatch make_training_batch(
    std::span<const LoadedSample* const> samples, double alpha,
    std::vector<Eigen::Index> partner, const DspConfig& cfg,
    std::span<const ComplexSpectrogram* const> spectra = {});

// Synthetic two-modality corpus.
struct SyntheticSpec {
  int n_classes = 8;
  int samples_per_class = 250;
  int image_size = 224;
  double tone_fundamental_base = 400.0;  // Hz
  double tone_fundamental_step = 300.0;  // Hz
  int n_harmonics = 3;
  double snr_db = 20.0;
  std::uint64_t seed = 0;
  int sample_rate = 8000;
  double clip_seconds = 3.0;
  // Per-instance cues shared by both modalities.
  double detune_hz = 60.0;        // +-, tied to glyph hue offset
  double gain_range_db = 12.0;    // tied to glyph brightness
  double glyph_radius_min = 30.0;
  double glyph_radius_max = 44.0;

  void validate() const;
};

// Writes audio/, images/, masks/ and manifest.jsonl under out_dir. Class k
// is a harmonic tone at base + k * step Hz and a filled polygon with k + 3
// vertices at a uniformly random position on a gray texture. Deterministic
// in spec.seed.
Manifest generate_synthetic(const SyntheticSpec& spec,
                            const std::filesystem::path& out_dir);

}  // namespace avu

#endif  // AVU_DATA_H_

// Copyright 2026 The avunify Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef AVU_DSP_H_
#define AVU_DSP_H_

#include <complex>
#include <filesystem>
#include <string>

#include <Eigen/Dense>

namespace avu {

enum class WindowKind { kHann, kHamming, kRectangular };

// How the separation target is derived from a source and its mixture.
//   kPaperStrict: 1 iff |S| > |M| (identically zero when the interferer is
//                 silent).
//   kDominant:    1 iff |S| >= |M - S|.
enum class MaskRule { kPaperStrict, kDominant };

std::string to_string(WindowKind kind);
std::string to_string(MaskRule rule);
WindowKind window_kind_from_string(const std::string& name);
MaskRule mask_rule_from_string(const std::string& name);

struct DspConfig {
  int sample_rate = 8000;
  double clip_seconds = 3.0;
  int win_length = 400;  // 50 ms
  int hop_length = 200;  // 25 ms
  int fft_size = 400;
  WindowKind window = WindowKind::kHann;
  double log_epsilon = 1e-7;
  MaskRule mask_rule = MaskRule::kDominant;

  Eigen::Index clip_samples() const;
  Eigen::Index num_bins() const { return fft_size / 2 + 1; }
  // Frame count for a signal of `length` samples under centered framing.
  Eigen::Index num_frames(Eigen::Index length) const;

  // Throws ConfigError on any violated invariant, including a window that is
  // not constant-overlap-add at the configured hop.
  void validate() const;
};

struct Waveform {
  Eigen::VectorXd samples;
  int sample_rate = 0;

  Eigen::Index size() const { return samples.size(); }
};

// Complex STFT grid, frequency bins along rows and frames along columns.
struct ComplexSpectrogram {
  Eigen::ArrayXXcd bins;

  Eigen::Index num_bins() const { return bins.rows(); }
  Eigen::Index num_frames() const { return bins.cols(); }
};

struct BinaryMask {
  Eigen::ArrayXXd values;  // entries in {0, 1}
};

struct SoftMask {
  Eigen::ArrayXXd values;  // entries in (0, 1)
};

// Periodic analysis window of length win_length.
Eigen::VectorXd analysis_window(const DspConfig& cfg);

// Centered STFT: the signal is reflect-padded by win_length/2 on both sides
// (zeros extend the right edge when the length is not a multiple of the hop),
// giving 1 + ceil(len / hop) frames.
ComplexSpectrogram stft(const Waveform& w, const DspConfig& cfg);

// Weighted overlap-add inverse of stft(), trimmed or zero-padded to out_len.
Waveform istft(const ComplexSpectrogram& s, const DspConfig& cfg,
               Eigen::Index out_len);

// log(|s| + log_epsilon), elementwise.
Eigen::ArrayXXd log_magnitude(const ComplexSpectrogram& s,
                              const DspConfig& cfg);

BinaryMask target_binary_mask(const ComplexSpectrogram& src,
                              const ComplexSpectrogram& mix, MaskRule rule);

// istft(mix * mask). A mask on a different grid is bilinearly resized to
// the mixture grid first.
Waveform apply_mask(const ComplexSpectrogram& mix, const Eigen::ArrayXXd& mask,
                    const DspConfig& cfg, Eigen::Index out_len);
inline Waveform apply_mask(const ComplexSpectrogram& mix, const SoftMask& mask,
                           const DspConfig& cfg, Eigen::Index out_len) {
  return apply_mask(mix, mask.values, cfg, out_len);
}
inline Waveform apply_mask(const ComplexSpectrogram& mix,
                           const BinaryMask& mask, const DspConfig& cfg,
                           Eigen::Index out_len) {
  return apply_mask(mix, mask.values, cfg, out_len);
}

// Debug dump of a real grid: "AVUT" magic, u32 rank, u64 dims, f64 payload
// in row-major order, all little-endian.
void save_grid(const std::filesystem::path& path, const Eigen::ArrayXXd& grid);
Eigen::ArrayXXd load_grid(const std::filesystem::path& path);

}  // namespace avu

#endif  // AVU_DSP_H_

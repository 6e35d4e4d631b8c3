// Copyright 2026 The avunify Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "avu/dsp.h"

#include <cmath>
#include <cstdint>
#include <fstream>
#include <numbers>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "avu/errors.h"
#include "avu/resize.h"

namespace avu {

std::string to_string(WindowKind kind) {
  switch (kind) {
    case WindowKind::kHann: return "hann";
    case WindowKind::kHamming: return "hamming";
    case WindowKind::kRectangular: return "rectangular";
  }
  return "unknown";
}

std::string to_string(MaskRule rule) {
  return rule == MaskRule::kPaperStrict ? "paper_strict" : "dominant";
}

WindowKind window_kind_from_string(const std::string& name) {
  if (name == "hann") return WindowKind::kHann;
  if (name == "hamming") return WindowKind::kHamming;
  if (name == "rectangular" || name == "rect") return WindowKind::kRectangular;
  throw ConfigError("unknown window kind '" + name + "'");
}

MaskRule mask_rule_from_string(const std::string& name) {
  if (name == "paper_strict") return MaskRule::kPaperStrict;
  if (name == "dominant") return MaskRule::kDominant;
  throw ConfigError("unknown mask rule '" + name + "'");
}

Eigen::Index DspConfig::clip_samples() const {
  return static_cast<Eigen::Index>(std::llround(clip_seconds * sample_rate));
}

Eigen::Index DspConfig::num_frames(Eigen::Index length) const {
  return 1 + (length + hop_length - 1) / hop_length;
}

void DspConfig::validate() const {
  if (sample_rate <= 0) throw ConfigError("sample_rate must be positive");
  if (win_length <= 0 || hop_length <= 0 || fft_size <= 0)
    throw ConfigError("window, hop and fft sizes must be positive");
  if (hop_length > win_length)
    throw ConfigError("hop_length exceeds win_length");
  if (win_length > fft_size) throw ConfigError("win_length exceeds fft_size");
  if (win_length % 2 != 0) throw ConfigError("win_length must be even");
  if (log_epsilon <= 0.0) throw ConfigError("log_epsilon must be positive");
  const double samples = clip_seconds * sample_rate;
  if (clip_seconds <= 0.0 || std::abs(samples - std::round(samples)) > 1e-9)
    throw ConfigError("clip_seconds * sample_rate must be a positive integer");

  const Eigen::VectorXd w = analysis_window(*this);
  Eigen::VectorXd overlap = Eigen::VectorXd::Zero(hop_length);
  for (int n = 0; n < win_length; ++n) overlap(n % hop_length) += w(n);
  const double mean = overlap.mean();
  if (mean <= 0.0 || (overlap.array() - mean).abs().maxCoeff() > 1e-9 * mean)
    throw ConfigError("window '" + to_string(window) +
                      "' is not constant-overlap-add at hop " +
                      std::to_string(hop_length));
}

Eigen::VectorXd analysis_window(const DspConfig& cfg) {
  const int n = cfg.win_length;
  Eigen::VectorXd w(n);
  const double two_pi = 2.0 * std::numbers::pi;
  for (int i = 0; i < n; ++i) {
    const double phase = two_pi * i / n;
    switch (cfg.window) {
      case WindowKind::kHann: w(i) = 0.5 - 0.5 * std::cos(phase); break;
      case WindowKind::kHamming: w(i) = 0.54 - 0.46 * std::cos(phase); break;
      case WindowKind::kRectangular: w(i) = 1.0; break;
    }
  }
  return w;
}

namespace {

// Sample of the centered, reflect-padded signal at padded index p.
double padded_sample(const Eigen::VectorXd& x, Eigen::Index p,
                     Eigen::Index pad) {
  const Eigen::Index len = x.size();
  const Eigen::Index offset = p - pad;
  if (offset >= len + pad) return 0.0;
  Eigen::Index n = offset < 0 ? -offset : offset;
  if (n >= len) n = 2 * (len - 1) - n;
  if (n < 0 || n >= len) return 0.0;
  return x(n);
}

}  // namespace

ComplexSpectrogram stft(const Waveform& w, const DspConfig& cfg) {
  if (w.sample_rate != cfg.sample_rate)
    throw ConfigError("waveform rate " + std::to_string(w.sample_rate) +
                      " Hz does not match configured " +
                      std::to_string(cfg.sample_rate) + " Hz");
  if (w.size() < cfg.win_length)
    throw InputError("waveform shorter than one analysis window");

  const Eigen::Index frames = cfg.num_frames(w.size());
  const Eigen::Index bins = cfg.num_bins();
  const Eigen::Index pad = cfg.win_length / 2;
  const Eigen::VectorXd window = analysis_window(cfg);

  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  std::vector<double> frame(cfg.fft_size, 0.0);
  std::vector<std::complex<double>> spectrum;

  ComplexSpectrogram out;
  out.bins.resize(bins, frames);
  for (Eigen::Index t = 0; t < frames; ++t) {
    const Eigen::Index start = t * cfg.hop_length;
    for (int n = 0; n < cfg.win_length; ++n)
      frame[n] = window(n) * padded_sample(w.samples, start + n, pad);
    fft.fwd(spectrum, frame);
    for (Eigen::Index f = 0; f < bins; ++f) out.bins(f, t) = spectrum[f];
  }
  return out;
}

Waveform istft(const ComplexSpectrogram& s, const DspConfig& cfg,
               Eigen::Index out_len) {
  if (s.num_bins() != cfg.num_bins())
    throw ConfigError("spectrogram has " + std::to_string(s.num_bins()) +
                      " bins, config expects " +
                      std::to_string(cfg.num_bins()));
  if (out_len < 0) throw InputError("negative output length");

  const Eigen::Index frames = s.num_frames();
  const Eigen::Index pad = cfg.win_length / 2;
  const Eigen::Index padded_len =
      (frames - 1) * cfg.hop_length + cfg.win_length;
  const Eigen::VectorXd window = analysis_window(cfg);

  Eigen::VectorXd acc = Eigen::VectorXd::Zero(padded_len);
  Eigen::VectorXd norm = Eigen::VectorXd::Zero(padded_len);

  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  std::vector<std::complex<double>> spectrum(s.num_bins());
  std::vector<double> frame;
  for (Eigen::Index t = 0; t < frames; ++t) {
    for (Eigen::Index f = 0; f < s.num_bins(); ++f) spectrum[f] = s.bins(f, t);
    fft.inv(frame, spectrum, cfg.fft_size);
    const Eigen::Index start = t * cfg.hop_length;
    for (int n = 0; n < cfg.win_length; ++n) {
      acc(start + n) += window(n) * frame[n];
      norm(start + n) += window(n) * window(n);
    }
  }

  Waveform out;
  out.sample_rate = cfg.sample_rate;
  out.samples = Eigen::VectorXd::Zero(out_len);
  for (Eigen::Index n = 0; n < out_len; ++n) {
    const Eigen::Index p = n + pad;
    if (p >= padded_len) break;
    if (norm(p) > 1e-10) out.samples(n) = acc(p) / norm(p);
  }
  return out;
}

Eigen::ArrayXXd log_magnitude(const ComplexSpectrogram& s,
                              const DspConfig& cfg) {
  return (s.bins.abs() + cfg.log_epsilon).log();
}

BinaryMask target_binary_mask(const ComplexSpectrogram& src,
                              const ComplexSpectrogram& mix, MaskRule rule) {
  if (src.bins.rows() != mix.bins.rows() || src.bins.cols() != mix.bins.cols())
    throw InputError("source and mixture grids differ in shape");
  BinaryMask m;
  if (rule == MaskRule::kPaperStrict) {
    m.values = (src.bins.abs() > mix.bins.abs()).cast<double>();
  } else {
    m.values = (src.bins.abs() >= (mix.bins - src.bins).abs()).cast<double>();
  }
  return m;
}

Waveform apply_mask(const ComplexSpectrogram& mix, const Eigen::ArrayXXd& mask,
                    const DspConfig& cfg, Eigen::Index out_len) {
  ComplexSpectrogram masked;
  if (mask.rows() == mix.num_bins() && mask.cols() == mix.num_frames()) {
    masked.bins = mix.bins * mask.cast<std::complex<double>>();
  } else {
    const Eigen::ArrayXXd resized =
        resize_bilinear(mask.matrix(), mix.num_bins(), mix.num_frames())
            .array();
    masked.bins = mix.bins * resized.cast<std::complex<double>>();
  }
  return istft(masked, cfg, out_len);
}

namespace {

constexpr char kGridMagic[4] = {'A', 'V', 'U', 'T'};

template <typename T>
void write_le(std::ostream& os, T value) {
  os.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_le(std::istream& is) {
  T value{};
  is.read(reinterpret_cast<char*>(&value), sizeof(T));
  return value;
}

}  // namespace

void save_grid(const std::filesystem::path& path, const Eigen::ArrayXXd& grid) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InputError("cannot open '" + path.string() + "' for writing");
  os.write(kGridMagic, 4);
  write_le<std::uint32_t>(os, 2);
  write_le<std::uint64_t>(os, static_cast<std::uint64_t>(grid.rows()));
  write_le<std::uint64_t>(os, static_cast<std::uint64_t>(grid.cols()));
  for (Eigen::Index r = 0; r < grid.rows(); ++r)
    for (Eigen::Index c = 0; c < grid.cols(); ++c) write_le(os, grid(r, c));
}

Eigen::ArrayXXd load_grid(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  char magic[4];
  if (!is.read(magic, 4) || !std::equal(magic, magic + 4, kGridMagic))
    throw InputError("'" + path.string() + "' is not a grid dump");
  if (read_le<std::uint32_t>(is) != 2)
    throw InputError("only rank-2 grid dumps are supported");
  const auto rows = static_cast<Eigen::Index>(read_le<std::uint64_t>(is));
  const auto cols = static_cast<Eigen::Index>(read_le<std::uint64_t>(is));
  Eigen::ArrayXXd grid(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) grid(r, c) = read_le<double>(is);
  if (!is) throw InputError("truncated grid dump '" + path.string() + "'");
  return grid;
}

}  // namespace avu

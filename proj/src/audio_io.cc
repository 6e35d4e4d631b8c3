// Copyright 2026 The avunify Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "avu/audio_io.h"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numbers>
#include <vector>

#include "avu/errors.h"

namespace avu {

namespace {

std::uint32_t le32(const unsigned char* p) {
  return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 |
         std::uint32_t(p[2]) << 16 | std::uint32_t(p[3]) << 24;
}

std::uint16_t le16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | p[1] << 8);
}

void put32(std::vector<unsigned char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back((v >> (8 * i)) & 0xff);
}

void put16(std::vector<unsigned char>& out, std::uint16_t v) {
  out.push_back(v & 0xff);
  out.push_back((v >> 8) & 0xff);
}

}  // namespace

Waveform read_wav(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError("cannot open '" + path.string() + "'");
  const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(is)),
                                         std::istreambuf_iterator<char>());
  const auto fail = [&](const std::string& why) {
    return InputError("'" + path.string() + "': " + why);
  };
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw fail("not a RIFF/WAVE file");

  int format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const unsigned char* data = nullptr;
  std::size_t data_size = 0;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const unsigned char* chunk = bytes.data() + pos;
    const std::uint32_t size = le32(chunk + 4);
    const std::size_t body = pos + 8;
    if (body + size > bytes.size() && std::memcmp(chunk, "data", 4) != 0)
      throw fail("truncated chunk");
    if (std::memcmp(chunk, "fmt ", 4) == 0) {
      if (size < 16) throw fail("short fmt chunk");
      format = le16(bytes.data() + body);
      channels = le16(bytes.data() + body + 2);
      rate = le32(bytes.data() + body + 4);
      bits = le16(bytes.data() + body + 14);
      if (format == 0xFFFE && size >= 26)
        format = le16(bytes.data() + body + 24);  // extensible subformat
    } else if (std::memcmp(chunk, "data", 4) == 0) {
      data = bytes.data() + body;
      data_size = std::min<std::size_t>(size, bytes.size() - body);
    }
    pos = body + size + (size & 1);
  }
  if (channels <= 0 || rate == 0) throw fail("missing fmt chunk");
  if (data == nullptr) throw fail("missing data chunk");
  const bool pcm = format == 1 && (bits == 8 || bits == 16 || bits == 24 ||
                                   bits == 32);
  const bool flt = format == 3 && bits == 32;
  if (!pcm && !flt)
    throw fail("unsupported sample format " + std::to_string(format) + "/" +
               std::to_string(bits) + " bits");

  const std::size_t width = bits / 8;
  const std::size_t frames = data_size / (width * channels);
  Waveform w;
  w.sample_rate = static_cast<int>(rate);
  w.samples = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(frames));
  for (std::size_t i = 0; i < frames; ++i) {
    double acc = 0.0;
    for (int c = 0; c < channels; ++c) {
      const unsigned char* p = data + (i * channels + c) * width;
      double v = 0.0;
      if (flt) {
        float f;
        std::uint32_t raw = le32(p);
        std::memcpy(&f, &raw, 4);
        v = f;
      } else if (bits == 8) {
        v = (static_cast<int>(p[0]) - 128) / 128.0;
      } else if (bits == 16) {
        v = static_cast<std::int16_t>(le16(p)) / 32768.0;
      } else if (bits == 24) {
        std::int32_t s = p[0] | p[1] << 8 | p[2] << 16;
        if (s & 0x800000) s |= ~0xffffff;
        v = s / 8388608.0;
      } else {
        v = static_cast<std::int32_t>(le32(p)) / 2147483648.0;
      }
      acc += v;
    }
    w.samples(static_cast<Eigen::Index>(i)) = acc / channels;
  }
  return w;
}

void write_wav(const std::filesystem::path& path, const Waveform& w) {
  if (w.sample_rate <= 0) throw InputError("waveform has no sample rate");
  const auto n = static_cast<std::uint32_t>(w.size());
  std::vector<unsigned char> out;
  out.reserve(44 + 2 * n);
  out.insert(out.end(), {'R', 'I', 'F', 'F'});
  put32(out, 36 + 2 * n);
  out.insert(out.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  put32(out, 16);
  put16(out, 1);
  put16(out, 1);
  put32(out, static_cast<std::uint32_t>(w.sample_rate));
  put32(out, static_cast<std::uint32_t>(w.sample_rate) * 2);
  put16(out, 2);
  put16(out, 16);
  out.insert(out.end(), {'d', 'a', 't', 'a'});
  put32(out, 2 * n);
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    const double v = std::clamp(w.samples(i), -1.0, 32767.0 / 32768.0);
    put16(out, static_cast<std::uint16_t>(
                   static_cast<std::int16_t>(std::lround(v * 32768.0))));
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InputError("cannot open '" + path.string() + "' for writing");
  os.write(reinterpret_cast<const char*>(out.data()),
           static_cast<std::streamsize>(out.size()));
}

Waveform resample(const Waveform& w, int target_rate) {
  if (target_rate <= 0 || w.sample_rate <= 0)
    throw ConfigError("sample rates must be positive");
  if (target_rate == w.sample_rate) return w;

  const double ratio = static_cast<double>(target_rate) / w.sample_rate;
  const double cutoff = std::min(1.0, ratio);
  constexpr double kZeroCrossings = 16.0;
  const double half_width = kZeroCrossings / cutoff;
  const auto out_len =
      static_cast<Eigen::Index>(std::llround(w.size() * ratio));

  Waveform out;
  out.sample_rate = target_rate;
  out.samples = Eigen::VectorXd::Zero(out_len);
  for (Eigen::Index n = 0; n < out_len; ++n) {
    const double t = n / ratio;
    const auto first = static_cast<Eigen::Index>(std::ceil(t - half_width));
    const auto last = static_cast<Eigen::Index>(std::floor(t + half_width));
    double acc = 0.0;
    for (Eigen::Index k = std::max<Eigen::Index>(first, 0);
         k <= std::min<Eigen::Index>(last, w.size() - 1); ++k) {
      const double x = t - static_cast<double>(k);
      const double arg = std::numbers::pi * cutoff * x;
      const double sinc = std::abs(arg) < 1e-12 ? 1.0 : std::sin(arg) / arg;
      const double taper =
          0.5 + 0.5 * std::cos(std::numbers::pi * x / half_width);
      acc += w.samples(k) * cutoff * sinc * taper;
    }
    out.samples(n) = acc;
  }
  return out;
}

}  // namespace avu

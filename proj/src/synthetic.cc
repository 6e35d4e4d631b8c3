// Copyright 2026 The avunify Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "avu/audio_io.h"
#include "avu/data.h"
#include "avu/errors.h"
#include "avu/image_io.h"
#include "avu/resize.h"

namespace avu {

namespace fs = std::filesystem;

void SyntheticSpec::validate() const {
  if (n_classes < 2) throw ConfigError("synthetic corpus needs >= 2 classes");
  if (samples_per_class < 1)
    throw ConfigError("samples_per_class must be positive");
  if (n_harmonics < 1) throw ConfigError("n_harmonics must be positive");
  if (sample_rate <= 0 || clip_seconds <= 0.0)
    throw ConfigError("sample_rate and clip_seconds must be positive");
  const double nyquist = 0.5 * sample_rate;
  const double top = tone_fundamental_base +
                     (n_classes - 1) * tone_fundamental_step + detune_hz;
  if (tone_fundamental_base - detune_hz <= 0.0 || top >= nyquist)
    throw ConfigError("class fundamentals must lie in (0, " +
                      std::to_string(nyquist) + ") Hz");
  if (glyph_radius_min <= 0.0 || glyph_radius_max < glyph_radius_min ||
      2.0 * glyph_radius_max + 2.0 >= image_size)
    throw ConfigError("glyph radius range does not fit the image");
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::array<double, 3> hsv_to_rgb(double h, double s, double v) {
  h = h - std::floor(h);
  const double sector = h * 6.0;
  const int i = static_cast<int>(sector) % 6;
  const double f = sector - std::floor(sector);
  const double p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
  switch (i) {
    case 0: return {v, t, p};
    case 1: return {q, v, p};
    case 2: return {p, v, t};
    case 3: return {p, q, v};
    case 4: return {t, p, v};
    default: return {v, p, q};
  }
}

struct Instance {
  int label = 0;
  double brightness = 0.0;  // shared cue u
  double tint = 0.0;        // shared cue w
};

Waveform synthesize_tone(const SyntheticSpec& spec, const Instance& inst,
                         std::mt19937_64& rng) {
  const double f0 = spec.tone_fundamental_base +
                    inst.label * spec.tone_fundamental_step +
                    (inst.tint - 0.5) * 2.0 * spec.detune_hz;
  const double gain =
      std::pow(10.0, spec.gain_range_db * (inst.brightness - 1.0) / 20.0);
  const double nyquist = 0.5 * spec.sample_rate;
  const auto n = static_cast<Eigen::Index>(
      std::llround(spec.clip_seconds * spec.sample_rate));

  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  Eigen::VectorXd clean = Eigen::VectorXd::Zero(n);
  for (int h = 1; h <= spec.n_harmonics; ++h) {
    const double fh = h * f0;
    const double ph = phase(rng);
    if (fh >= 0.95 * nyquist) continue;
    const double omega = 2.0 * std::numbers::pi * fh / spec.sample_rate;
    for (Eigen::Index t = 0; t < n; ++t)
      clean(t) += std::sin(omega * static_cast<double>(t) + ph) / h;
  }
  clean *= 0.25 * gain;

  const double power = clean.squaredNorm() / static_cast<double>(n);
  const double sigma = std::sqrt(power / std::pow(10.0, spec.snr_db / 10.0));
  std::normal_distribution<double> noise(0.0, sigma);
  Waveform w;
  w.sample_rate = spec.sample_rate;
  w.samples = clean;
  for (Eigen::Index t = 0; t < n; ++t) w.samples(t) += noise(rng);
  return w;
}

// Renders the glyph into `image`, marks the same pixels in `mask` and
// returns their bounding box.
BoundingBox render_scene(const SyntheticSpec& spec, const Instance& inst,
                         std::mt19937_64& rng, Image8& image, Image8& mask) {
  const int size = spec.image_size;
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  // Gray texture: smooth coarse field plus fine grain, r == g == b.
  constexpr int kCoarse = 8;
  Eigen::MatrixXd coarse(kCoarse, kCoarse);
  for (int y = 0; y < kCoarse; ++y)
    for (int x = 0; x < kCoarse; ++x) coarse(y, x) = 0.25 + 0.35 * unit(rng);
  const Eigen::MatrixXd field = resize_bilinear(coarse, size, size);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const double g = std::clamp(field(y, x) + 0.06 * (unit(rng) - 0.5), 0.0,
                                  1.0);
      const auto v = static_cast<std::uint8_t>(std::lround(g * 255.0));
      for (int c = 0; c < 3; ++c) image.at(x, y, c) = v;
    }

  const int vertices = inst.label + 3;
  const double radius = spec.glyph_radius_min +
                        (spec.glyph_radius_max - spec.glyph_radius_min) * unit(rng);
  const double rotation = 2.0 * std::numbers::pi * unit(rng);
  const double lo = radius + 1.0, hi = size - radius - 1.0;
  const double cx = lo + (hi - lo) * unit(rng);
  const double cy = lo + (hi - lo) * unit(rng);
  std::vector<std::array<double, 2>> poly(vertices);
  for (int k = 0; k < vertices; ++k) {
    const double a = rotation + 2.0 * std::numbers::pi * k / vertices;
    poly[k] = {cx + radius * std::cos(a), cy + radius * std::sin(a)};
  }

  const double hue = static_cast<double>(inst.label) / spec.n_classes +
                     (inst.tint - 0.5) * 0.8 / spec.n_classes;
  const auto rgb = hsv_to_rgb(hue, 0.85, 0.5 + 0.5 * inst.brightness);
  std::array<std::uint8_t, 3> color;
  for (int c = 0; c < 3; ++c)
    color[c] = static_cast<std::uint8_t>(std::lround(rgb[c] * 255.0));

  BoundingBox box{size, size, 0, 0};
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const double px = x + 0.5, py = y + 0.5;
      bool inside = true;
      for (int k = 0; k < vertices && inside; ++k) {
        const auto& a = poly[k];
        const auto& b = poly[(k + 1) % vertices];
        const double cross =
            (b[0] - a[0]) * (py - a[1]) - (b[1] - a[1]) * (px - a[0]);
        inside = cross >= 0.0;
      }
      if (!inside) continue;
      for (int c = 0; c < 3; ++c) image.at(x, y, c) = color[c];
      mask.at(x, y, 0) = 255;
      box.x0 = std::min(box.x0, x);
      box.y0 = std::min(box.y0, y);
      box.x1 = std::max(box.x1, x + 1);
      box.y1 = std::max(box.y1, y + 1);
    }
  return box;
}

}  // namespace

Manifest generate_synthetic(const SyntheticSpec& spec, const fs::path& out_dir) {
  spec.validate();
  const fs::path root = fs::absolute(out_dir).lexically_normal();
  for (const char* sub : {"audio", "images", "masks"})
    fs::create_directories(root / sub);

  Manifest manifest;
  manifest.labeled = true;
  const int total = spec.n_classes * spec.samples_per_class;
  for (int i = 0; i < total; ++i) {
    std::mt19937_64 rng(splitmix64(spec.seed * 0x100000001b3ULL + i));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    Instance inst;
    inst.label = i % spec.n_classes;
    inst.brightness = unit(rng);
    inst.tint = unit(rng);

    char id[32];
    std::snprintf(id, sizeof(id), "s%05d_c%d", i, inst.label);
    SampleRecord rec;
    rec.id = id;
    rec.label = inst.label;
    rec.audio_path = root / "audio" / (rec.id + ".wav");
    rec.image_path = root / "images" / (rec.id + ".png");
    rec.gt_mask_path = root / "masks" / (rec.id + ".png");

    write_wav(rec.audio_path, synthesize_tone(spec, inst, rng));
    Image8 image(spec.image_size, spec.image_size, 3);
    Image8 mask(spec.image_size, spec.image_size, 1);
    rec.bbox = render_scene(spec, inst, rng, image, mask);
    write_png(rec.image_path, image);
    write_png(*rec.gt_mask_path, mask);
    manifest.records.push_back(std::move(rec));
  }
  write_manifest(root / "manifest.jsonl", manifest);
  return manifest;
}

}  // namespace avu

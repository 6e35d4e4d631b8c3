// Copyright 2026 The avunify Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "avu/data.h"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <sstream>

#include <openssl/evp.h>

#include "avu/audio_io.h"
#include "avu/errors.h"
#include "avu/image_io.h"
#include "avu/resize.h"
#include "json.hpp"

namespace avu {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr int kManifestVersion = 1;

fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  if (path.is_relative()) path = base / path;
  return fs::absolute(path).lexically_normal();
}

std::string relativize(const fs::path& base, const fs::path& p) {
  const fs::path rel = fs::absolute(p).lexically_normal().lexically_relative(
      fs::absolute(base).lexically_normal());
  if (rel.empty() || *rel.begin() == "..") return p.string();
  return rel.generic_string();
}

}  // namespace

Manifest read_manifest(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw InputError("cannot open manifest '" + path.string() + "'");
  const fs::path base = fs::absolute(path).parent_path();
  Manifest m;
  std::string line;
  int line_no = 0;
  bool header_seen = false;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw InputError(path.string() + ":" + std::to_string(line_no) + ": " +
                       e.what());
    }
    if (j.contains("avu_manifest")) {
      if (header_seen || !m.records.empty())
        throw InputError(path.string() + ": header must be the first line");
      if (j["avu_manifest"].get<int>() != kManifestVersion)
        throw InputError(path.string() + ": unsupported manifest version");
      m.labeled = j.value("labeled", false);
      header_seen = true;
      continue;
    }
    SampleRecord r;
    try {
      r.id = j.at("id").get<std::string>();
      r.audio_path = resolve(base, j.at("audio_path").get<std::string>());
      r.image_path = resolve(base, j.at("image_path").get<std::string>());
      if (j.contains("label") && !j["label"].is_null())
        r.label = j["label"].get<int>();
      if (j.contains("bbox") && !j["bbox"].is_null()) {
        const auto b = j["bbox"].get<std::vector<int>>();
        if (b.size() != 4) throw InputError("bbox needs four values");
        r.bbox = BoundingBox{b[0], b[1], b[2], b[3]};
      }
      if (j.contains("gt_mask_path") && !j["gt_mask_path"].is_null())
        r.gt_mask_path = resolve(base, j["gt_mask_path"].get<std::string>());
    } catch (const json::exception& e) {
      throw InputError(path.string() + ":" + std::to_string(line_no) + ": " +
                       e.what());
    }
    if (m.labeled && !r.label)
      throw InputError(path.string() + ":" + std::to_string(line_no) +
                       ": labeled manifest record '" + r.id + "' has no label");
    m.records.push_back(std::move(r));
  }
  return m;
}

void write_manifest(const fs::path& path, const Manifest& m) {
  const fs::path base = fs::absolute(path).parent_path();
  std::ofstream os(path);
  if (!os) throw InputError("cannot write manifest '" + path.string() + "'");
  os << json{{"avu_manifest", kManifestVersion}, {"labeled", m.labeled}}.dump()
     << '\n';
  for (const auto& r : m.records) {
    json j;
    j["id"] = r.id;
    j["audio_path"] = relativize(base, r.audio_path);
    j["image_path"] = relativize(base, r.image_path);
    if (r.label) j["label"] = *r.label;
    if (r.bbox) j["bbox"] = {r.bbox->x0, r.bbox->y0, r.bbox->x1, r.bbox->y1};
    if (r.gt_mask_path) j["gt_mask_path"] = relativize(base, *r.gt_mask_path);
    os << j.dump() << '\n';
  }
}

std::string content_hash(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError("cannot open '" + path.string() + "'");
  const std::string bytes((std::istreambuf_iterator<char>(is)),
                          std::istreambuf_iterator<char>());
  const std::string header = "blob " + std::to_string(bytes.size()) + '\0';

  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr);
  EVP_DigestUpdate(ctx, header.data(), header.size());
  EVP_DigestUpdate(ctx, bytes.data(), bytes.size());
  EVP_DigestFinal_ex(ctx, digest, &len);
  EVP_MD_CTX_free(ctx);

  std::string hex;
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof(buf), "%02x", digest[i]);
    hex += buf;
  }
  return hex;
}

LoadedSample load_sample(const SampleRecord& rec, const DataConfig& cfg,
                         CropMode crop, std::mt19937_64* rng) {
  LoadedSample out;
  out.id = rec.id;
  out.label = rec.label;

  Image8 raw;
  Waveform audio;
  try {
    raw = read_png(rec.image_path, 3);
    audio = read_wav(rec.audio_path);
  } catch (const Error& e) {
    throw DataError(rec.id, e.what());
  }
  if (raw.width <= 0 || raw.height <= 0) throw DataError(rec.id, "empty image");
  if (audio.size() == 0) throw DataError(rec.id, "empty audio");

  const int size = cfg.image_size;
  out.image.height = size;
  out.image.width = size;
  out.image.pixels.resize(3, static_cast<Eigen::Index>(size) * size);
  const bool same = raw.width == size && raw.height == size;
  const auto ry = interpolation_matrix<float>(size, raw.height, true);
  const auto rx = interpolation_matrix<float>(size, raw.width, true);
  for (int c = 0; c < 3; ++c) {
    Eigen::MatrixXf plane(raw.height, raw.width);
    for (int y = 0; y < raw.height; ++y)
      for (int x = 0; x < raw.width; ++x)
        plane(y, x) = raw.at(x, y, c) / 255.0f;
    if (!same) plane = ry * plane * rx.transpose();
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x)
        out.image.pixels(c, y * size + x) =
            (plane(y, x) - cfg.mean[c]) / cfg.stddev[c];
  }

  audio = resample(audio, cfg.dsp.sample_rate);
  const Eigen::Index target = cfg.dsp.clip_samples();
  out.audio.sample_rate = cfg.dsp.sample_rate;
  out.audio.samples = Eigen::VectorXd::Zero(target);
  if (audio.size() <= target) {
    out.audio.samples.head(audio.size()) = audio.samples;
  } else {
    const Eigen::Index slack = audio.size() - target;
    Eigen::Index start = slack / 2;
    if (crop == CropMode::kRandom) {
      if (rng == nullptr) throw InputError("random crop needs an rng");
      start = std::uniform_int_distribution<Eigen::Index>(0, slack)(*rng);
    }
    out.audio.samples = audio.samples.segment(start, target);
  }
  if (!out.audio.samples.allFinite())
    throw DataError(rec.id, "non-finite audio samples");
  return out;
}

std::optional<Eigen::ArrayXXd> load_ground_truth_mask(const SampleRecord& rec,
                                                      int image_size) {
  if (rec.gt_mask_path) {
    Image8 m;
    try {
      m = read_png(*rec.gt_mask_path, 1);
    } catch (const Error& e) {
      throw DataError(rec.id, e.what());
    }
    Eigen::ArrayXXd out(image_size, image_size);
    for (int y = 0; y < image_size; ++y) {
      const int sy = std::min(m.height - 1, y * m.height / image_size);
      for (int x = 0; x < image_size; ++x) {
        const int sx = std::min(m.width - 1, x * m.width / image_size);
        out(y, x) = m.at(sx, sy, 0) >= 128 ? 1.0 : 0.0;
      }
    }
    return out;
  }
  if (rec.bbox) {
    Image8 img;
    try {
      img = read_png(rec.image_path, 3);
    } catch (const Error& e) {
      throw DataError(rec.id, e.what());
    }
    const double sx = static_cast<double>(image_size) / img.width;
    const double sy = static_cast<double>(image_size) / img.height;
    Eigen::ArrayXXd out = Eigen::ArrayXXd::Zero(image_size, image_size);
    for (int y = 0; y < image_size; ++y)
      for (int x = 0; x < image_size; ++x) {
        const double cx = (x + 0.5) / sx, cy = (y + 0.5) / sy;
        if (cx >= rec.bbox->x0 && cx < rec.bbox->x1 && cy >= rec.bbox->y0 &&
            cy < rec.bbox->y1)
          out(y, x) = 1.0;
      }
    return out;
  }
  return std::nullopt;
}

std::vector<Eigen::Index> random_derangement(Eigen::Index n,
                                             std::mt19937_64& rng) {
  if (n < 2) throw InputError("a derangement needs at least two elements");
  std::vector<Eigen::Index> p(static_cast<std::size_t>(n));
  for (;;) {
    for (Eigen::Index i = 0; i < n; ++i) p[i] = i;
    for (Eigen::Index i = n - 1; i > 0; --i) {
      const auto j = std::uniform_int_distribution<Eigen::Index>(0, i)(rng);
      std::swap(p[i], p[j]);
    }
    bool fixed = false;
    for (Eigen::Index i = 0; i < n && !fixed; ++i) fixed = p[i] == i;
    if (!fixed) return p;
  }
}

TrainingBatch make_training_batch(
    std::span<const LoadedSample* const> samples, double alpha,
    std::mt19937_64& rng, const DspConfig& cfg,
    std::span<const ComplexSpectrogram* const> spectra) {
  if (samples.size() < 2)
    throw InputError("a training batch needs at least two samples");
  auto partner =
      random_derangement(static_cast<Eigen::Index>(samples.size()), rng);
  return make_training_batch(samples, alpha, std::move(partner), cfg, spectra);
}

TrainingBatch make_training_batch(
    std::span<const LoadedSample* const> samples, double alpha,
    std::vector<Eigen::Index> partner, const DspConfig& cfg,
    std::span<const ComplexSpectrogram* const> spectra) {
  const auto b = static_cast<Eigen::Index>(samples.size());
  if (b < 2) throw InputError("a training batch needs at least two samples");
  if (static_cast<Eigen::Index>(partner.size()) != b)
    throw InputError("partner list does not match the batch size");
  if (alpha < 0.0 || alpha > 1.0)
    throw ConfigError("mixing coefficient must lie in [0, 1]");
  if (!spectra.empty() && spectra.size() != samples.size())
    throw InputError("spectra list does not match the batch size");
  for (Eigen::Index i = 0; i < b; ++i)
    if (partner[i] == i || partner[i] < 0 || partner[i] >= b)
      throw InputError("partner assignment must be a derangement");

  TrainingBatch batch;
  batch.alpha = alpha;
  batch.partner = std::move(partner);
  const int h = samples[0]->image.height, w = samples[0]->image.width;
  const Eigen::Index hw = static_cast<Eigen::Index>(h) * w;
  const Eigen::Index len = samples[0]->audio.size();
  batch.image_height = h;
  batch.image_width = w;
  batch.base_images.resize(3, b * hw);
  batch.partner_images.resize(3, b * hw);
  batch.base_audio.resize(len, b);
  batch.partner_audio.resize(len, b);
  for (Eigen::Index i = 0; i < b; ++i) {
    const LoadedSample& s = *samples[i];
    const LoadedSample& p = *samples[batch.partner[i]];
    if (s.image.height != h || s.image.width != w || s.audio.size() != len)
      throw InputError("batch samples differ in shape");
    batch.base_images.middleCols(i * hw, hw) = s.image.pixels;
    batch.partner_images.middleCols(i * hw, hw) = p.image.pixels;
    batch.base_audio.col(i) = s.audio.samples;
    batch.partner_audio.col(i) = p.audio.samples;
  }
  const auto a = static_cast<float>(alpha);
  batch.mixed_images = a * batch.base_images + (1.0f - a) * batch.partner_images;
  batch.mixture_audio = batch.base_audio + batch.partner_audio;

  batch.base_spectra.resize(b);
  for (Eigen::Index i = 0; i < b; ++i) {
    batch.base_spectra[i] =
        spectra.empty() ? stft(samples[i]->audio, cfg) : *spectra[i];
  }
  batch.mixture_spectra.resize(b);
  batch.target_masks.resize(b);
  for (Eigen::Index i = 0; i < b; ++i) {
    if (spectra.empty()) {
      Waveform mix{batch.mixture_audio.col(i), cfg.sample_rate};
      batch.mixture_spectra[i] = stft(mix, cfg);
    } else {
      batch.mixture_spectra[i].bins =
          batch.base_spectra[i].bins +
          batch.base_spectra[batch.partner[i]].bins;
    }
    batch.target_masks[i] = target_binary_mask(
        batch.base_spectra[i], batch.mixture_spectra[i], cfg.mask_rule);
  }
  return batch;
}

}  // namespace avu

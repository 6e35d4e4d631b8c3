// Copyright 2026 The avunify Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <algorithm>
#include <cmath>
#include <sstream>

#include "avu/checkpoint.h"
#include "avu/errors.h"
#include "avu/pipeline.h"

namespace avu {

namespace fs = std::filesystem;
using nn::FeatureMap;

std::string to_string(Task t) {
  switch (t) {
    case Task::kLocalization: return "loc";
    case Task::kSeparation: return "sep";
    case Task::kRecognition: return "recog";
  }
  return "?";
}

std::set<Task> parse_tasks(const std::string& text) {
  std::set<Task> tasks;
  std::istringstream is(text);
  std::string token;
  while (std::getline(is, token, ',')) {
    if (token == "loc") tasks.insert(Task::kLocalization);
    else if (token == "sep") tasks.insert(Task::kSeparation);
    else if (token == "recog") tasks.insert(Task::kRecognition);
    else throw ConfigError("unknown task '" + token + "' (expected loc, sep, recog)");
  }
  if (tasks.empty()) throw ConfigError("no evaluation task requested");
  return tasks;
}

std::vector<std::size_t> evaluation_partners(const Manifest& manifest,
                                             std::uint64_t seed) {
  const std::size_t n = manifest.size();
  if (n < 2) throw InputError("pairing needs at least two samples");
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> partner(n);
  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& label = manifest.records[i].label;
    candidates.clear();
    for (std::size_t j = 0; j < n; ++j)
      if (j != i && (!label || manifest.records[j].label != label))
        candidates.push_back(j);
    if (candidates.empty())
      for (std::size_t j = 0; j < n; ++j)
        if (j != i) candidates.push_back(j);
    std::uniform_int_distribution<std::size_t> pick(0, candidates.size() - 1);
    partner[i] = candidates[pick(rng)];
  }
  return partner;
}

namespace {

std::set<Component> required_components(Task t) {
  std::set<Component> s{Component::kAudioEncoder, Component::kVisualEncoder};
  switch (t) {
    case Task::kLocalization:
      s.insert({Component::kHeadALoc, Component::kHeadVLoc});
      break;
    case Task::kSeparation:
      s.insert(Component::kDecoder);
      break;
    case Task::kRecognition:
      s.insert({Component::kHeadAGlb, Component::kHeadVGlb});
      break;
  }
  return s;
}

Eigen::MatrixXf gather_images(const std::vector<LoadedSample>& data,
                              std::size_t first, std::size_t count) {
  const Eigen::Index hw = data[first].image.pixels.cols();
  Eigen::MatrixXf out(3, static_cast<Eigen::Index>(count) * hw);
  for (std::size_t k = 0; k < count; ++k)
    out.middleCols(static_cast<Eigen::Index>(k) * hw, hw) = data[first + k].image.pixels;
  return out;
}

struct EmbeddingTable {
  int cells = 0;
  Eigen::MatrixXd a_glb, a_loc, v_glb, v_loc;
};

EmbeddingTable embed_all(AvModel& model, const std::vector<LoadedSample>& data,
                         const DspConfig& dsp, int batch) {
  EmbeddingTable t;
  const std::size_t n = data.size();
  for (std::size_t first = 0; first < n; first += batch) {
    const std::size_t count = std::min<std::size_t>(batch, n - first);
    std::vector<Eigen::ArrayXXd> logs;
    for (std::size_t k = 0; k < count; ++k)
      logs.push_back(log_magnitude(stft(data[first + k].audio, dsp), dsp));
    std::vector<const Eigen::ArrayXXd*> ptrs;
    for (const auto& l : logs) ptrs.push_back(&l);
    const Embeddings e = model.embed(
        model.audio_input(ptrs),
        model.visual_input(gather_images(data, first, count), static_cast<int>(count)));
    if (first == 0) {
      t.cells = e.cells;
      t.a_glb.resize(e.a_glb.rows(), static_cast<Eigen::Index>(n));
      t.a_loc.resize(e.a_loc.rows(), static_cast<Eigen::Index>(n));
      t.v_glb.resize(e.v_glb.rows(), static_cast<Eigen::Index>(n));
      t.v_loc.resize(e.v_loc.rows(), static_cast<Eigen::Index>(n) * e.cells);
    }
    const auto f = static_cast<Eigen::Index>(first);
    const auto c = static_cast<Eigen::Index>(count);
    t.a_glb.middleCols(f, c) = e.a_glb.cast<double>();
    t.a_loc.middleCols(f, c) = e.a_loc.cast<double>();
    t.v_glb.middleCols(f, c) = e.v_glb.cast<double>();
    t.v_loc.middleCols(f * e.cells, c * e.cells) = e.v_loc.cast<double>();
  }
  return t;
}

void evaluate_localization(const EmbeddingTable& t, const Manifest& manifest,
                           int image_size, const EvalOptions& opts,
                           MetricsReport& report) {
  const int side = static_cast<int>(std::lround(std::sqrt(t.cells)));
  std::vector<Heatmap> maps;
  std::vector<Eigen::ArrayXXd> masks;
  std::vector<PrecisionRecall> rows;
  std::vector<std::size_t> index;
  int skipped = 0;
  for (std::size_t i = 0; i < manifest.size(); ++i) {
    auto gt = load_ground_truth_mask(manifest.records[i], image_size);
    if (!gt || (*gt > 0.5).count() == 0) {
      ++skipped;
      continue;
    }
    const auto k = static_cast<Eigen::Index>(i);
    Heatmap h = localization_heatmap(t.a_loc.col(k),
                                     t.v_loc.middleCols(k * t.cells, t.cells),
                                     side, side, image_size);
    const auto pr = precision_f1(h, *gt, opts.threshold_rule, opts.quantile);
    rows.push_back(*pr);
    maps.push_back(std::move(h));
    masks.push_back(std::move(*gt));
    index.push_back(i);
  }
  report.loc_skipped = skipped;
  if (maps.empty())
    throw InputError("no record carries a bounding box or mask");
  const PiapResult p = piap(maps, masks);
  report.piap = p.piap;
  summarize_localization(report, rows);
  for (std::size_t k = 0; k < maps.size(); ++k) {
    SampleMetrics& s = report.per_sample[index[k]];
    s.ap = 100.0 * *average_precision(maps[k].values, masks[k]);
    s.precision = rows[k].precision;
    s.recall = rows[k].recall;
    s.f1 = rows[k].f1;
  }
}

void evaluate_recognition(const EmbeddingTable& t, const Manifest& manifest,
                          MetricsReport& report) {
  if (manifest.size() < 2) throw InputError("recognition needs >= 2 samples");
  report.ir_acc = retrieval_accuracy(t.a_glb, t.v_glb);
  std::vector<int> labels;
  for (const auto& r : manifest.records) {
    if (!r.label)
      throw InputError("nearest-neighbor accuracy needs labels for every record");
    labels.push_back(*r.label);
  }
  report.xnn_acc = 0.5 * (cross_nn_accuracy(t.a_glb, t.v_glb, labels) +
                          cross_nn_accuracy(t.v_glb, t.a_glb, labels));
  report.wnn_acc = 0.5 * (within_nn_accuracy(t.a_glb, labels) +
                          within_nn_accuracy(t.v_glb, labels));
}

void evaluate_separation(AvModel& model, const std::vector<LoadedSample>& data,
                         const Manifest& manifest, const DspConfig& dsp,
                         const EvalOptions& opts, MetricsReport& report) {
  const std::vector<std::size_t> partner =
      evaluation_partners(manifest, opts.pair_seed);
  const std::size_t n = data.size();
  double sdr = 0.0, sar = 0.0, sdr_mix = 0.0, sar_mix = 0.0;
  for (std::size_t first = 0; first < n; first += opts.batch_size) {
    const std::size_t count = std::min<std::size_t>(opts.batch_size, n - first);
    std::vector<Waveform> mixtures;
    std::vector<ComplexSpectrogram> specs;
    std::vector<Eigen::ArrayXXd> logs;
    for (std::size_t k = 0; k < count; ++k) {
      const Waveform& a = data[first + k].audio;
      const Waveform& b = data[partner[first + k]].audio;
      mixtures.push_back({a.samples + b.samples, a.sample_rate});
      specs.push_back(stft(mixtures.back(), dsp));
      logs.push_back(log_magnitude(specs.back(), dsp));
    }
    FeatureMap masks;
    if (!opts.ideal_mask) {
      std::vector<const Eigen::ArrayXXd*> ptrs;
      for (const auto& l : logs) ptrs.push_back(&l);
      masks = model.separate(
          model.audio_input(ptrs),
          model.visual_input(gather_images(data, first, count),
                             static_cast<int>(count)));
    }
    for (std::size_t k = 0; k < count; ++k) {
      const std::size_t i = first + k;
      const Waveform& ref = data[i].audio;
      const Waveform& interf = data[partner[i]].audio;
      Eigen::ArrayXXd mask;
      if (opts.ideal_mask) {
        mask = target_binary_mask(stft(ref, dsp), specs[k], dsp.mask_rule).values;
      } else {
        const Eigen::Index hw = masks.pixels();
        mask = Eigen::Map<const Eigen::MatrixXf>(
                   masks.x.data() + static_cast<Eigen::Index>(k) * hw, masks.w,
                   masks.h)
                   .transpose()
                   .cast<double>()
                   .array();
      }
      const Waveform est = apply_mask(specs[k], mask, dsp, ref.size());
      const SeparationScore s = sdr_sar(est, ref, interf);
      const SeparationScore m = sdr_sar(mixtures[k], ref, interf);
      SampleMetrics& row = report.per_sample[i];
      row.sdr = s.sdr;
      row.sar = s.sar;
      row.sdr_mixture = m.sdr;
      row.sar_mixture = m.sar;
      sdr += s.sdr;
      sar += s.sar;
      sdr_mix += m.sdr;
      sar_mix += m.sar;
    }
  }
  const auto dn = static_cast<double>(n);
  report.sdr = sdr / dn;
  report.sar = sar / dn;
  report.sdr_mixture = sdr_mix / dn;
  report.sar_mixture = sar_mix / dn;
}

}  // namespace

MetricsReport evaluate(AvModel& model, const std::set<Component>& missing,
                       const Manifest& manifest, const DataConfig& data_cfg,
                       const EvalOptions& opts) {
  if (opts.batch_size < 1) throw ConfigError("evaluation batch_size must be positive");
  MetricsReport report;
  report.n_samples = static_cast<int>(manifest.size());
  if (manifest.size() == 0) {
    for (Task t : opts.tasks) report.task_errors[to_string(t)] = "empty manifest";
    return report;
  }
  const auto data = load_dataset(manifest, data_cfg);
  for (const auto& r : manifest.records) {
    SampleMetrics s;
    s.id = r.id;
    report.per_sample.push_back(std::move(s));
  }

  std::set<Task> runnable;
  for (Task t : opts.tasks) {
    std::string absent;
    for (Component c : required_components(t))
      if (missing.count(c) && !(t == Task::kSeparation && opts.ideal_mask))
        absent += (absent.empty() ? "" : ", ") + to_string(c);
    if (!absent.empty())
      report.task_errors[to_string(t)] = "checkpoint lacks " + absent;
    else
      runnable.insert(t);
  }

  std::optional<EmbeddingTable> table;
  if (runnable.count(Task::kLocalization) || runnable.count(Task::kRecognition))
    table = embed_all(model, *data, data_cfg.dsp, opts.batch_size);

  for (Task t : runnable) {
    try {
      switch (t) {
        case Task::kLocalization:
          evaluate_localization(*table, manifest, data_cfg.image_size, opts, report);
          break;
        case Task::kRecognition:
          evaluate_recognition(*table, manifest, report);
          break;
        case Task::kSeparation:
          evaluate_separation(model, *data, manifest, data_cfg.dsp, opts, report);
          break;
      }
    } catch (const Error& e) {
      report.task_errors[to_string(t)] = e.what();
    }
  }
  return report;
}

MetricsReport evaluate(const fs::path& checkpoint, const Manifest& manifest,
                       const EvalOptions& opts) {
  const Checkpoint ck = load_checkpoint(checkpoint);
  const RunConfig cfg = RunConfig::from_json(ck.config_json);
  ModelConfig mc = cfg.model;
  mc.pretrained_visual = false;
  AvModel model(mc, cfg.train.seed);
  const std::set<Component> missing = restore_parameters(model, ck);
  return evaluate(model, missing, manifest, cfg.data, opts);
}

}  // namespace avu

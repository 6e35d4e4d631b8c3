// Copyright 2026 The avunify Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <numeric>
#include <sstream>

#include <openssl/evp.h>

#include "avu/checkpoint.h"
#include "avu/errors.h"
#include "avu/pipeline.h"
#include "avu/resize.h"
#include "json.hpp"

namespace avu {

namespace fs = std::filesystem;
using json = nlohmann::json;
using nn::FeatureMap;

std::string Objectives::to_string() const {
  std::string out;
  auto add = [&](bool on, const char* name) {
    if (!on) return;
    if (!out.empty()) out += '+';
    out += name;
  };
  add(cl, "cl");
  add(mas, "mas");
  add(mva, "mva");
  return out.empty() ? "none" : out;
}

Objectives Objectives::parse(const std::string& text) {
  Objectives o{false, false, false};
  std::string token;
  std::istringstream is(text);
  while (std::getline(is, token, text.find(',') != std::string::npos ? ',' : '+')) {
    token.erase(0, token.find_first_not_of(' '));
    token.erase(token.find_last_not_of(' ') + 1);
    std::transform(token.begin(), token.end(), token.begin(), ::tolower);
    if (token == "cl") o.cl = true;
    else if (token == "mas") o.mas = true;
    else if (token == "mva") o.mva = true;
    else throw ConfigError("unknown objective '" + token + "'");
  }
  if (!o.any()) throw ConfigError("at least one objective must be enabled");
  return o;
}

void TrainConfig::validate() const {
  if (!objectives.any())
    throw ConfigError("at least one objective must be enabled");
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (batch_size < 2) throw ConfigError("batch_size must be >= 2");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0) ||
      !(epsilon > 0.0))
    throw ConfigError("invalid optimizer moments configuration");
  if (!(alpha >= 0.0 && alpha <= 1.0))
    throw ConfigError("alpha must lie in [0, 1]");
}

RunConfig RunConfig::desk() {
  RunConfig c;
  c.model.embed_dim = 128;
  c.model.proj_dim = 64;
  c.model.compact_width = 32;
  c.train.epochs = 10;
  c.train.batch_size = 32;
  c.train.learning_rate = 1e-3;
  return c;
}

void RunConfig::validate() const {
  model.validate();
  train.validate();
  data.dsp.validate();
  if (data.image_size != model.image_size)
    throw ConfigError("data.image_size and model.image_size differ");
}

namespace {

void reject_unknown(const json& j, std::initializer_list<const char*> keys,
                    const std::string& section) {
  if (!j.is_object()) throw ConfigError("section '" + section + "' must be an object");
  for (const auto& [k, v] : j.items()) {
    (void)v;
    if (std::none_of(keys.begin(), keys.end(), [&](const char* a) { return k == a; }))
      throw ConfigError("unknown key '" + section + "." + k + "'");
  }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

std::string RunConfig::to_json() const {
  json j;
  j["model"] = {{"visual_arch", avu::to_string(model.visual_arch)},
                {"audio_arch", avu::to_string(model.audio_arch)},
                {"embed_dim", model.embed_dim},
                {"proj_dim", model.proj_dim},
                {"decoder_depth", model.decoder_depth},
                {"temperature", model.temperature},
                {"pretrained_visual", model.pretrained_visual},
                {"pretrained_visual_path", model.pretrained_visual_path},
                {"compact_width", model.compact_width},
                {"image_size", model.image_size},
                {"spectrogram_size", model.spectrogram_size}};
  j["train"] = {{"objectives", train.objectives.to_string()},
                {"epochs", train.epochs},
                {"batch_size", train.batch_size},
                {"learning_rate", train.learning_rate},
                {"beta1", train.beta1},
                {"beta2", train.beta2},
                {"epsilon", train.epsilon},
                {"alpha", train.alpha},
                {"seed", train.seed},
                {"device", train.device},
                {"keep_epoch_checkpoints", train.keep_epoch_checkpoints}};
  const DspConfig& d = data.dsp;
  j["data"] = {{"image_size", data.image_size},
               {"mean", data.mean},
               {"stddev", data.stddev},
               {"dsp",
                {{"sample_rate", d.sample_rate},
                 {"clip_seconds", d.clip_seconds},
                 {"win_length", d.win_length},
                 {"hop_length", d.hop_length},
                 {"fft_size", d.fft_size},
                 {"window", avu::to_string(d.window)},
                 {"log_epsilon", d.log_epsilon},
                 {"mask_rule", avu::to_string(d.mask_rule)}}}};
  return j.dump(2);
}

RunConfig RunConfig::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  RunConfig c;
  try {
    reject_unknown(j, {"model", "train", "data"}, "config");
    if (j.contains("model")) {
      const json& m = j["model"];
      reject_unknown(m, {"visual_arch", "audio_arch", "embed_dim", "proj_dim",
                         "decoder_depth", "temperature", "pretrained_visual",
                         "pretrained_visual_path", "compact_width",
                         "image_size", "spectrogram_size"},
                     "model");
      if (m.contains("visual_arch"))
        c.model.visual_arch = arch_from_string(m["visual_arch"].get<std::string>());
      if (m.contains("audio_arch"))
        c.model.audio_arch = arch_from_string(m["audio_arch"].get<std::string>());
      read(m, "embed_dim", c.model.embed_dim);
      read(m, "proj_dim", c.model.proj_dim);
      read(m, "decoder_depth", c.model.decoder_depth);
      read(m, "temperature", c.model.temperature);
      read(m, "pretrained_visual", c.model.pretrained_visual);
      read(m, "pretrained_visual_path", c.model.pretrained_visual_path);
      read(m, "compact_width", c.model.compact_width);
      read(m, "image_size", c.model.image_size);
      read(m, "spectrogram_size", c.model.spectrogram_size);
    }
    if (j.contains("train")) {
      const json& t = j["train"];
      reject_unknown(t, {"objectives", "epochs", "batch_size", "learning_rate",
                         "beta1", "beta2", "epsilon", "alpha", "seed", "device",
                         "keep_epoch_checkpoints"},
                     "train");
      if (t.contains("objectives"))
        c.train.objectives = Objectives::parse(t["objectives"].get<std::string>());
      read(t, "epochs", c.train.epochs);
      read(t, "batch_size", c.train.batch_size);
      read(t, "learning_rate", c.train.learning_rate);
      read(t, "beta1", c.train.beta1);
      read(t, "beta2", c.train.beta2);
      read(t, "epsilon", c.train.epsilon);
      read(t, "alpha", c.train.alpha);
      read(t, "seed", c.train.seed);
      read(t, "device", c.train.device);
      read(t, "keep_epoch_checkpoints", c.train.keep_epoch_checkpoints);
    }
    if (j.contains("data")) {
      const json& d = j["data"];
      reject_unknown(d, {"image_size", "mean", "stddev", "dsp"}, "data");
      read(d, "image_size", c.data.image_size);
      read(d, "mean", c.data.mean);
      read(d, "stddev", c.data.stddev);
      if (d.contains("dsp")) {
        const json& s = d["dsp"];
        reject_unknown(s, {"sample_rate", "clip_seconds", "win_length",
                           "hop_length", "fft_size", "window", "log_epsilon",
                           "mask_rule"},
                       "data.dsp");
        DspConfig& p = c.data.dsp;
        read(s, "sample_rate", p.sample_rate);
        read(s, "clip_seconds", p.clip_seconds);
        read(s, "win_length", p.win_length);
        read(s, "hop_length", p.hop_length);
        read(s, "fft_size", p.fft_size);
        if (s.contains("window"))
          p.window = window_kind_from_string(s["window"].get<std::string>());
        read(s, "log_epsilon", p.log_epsilon);
        if (s.contains("mask_rule"))
          p.mask_rule = mask_rule_from_string(s["mask_rule"].get<std::string>());
      }
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad config value: ") + e.what());
  }
  return c;
}

RunConfig RunConfig::load(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config '" + path.string() + "'");
  std::stringstream ss;
  ss << is.rdbuf();
  return from_json(ss.str());
}

std::set<Component> active_components(const Objectives& o) {
  std::set<Component> s;
  if (o.any()) s = {Component::kAudioEncoder, Component::kVisualEncoder};
  if (o.cl)
    s.insert({Component::kHeadAGlb, Component::kHeadALoc, Component::kHeadVGlb,
              Component::kHeadVLoc});
  if (o.mas) s.insert(Component::kDecoder);
  if (o.mva) s.insert({Component::kHeadAMva, Component::kHeadVMva});
  return s;
}

std::string resolve_device(const std::string& hint) {
  std::string device = hint.empty() ? "cpu" : hint;
  if (const char* env = std::getenv("AVU_DEVICE"); env && *env) device = env;
  if (device != "cpu")
    throw ConfigError("device '" + device + "' is not available (cpu only)");
  return device;
}

std::shared_ptr<const std::vector<LoadedSample>> load_dataset(
    const Manifest& manifest, const DataConfig& cfg) {
  static std::mutex mu;
  static std::map<std::string, std::shared_ptr<const std::vector<LoadedSample>>> cache;
  std::string key = std::to_string(cfg.image_size) + "|" +
                    std::to_string(cfg.dsp.sample_rate) + "|" +
                    std::to_string(cfg.dsp.clip_seconds);
  for (int c = 0; c < 3; ++c)
    key += "|" + std::to_string(cfg.mean[c]) + "," + std::to_string(cfg.stddev[c]);
  for (const auto& r : manifest.records)
    key += "\n" + r.id + "\t" + r.audio_path.string() + "\t" + r.image_path.string();
  std::lock_guard<std::mutex> lock(mu);
  if (auto it = cache.find(key); it != cache.end()) return it->second;
  auto samples = std::make_shared<std::vector<LoadedSample>>();
  samples->reserve(manifest.size());
  for (const auto& r : manifest.records)
    samples->push_back(load_sample(r, cfg, CropMode::kCenter));
  cache[key] = samples;
  return samples;
}

Trainer::Trainer(AvModel& model, const TrainConfig& cfg, const DataConfig& data)
    : model_(model),
      cfg_(cfg),
      data_(data),
      adam_(nn::AdamConfig{cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon}) {
  cfg_.validate();
  params_ = model_.parameters();
  const auto active = active_components(cfg_.objectives);
  for (const auto* p : params_)
    active_.push_back(active.count(model_.component_of(p->name)) > 0);
}

LossBundle Trainer::step(const TrainingBatch& batch) {
  const LossBundle loss = compute_gradients(batch);
  adam_.step(params_, active_);
  return loss;
}

namespace {

Eigen::MatrixXf normalized_grad(const Eigen::MatrixXf& raw,
                                const Eigen::MatrixXd& d_normalized) {
  return nn::l2_normalize_backward(raw, d_normalized.cast<float>());
}

}  // namespace

LossBundle Trainer::compute_gradients(const TrainingBatch& batch) {
  const auto& o = cfg_.objectives;
  const int b = static_cast<int>(batch.size());
  const double tau = model_.config().temperature;
  const bool base_audio = o.cl || o.mva;
  for (auto* p : params_) p->zero_grad();

  FeatureMap vis = model_.visual_input(batch.base_images, b);
  if (o.mva) vis = nn::concat_batch(vis, model_.visual_input(batch.mixed_images, b));

  std::vector<Eigen::ArrayXXd> logs;
  logs.reserve(2 * static_cast<std::size_t>(b));
  if (base_audio)
    for (const auto& s : batch.base_spectra) logs.push_back(log_magnitude(s, data_.dsp));
  if (o.mas)
    for (const auto& s : batch.mixture_spectra)
      logs.push_back(log_magnitude(s, data_.dsp));
  std::vector<const Eigen::ArrayXXd*> log_ptrs;
  for (const auto& l : logs) log_ptrs.push_back(&l);
  const FeatureMap aud = model_.audio_input(log_ptrs);

  Encoder& venc = model_.visual_encoder();
  Encoder& aenc = model_.audio_encoder();
  const FeatureMap grid = venc.forward(vis);
  const nn::GlobalMax vpool = nn::global_max_pool(grid);
  const FeatureMap aout = aenc.forward(aud);
  const nn::GlobalMax apool = nn::global_max_pool(aout);
  const int cells = static_cast<int>(grid.pixels());
  const Eigen::Index base_cols = static_cast<Eigen::Index>(b) * cells;

  FeatureMap d_grid(static_cast<int>(grid.channels()), grid.n, grid.h, grid.w);
  FeatureMap d_aout(static_cast<int>(aout.channels()), aout.n, aout.h, aout.w);
  Eigen::MatrixXf d_vpool = Eigen::MatrixXf::Zero(vpool.values.rows(), vpool.values.cols());
  Eigen::MatrixXf d_apool = Eigen::MatrixXf::Zero(apool.values.rows(), apool.values.cols());
  std::array<FeatureMap, 3> d_skips;
  double cl = 0.0, mas = 0.0, mva = 0.0;

  if (o.cl) {
    nn::Linear& hag = model_.head(Component::kHeadAGlb);
    nn::Linear& hal = model_.head(Component::kHeadALoc);
    nn::Linear& hvg = model_.head(Component::kHeadVGlb);
    nn::Linear& hvl = model_.head(Component::kHeadVLoc);
    const Eigen::MatrixXf ag = hag.forward(apool.values.leftCols(b));
    const Eigen::MatrixXf al = hal.forward(apool.values.leftCols(b));
    const Eigen::MatrixXf vg = hvg.forward(vpool.values.leftCols(b));
    const Eigen::MatrixXf vl = hvl.forward(grid.x.leftCols(base_cols));
    CorrespondenceGrad<double> g;
    cl = cl_loss<double>(nn::l2_normalize(ag).cast<double>(),
                         nn::l2_normalize(al).cast<double>(),
                         nn::l2_normalize(vg).cast<double>(),
                         nn::l2_normalize(vl).cast<double>(), cells, tau, &g);
    d_apool.leftCols(b) += hag.backward(normalized_grad(ag, g.a_glb));
    d_apool.leftCols(b) += hal.backward(normalized_grad(al, g.a_loc));
    d_vpool.leftCols(b) += hvg.backward(normalized_grad(vg, g.v_glb));
    d_grid.x.leftCols(base_cols) += hvl.backward(normalized_grad(vl, g.v_loc));
  }

  if (o.mva) {
    nn::Linear& ham = model_.head(Component::kHeadAMva);
    nn::Linear& hvm = model_.head(Component::kHeadVMva);
    const Eigen::MatrixXf am = ham.forward(apool.values.leftCols(b));
    const Eigen::MatrixXf vm = hvm.forward(grid.x.middleCols(base_cols, base_cols));
    const Eigen::MatrixXd ai = nn::l2_normalize(am).cast<double>();
    Eigen::MatrixXd aj(ai.rows(), b);
    for (int i = 0; i < b; ++i) aj.col(i) = ai.col(batch.partner[i]);
    MvaGrad<double> g;
    mva = mva_loss<double>(nn::l2_normalize(vm).cast<double>(), ai, aj, cells,
                           batch.alpha, tau, &g);
    Eigen::MatrixXd da = g.a_i;
    for (int i = 0; i < b; ++i) da.col(batch.partner[i]) += g.a_j.col(i);
    d_apool.leftCols(b) += ham.backward(normalized_grad(am, da));
    d_grid.x.middleCols(base_cols, base_cols) +=
        hvm.backward(normalized_grad(vm, g.v_mix));
  }

  if (o.mas) {
    const int first = base_audio ? b : 0;
    const FeatureMap bottleneck = aout.slice(first, b);
    std::array<FeatureMap, 3> skips;
    for (int k = 0; k < 3; ++k) skips[k] = aenc.skips()[k].slice(first, b);
    SeparationDecoder& dec = model_.decoder();
    const FeatureMap mask = dec.forward(bottleneck, skips, vpool.values.leftCols(b));
    const Eigen::Index bins = batch.target_masks[0].values.rows();
    const Eigen::Index frames = batch.target_masks[0].values.cols();
    const Eigen::MatrixXd ry = interpolation_matrix<double>(bins, mask.h);
    const Eigen::MatrixXd rx = interpolation_matrix<double>(frames, mask.w);
    FeatureMap d_mask(1, b, mask.h, mask.w);
    const Eigen::Index hw = mask.pixels();
    for (int i = 0; i < b; ++i) {
      // Column-major (w x h) view of a row-major grid is its transpose.
      const Eigen::MatrixXd m =
          Eigen::Map<const Eigen::MatrixXf>(mask.x.data() + i * hw, mask.w, mask.h)
              .transpose()
              .cast<double>();
      const Eigen::ArrayXXd full = (ry * m * rx.transpose()).array();
      Eigen::ArrayXXd g;
      mas += separation_loss<double>(full, batch.target_masks[i].values, &g) / b;
      const Eigen::MatrixXd dm = ry.transpose() * g.matrix() * rx / b;
      Eigen::Map<Eigen::MatrixXf>(d_mask.x.data() + i * hw, mask.w, mask.h) =
          dm.transpose().cast<float>();
    }
    std::array<FeatureMap, 3> d_sk;
    Eigen::MatrixXf d_cond;
    const FeatureMap d_bottleneck = dec.backward(d_mask, d_sk, d_cond);
    const Eigen::Index bhw = aout.pixels();
    d_aout.x.middleCols(first * bhw, b * bhw) += d_bottleneck.x;
    d_vpool.leftCols(b) += d_cond;
    for (int k = 0; k < 3; ++k) {
      const FeatureMap& s = aenc.skips()[k];
      d_skips[k] = FeatureMap(static_cast<int>(s.channels()), s.n, s.h, s.w);
      d_skips[k].x.middleCols(first * s.pixels(), b * s.pixels()) = d_sk[k].x;
    }
  }

  nn::global_max_pool_backward(vpool, d_vpool, d_grid);
  venc.backward(d_grid, {});
  nn::global_max_pool_backward(apool, d_apool, d_aout);
  aenc.backward(d_aout, d_skips);
  return total_loss(cl, mas, mva);
}

namespace {

double now_seconds() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

std::string utc_timestamp() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

RunLog::RunLog(const fs::path& path, bool append) : path_(path), start_(now_seconds()) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, append ? std::ios::app : std::ios::trunc);
  if (!os) throw Error("cannot write run log '" + path.string() + "'");
}

void RunLog::write(const std::string& type, const std::string& json_body) {
  json j = json_body.empty() ? json::object() : json::parse(json_body);
  j["type"] = type;
  j["time"] = now_seconds() - start_;
  j["timestamp"] = utc_timestamp();
  std::ofstream os(path_, std::ios::app);
  os << j.dump() << '\n';
  if (!os) throw Error("cannot append to run log '" + path_.string() + "'");
}

std::vector<std::string> read_runlog(const fs::path& path, bool strip_time) {
  std::ifstream is(path);
  if (!is) throw InputError("cannot open run log '" + path.string() + "'");
  std::vector<std::string> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (!strip_time) {
      out.push_back(line);
      continue;
    }
    json j = json::parse(line);
    j.erase("time");
    j.erase("timestamp");
    out.push_back(j.dump());
  }
  return out;
}

namespace {

std::string manifest_hash(const Manifest& m) {
  std::string text = m.labeled ? "labeled\n" : "unlabeled\n";
  for (const auto& r : m.records) {
    text += r.id + "\t" + r.audio_path.filename().string() + "\t" +
            r.image_path.filename().string();
    if (r.label) text += "\t" + std::to_string(*r.label);
    text += "\n";
  }
  const std::string blob = "blob " + std::to_string(text.size()) + '\0' + text;
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_Digest(blob.data(), blob.size(), digest, &len, EVP_sha1(), nullptr);
  static const char* kHex = "0123456789abcdef";
  std::string hex;
  for (unsigned int i = 0; i < len; ++i) {
    hex += kHex[digest[i] >> 4];
    hex += kHex[digest[i] & 15];
  }
  return hex;
}

std::uint64_t epoch_seed(std::uint64_t seed, int epoch) {
  std::uint64_t x = seed * 0x9e3779b97f4a7c15ULL + static_cast<std::uint64_t>(epoch);
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

json loss_json(const LossBundle& l) {
  return {{"cl", l.cl}, {"mas", l.mas}, {"mva", l.mva}, {"total", l.total}};
}

std::string rng_string(const std::mt19937_64& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

}  // namespace

TrainResult train(const RunConfig& cfg, const Manifest& manifest,
                  const fs::path& out_dir, const TrainOptions& opts) {
  cfg.validate();
  resolve_device(cfg.train.device);
  if (manifest.size() < 2)
    throw InputError("training needs at least two samples");
  if (opts.resume && opts.init_from)
    throw ConfigError("resume and init_from are mutually exclusive");
  fs::create_directories(out_dir);

  AvModel model(cfg.model, cfg.train.seed);
  if (cfg.model.pretrained_visual) {
    const Checkpoint pre = load_checkpoint(cfg.model.pretrained_visual_path);
    for (auto* p : model.parameters(Component::kVisualEncoder)) {
      const auto it = pre.params.find(p->name);
      if (it == pre.params.end() || it->second.rows() != p->value.rows() ||
          it->second.cols() != p->value.cols())
        throw ConfigError("pretrained visual checkpoint does not match '" +
                          p->name + "'");
      p->value = it->second;
    }
  }
  Trainer trainer(model, cfg.train, cfg.data);
  std::set<std::string> trained;
  for (Component c : active_components(cfg.train.objectives))
    trained.insert(to_string(c));

  int start_epoch = 0;
  std::int64_t step = 0;
  if (opts.resume) {
    const Checkpoint ck = load_checkpoint(*opts.resume);
    if (!restore_parameters(model, ck).empty())
      throw ConfigError("resume checkpoint is missing model tensors");
    restore_optimizer(trainer.optimizer(), ck);
    start_epoch = ck.epoch;
    step = ck.step;
    trained.insert(ck.trained_components.begin(), ck.trained_components.end());
  } else if (opts.init_from) {
    const Checkpoint ck = load_checkpoint(*opts.init_from);
    const RunConfig src = RunConfig::from_json(ck.config_json);
    ModelConfig a = src.model, b = cfg.model;
    a.pretrained_visual = b.pretrained_visual = false;
    a.pretrained_visual_path = b.pretrained_visual_path = "";
    a.temperature = b.temperature;
    if (!(a == b))
      throw ConfigError("architecture mismatch between '" +
                        opts.init_from->string() + "' and the run config");
    restore_parameters(model, ck);
    trained.insert(ck.trained_components.begin(), ck.trained_components.end());
  }

  const fs::path log_path = opts.log_path.value_or(out_dir / "runlog.jsonl");
  RunLog log(log_path, opts.resume.has_value() || opts.log_path.has_value());
  {
    json rec;
    rec["stage"] = opts.stage;
    rec["config"] = json::parse(cfg.to_json());
    rec["manifest_hash"] = manifest_hash(manifest);
    rec["n_samples"] = manifest.size();
    rec["start_epoch"] = start_epoch;
    if (opts.resume) rec["resumed_from"] = opts.resume->filename().string();
    if (opts.init_from) rec["initialized_from"] = opts.init_from->filename().string();
    log.write("config", rec.dump());
  }

  const auto data = load_dataset(manifest, cfg.data);
  const std::size_t n = data->size();
  const std::size_t bsz = std::min<std::size_t>(cfg.train.batch_size, n);

  TrainResult result;
  result.run_log = log_path;
  result.last_checkpoint = out_dir / "last.ckpt";
  result.best_checkpoint = out_dir / "best.ckpt";
  std::optional<double> best_f1;
  std::mt19937_64 rng(epoch_seed(cfg.train.seed, start_epoch));
  bool first = true;

  auto save = [&](const fs::path& path, int epoch) {
    Checkpoint ck = capture(model, &trainer.optimizer());
    ck.config_json = cfg.to_json();
    ck.epoch = epoch;
    ck.step = step;
    ck.rng_state = rng_string(rng);
    ck.trained_components = trained;
    save_checkpoint(path, ck);
  };

  for (int epoch = start_epoch + 1; epoch <= cfg.train.epochs; ++epoch) {
    rng.seed(epoch_seed(cfg.train.seed, epoch));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);

    LossBundle sum;
    int batches = 0;
    for (std::size_t start = 0; start + 2 <= n; start += bsz) {
      const std::size_t count = std::min(bsz, n - start);
      std::vector<const LoadedSample*> samples;
      for (std::size_t k = 0; k < count; ++k) samples.push_back(&(*data)[order[start + k]]);
      const TrainingBatch batch = make_training_batch(
          std::span<const LoadedSample* const>(samples), cfg.train.alpha, rng,
          cfg.data.dsp);
      LossBundle loss;
      try {
        loss = trainer.step(batch);
      } catch (const DivergenceError& e) {
        save(out_dir / "diverged.ckpt", epoch - 1);
        log.write("diverged", json{{"step", step + 1}, {"epoch", epoch},
                                   {"error", e.what()}}.dump());
        throw;
      }
      ++step;
      if (first) {
        result.first_step = loss;
        first = false;
      }
      sum.cl += loss.cl;
      sum.mas += loss.mas;
      sum.mva += loss.mva;
      sum.total += loss.total;
      ++batches;
      json rec = loss_json(loss);
      rec["step"] = step;
      rec["epoch"] = epoch;
      log.write("step", rec.dump());
    }

    EpochSummary summary;
    summary.epoch = epoch;
    if (batches > 0)
      summary.mean = {sum.cl / batches, sum.mas / batches, sum.mva / batches,
                      sum.total / batches};
    json rec;
    rec["epoch"] = epoch;
    rec["mean"] = loss_json(summary.mean);
    rec["steps"] = step;

    if (opts.validation) {
      EvalOptions eo;
      eo.tasks = {Task::kLocalization, Task::kRecognition};
      const MetricsReport r =
          evaluate(model, {}, *opts.validation, cfg.data, eo);
      summary.val_f1 = r.f1;
      json v = json::parse(r.to_json());
      v.erase("per_sample");
      rec["validation"] = std::move(v);
    }

    save(result.last_checkpoint, epoch);
    if (cfg.train.keep_epoch_checkpoints) {
      char name[32];
      std::snprintf(name, sizeof(name), "epoch_%03d.ckpt", epoch);
      fs::copy_file(result.last_checkpoint, out_dir / name,
                    fs::copy_options::overwrite_existing);
      rec["checkpoint"] = name;
    }
    const bool improved =
        !opts.validation ||
        (summary.val_f1 && (!best_f1 || *summary.val_f1 > *best_f1));
    if (improved) {
      if (summary.val_f1) best_f1 = summary.val_f1;
      fs::copy_file(result.last_checkpoint, result.best_checkpoint,
                    fs::copy_options::overwrite_existing);
      rec["best"] = true;
    }
    log.write("epoch", rec.dump());
    result.epochs.push_back(summary);
    if (!opts.quiet)
      std::cerr << "epoch " << epoch << "/" << cfg.train.epochs
                << "  cl " << summary.mean.cl << "  mas " << summary.mean.mas
                << "  mva " << summary.mean.mva << "  total " << summary.mean.total
                << (summary.val_f1 ? "  val_f1 " + std::to_string(*summary.val_f1) : "")
                << "\n";
  }

  if (result.epochs.empty()) {
    save(result.last_checkpoint, start_epoch);
    fs::copy_file(result.last_checkpoint, result.best_checkpoint,
                  fs::copy_options::overwrite_existing);
  }
  log.write("end", json{{"stage", opts.stage}, {"steps", step},
                        {"epochs", cfg.train.epochs}}.dump());
  return result;
}

TrainResult pretrain_finetune(const RunConfig& pre, const Manifest& pre_set,
                              const RunConfig& fine, const Manifest& fine_set,
                              const fs::path& out_dir) {
  ModelConfig a = pre.model, b = fine.model;
  a.pretrained_visual = b.pretrained_visual = false;
  a.pretrained_visual_path = b.pretrained_visual_path = "";
  a.temperature = b.temperature;
  if (!(a == b))
    throw ConfigError("architecture mismatch between pretrain and finetune configs");
  fs::create_directories(out_dir);
  const fs::path log_path = out_dir / "runlog.jsonl";
  fs::remove(log_path);

  TrainOptions first;
  first.stage = "pretrain";
  first.log_path = log_path;
  const TrainResult p = train(pre, pre_set, out_dir / "pretrain", first);

  TrainOptions second;
  second.stage = "finetune";
  second.log_path = log_path;
  second.init_from = p.last_checkpoint;
  return train(fine, fine_set, out_dir / "finetune", second);
}

}  // namespace avu

// Copyright 2026 The avunify Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef AVU_PIPELINE_H_
#define AVU_PIPELINE_H_

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "avu/data.h"
#include "avu/metrics.h"
#include "avu/model.h"
#include "avu/nn.h"
#include "avu/objectives.h"

namespace avu {

struct Objectives {
  bool cl = true;
  bool mas = true;
  bool mva = true;

  bool any() const { return cl || mas || mva; }
  // "cl+mas+mva" style; parse accepts ',' or '+' separators.
  std::string to_string() const;
  static Objectives parse(const std::string& text);
  bool operator==(const Objectives&) const = default;
};

struct TrainConfig {
  Objectives objectives;
  int epochs = 20;
  int batch_size = 128;
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double alpha = 0.5;
  std::uint64_t seed = 0;
  std::string device = "cpu";
  // Keep epoch_NNN.ckpt files in addition to last.ckpt.
  bool keep_epoch_checkpoints = true;

  void validate() const;
  bool operator==(const TrainConfig&) const = default;
};

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  DataConfig data;

  // Settings sized for a few minutes of single-core CPU training.
  static RunConfig desk();

  std::string to_json() const;
  // Keys absent from the document keep their defaults; unknown keys are
  // rejected.
  static RunConfig from_json(const std::string& text);
  static RunConfig load(const std::filesystem::path& path);
  void validate() const;
};

// Components trained by each enabled objective.
std::set<Component> active_components(const Objectives& o);

// Device hint from AVU_DEVICE (default "cpu"); anything else is a
// ConfigError.
std::string resolve_device(const std::string& hint);

// Decoded samples of a manifest, memoized per (manifest, data config) for
// the lifetime of the process.
std::shared_ptr<const std::vector<LoadedSample>> load_dataset(
    const Manifest& manifest, const DataConfig& cfg);

// One optimization step on a batch; returns the loss bundle with disabled
// objectives reported as exactly 0.
class Trainer {
 public:
  Trainer(AvModel& model, const TrainConfig& cfg, const DataConfig& data);

  LossBundle step(const TrainingBatch& batch);
  // Forward and backward without the parameter update; gradients are left
  // in the model's Parameter::grad.
  LossBundle compute_gradients(const TrainingBatch& batch);

  nn::Adam& optimizer() { return adam_; }

 private:
  AvModel& model_;
  TrainConfig cfg_;
  DataConfig data_;
  nn::Adam adam_;
  std::vector<nn::Parameter*> params_;
  std::vector<bool> active_;
};

// JSON-lines run log. Every record carries "type" and wall-clock "time"
// (seconds since the log was opened) plus "timestamp" (UTC ISO-8601).
class RunLog {
 public:
  RunLog(const std::filesystem::path& path, bool append);
  void write(const std::string& type, const std::string& json_body);
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  double start_ = 0.0;
};

// Log records with the time fields removed, for reproducibility checks.
std::vector<std::string> read_runlog(const std::filesystem::path& path,
                                     bool strip_time);

struct TrainOptions {
  std::optional<std::filesystem::path> resume;     // full state
  std::optional<std::filesystem::path> init_from;  // weights only
  const Manifest* validation = nullptr;            // best-by-F1 selection
  std::optional<std::filesystem::path> log_path;   // default out_dir/runlog.jsonl
  std::string stage = "train";
  bool quiet = true;
};

struct EpochSummary {
  int epoch = 0;
  LossBundle mean;
  std::optional<double> val_f1;
};

struct TrainResult {
  std::filesystem::path last_checkpoint;
  std::filesystem::path best_checkpoint;
  std::filesystem::path run_log;
  std::vector<EpochSummary> epochs;
  LossBundle first_step;
};

TrainResult train(const RunConfig& cfg, const Manifest& manifest,
                  const std::filesystem::path& out_dir,
                  const TrainOptions& opts = {});

// Trains on the first corpus, then trains on the second starting from the
// resulting weights with a fresh optimizer. Both stages log to
// out_dir/runlog.jsonl.
TrainResult pretrain_finetune(const RunConfig& pre, const Manifest& pre_set,
                              const RunConfig& fine, const Manifest& fine_set,
                              const std::filesystem::path& out_dir);

enum class Task { kLocalization, kSeparation, kRecognition };
std::string to_string(Task t);
std::set<Task> parse_tasks(const std::string& text);

struct EvalOptions {
  std::set<Task> tasks{Task::kLocalization, Task::kSeparation,
                       Task::kRecognition};
  // Separation uses the ideal binary mask instead of the model's.
  bool ideal_mask = false;
  std::uint64_t pair_seed = 0;
  int batch_size = 32;
  ThresholdRule threshold_rule = ThresholdRule::kNormalizedHalf;
  double quantile = 0.5;
};

// Partner for each evaluation sample: seeded, never itself and, when labels
// exist, of a different class.
std::vector<std::size_t> evaluation_partners(const Manifest& manifest,
                                             std::uint64_t seed);

MetricsReport evaluate(const std::filesystem::path& checkpoint,
                       const Manifest& manifest, const EvalOptions& opts);
MetricsReport evaluate(AvModel& model, const std::set<Component>& missing,
                       const Manifest& manifest, const DataConfig& data,
                       const EvalOptions& opts);

enum class AblationAxis { kObjectives, kDepth, kAlpha };
std::string to_string(AblationAxis a);
AblationAxis ablation_axis_from_string(const std::string& name);

struct AblationPoint {
  std::string label;
  RunConfig config;
};
std::vector<AblationPoint> ablation_grid(AblationAxis axis,
                                         const RunConfig& base);

struct AblationOptions {
  std::vector<std::uint64_t> seeds{0};
  EvalOptions eval;
};

// Trains and evaluates every grid point for every seed and writes
// out_dir/ablation.csv; returns its path.
std::filesystem::path run_ablation(AblationAxis axis, const RunConfig& base,
                                   const Manifest& train_set,
                                   const Manifest& test_set,
                                   const std::filesystem::path& out_dir,
                                   const AblationOptions& opts = {});

// One SVG per metric column of an ablation CSV (seed means per grid
// point). Returns the written files.
std::vector<std::filesystem::path> plot_ablation(
    const std::filesystem::path& csv, const std::filesystem::path& out_dir);

}  // namespace avu

#endif  // AVU_PIPELINE_H_

// Copyright 2026 The avunify Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// avu: synthetic data, training, evaluation, ablation grids and plots.

#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "avu/errors.h"
#include "avu/pipeline.h"

namespace {

namespace fs = std::filesystem;

constexpr int kUsageError = 2;

struct Overrides {
  std::optional<int> epochs, batch_size, depth;
  std::optional<double> lr, alpha;
  std::optional<std::uint64_t> seed;
  std::string objectives;
};

void add_run_options(CLI::App* cmd, std::string& config, std::string& preset,
                     Overrides& o) {
  cmd->add_option("--config", config, "JSON run configuration")->check(CLI::ExistingFile);
  cmd->add_option("--preset", preset, "Base settings: desk or reference")
      ->check(CLI::IsMember({"desk", "reference"}));
  cmd->add_option("--epochs", o.epochs, "Training epochs");
  cmd->add_option("--batch-size", o.batch_size, "Batch size");
  cmd->add_option("--lr", o.lr, "Learning rate");
  cmd->add_option("--alpha", o.alpha, "Visual mixing coefficient");
  cmd->add_option("--depth", o.depth, "Decoder depth (4, 8, 12, 16)");
  cmd->add_option("--seed", o.seed, "Random seed");
  cmd->add_option("--objectives", o.objectives, "Enabled objectives, e.g. cl+mas+mva");
}

avu::RunConfig build_config(const std::string& config, const std::string& preset,
                            const Overrides& o) {
  avu::RunConfig c = config.empty()
                         ? (preset == "reference" ? avu::RunConfig{} : avu::RunConfig::desk())
                         : avu::RunConfig::load(config);
  if (o.epochs) c.train.epochs = *o.epochs;
  if (o.batch_size) c.train.batch_size = *o.batch_size;
  if (o.lr) c.train.learning_rate = *o.lr;
  if (o.alpha) c.train.alpha = *o.alpha;
  if (o.depth) c.model.decoder_depth = *o.depth;
  if (o.seed) c.train.seed = *o.seed;
  if (!o.objectives.empty()) c.train.objectives = avu::Objectives::parse(o.objectives);
  c.validate();
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Unified audio-visual learning: localization, separation, recognition"};
  app.require_subcommand(1);

  // synth
  avu::SyntheticSpec spec;
  std::string synth_out;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic paired corpus");
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--classes", spec.n_classes, "Number of classes");
  synth->add_option("--per-class", spec.samples_per_class, "Samples per class");
  synth->add_option("--seed", spec.seed, "Generator seed");
  synth->add_option("--image-size", spec.image_size, "Image side in pixels");
  synth->add_option("--snr", spec.snr_db, "Tone-to-noise ratio in dB");

  // train
  std::string train_manifest, train_out, train_config, train_preset = "desk",
              val_manifest, init_ckpt, resume_ckpt;
  bool verbose = false;
  Overrides train_over;
  auto* train = app.add_subcommand("train", "Train a model");
  train->add_option("--manifest", train_manifest, "Training manifest")
      ->required()->check(CLI::ExistingFile);
  train->add_option("--out", train_out, "Run directory")->required();
  add_run_options(train, train_config, train_preset, train_over);
  train->add_option("--val-manifest", val_manifest, "Validation manifest (best-by-F1)")
      ->check(CLI::ExistingFile);
  auto* init_opt = train->add_option("--init", init_ckpt, "Initialize weights from a checkpoint")
                       ->check(CLI::ExistingFile);
  train->add_option("--resume", resume_ckpt, "Resume from a checkpoint")
      ->check(CLI::ExistingFile)->excludes(init_opt);
  train->add_flag("-v,--verbose", verbose, "Print per-epoch losses");

  // eval
  std::string eval_ckpt, eval_manifest, eval_tasks = "loc,sep,recog", eval_out,
              eval_csv, threshold = "half";
  avu::EvalOptions eval_opts;
  auto* eval = app.add_subcommand("eval", "Evaluate one checkpoint on all tasks");
  eval->add_option("--checkpoint", eval_ckpt, "Checkpoint file")
      ->required()->check(CLI::ExistingFile);
  eval->add_option("--manifest", eval_manifest, "Evaluation manifest")
      ->required()->check(CLI::ExistingFile);
  eval->add_option("--tasks", eval_tasks, "Comma list of loc, sep, recog");
  eval->add_option("--out", eval_out, "Also write the JSON report here");
  eval->add_option("--csv", eval_csv, "Write per-sample rows as CSV");
  eval->add_flag("--ideal-mask", eval_opts.ideal_mask, "Separate with the ideal binary mask");
  eval->add_option("--pair-seed", eval_opts.pair_seed, "Seed of the separation pairing");
  eval->add_option("--threshold", threshold, "Localization threshold rule: half or quantile")
      ->check(CLI::IsMember({"half", "quantile"}));
  eval->add_option("--quantile", eval_opts.quantile, "Quantile for --threshold quantile");

  // ablate
  std::string axis, ab_train, ab_test, ab_out, ab_config, ab_preset = "desk",
              seeds = "0";
  Overrides ab_over;
  auto* ablate = app.add_subcommand("ablate", "Train and evaluate an ablation grid");
  ablate->add_option("--axis", axis, "objectives, depth or alpha")
      ->required()->check(CLI::IsMember({"objectives", "depth", "alpha"}));
  ablate->add_option("--train-manifest", ab_train, "Training manifest")
      ->required()->check(CLI::ExistingFile);
  ablate->add_option("--test-manifest", ab_test, "Evaluation manifest")
      ->required()->check(CLI::ExistingFile);
  ablate->add_option("--out", ab_out, "Output directory")->required();
  ablate->add_option("--seeds", seeds, "Comma list of seeds");
  add_run_options(ablate, ab_config, ab_preset, ab_over);

  // plot
  std::string plot_csv, plot_out;
  auto* plot = app.add_subcommand("plot", "Draw one SVG per metric from an ablation CSV");
  plot->add_option("--csv", plot_csv, "ablation.csv")->required()->check(CLI::ExistingFile);
  plot->add_option("--out", plot_out, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsageError;
  }

  try {
    if (*synth) {
      const avu::Manifest m = avu::generate_synthetic(spec, synth_out);
      std::cout << "wrote " << m.size() << " samples to "
                << (fs::path(synth_out) / "manifest.jsonl").string() << "\n";
    } else if (*train) {
      const avu::RunConfig cfg = build_config(train_config, train_preset, train_over);
      const avu::Manifest m = avu::read_manifest(train_manifest);
      avu::TrainOptions opts;
      opts.quiet = !verbose;
      std::optional<avu::Manifest> val;
      if (!val_manifest.empty()) {
        val = avu::read_manifest(val_manifest);
        opts.validation = &*val;
      }
      if (!init_ckpt.empty()) opts.init_from = init_ckpt;
      if (!resume_ckpt.empty()) opts.resume = resume_ckpt;
      const avu::TrainResult r = avu::train(cfg, m, train_out, opts);
      std::cout << "last checkpoint: " << r.last_checkpoint.string() << "\n"
                << "best checkpoint: " << r.best_checkpoint.string() << "\n"
                << "run log: " << r.run_log.string() << "\n";
    } else if (*eval) {
      eval_opts.tasks = avu::parse_tasks(eval_tasks);
      eval_opts.threshold_rule = threshold == "quantile"
                                     ? avu::ThresholdRule::kQuantile
                                     : avu::ThresholdRule::kNormalizedHalf;
      const avu::MetricsReport r =
          avu::evaluate(eval_ckpt, avu::read_manifest(eval_manifest), eval_opts);
      const std::string text = r.to_json();
      std::cout << text << "\n";
      if (!eval_out.empty()) std::ofstream(eval_out) << text << "\n";
      if (!eval_csv.empty()) avu::write_per_sample_csv(eval_csv, r);
      return r.task_errors.empty() ? 0 : 1;
    } else if (*ablate) {
      const avu::RunConfig cfg = build_config(ab_config, ab_preset, ab_over);
      avu::AblationOptions opts;
      opts.seeds.clear();
      std::istringstream is(seeds);
      std::string s;
      while (std::getline(is, s, ',')) opts.seeds.push_back(std::stoull(s));
      const fs::path csv = avu::run_ablation(
          avu::ablation_axis_from_string(axis), cfg, avu::read_manifest(ab_train),
          avu::read_manifest(ab_test), ab_out, opts);
      std::cout << csv.string() << "\n";
    } else if (*plot) {
      for (const auto& p : avu::plot_ablation(plot_csv, plot_out))
        std::cout << p.string() << "\n";
    }
  } catch (const avu::ConfigError& e) {
    std::cerr << "avu: configuration error: " << e.what() << "\n";
    return kUsageError;
  } catch (const std::invalid_argument& e) {
    std::cerr << "avu: invalid argument: " << e.what() << "\n";
    return kUsageError;
  } catch (const std::exception& e) {
    std::cerr << "avu: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

// Copyright 2026 The avunify Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <cstdio>
#include <fstream>

#include "avu/errors.h"
#include "avu/pipeline.h"

namespace avu {

namespace fs = std::filesystem;

std::string to_string(AblationAxis a) {
  switch (a) {
    case AblationAxis::kObjectives: return "objectives";
    case AblationAxis::kDepth: return "depth";
    case AblationAxis::kAlpha: return "alpha";
  }
  return "?";
}

AblationAxis ablation_axis_from_string(const std::string& name) {
  if (name == "objectives") return AblationAxis::kObjectives;
  if (name == "depth") return AblationAxis::kDepth;
  if (name == "alpha") return AblationAxis::kAlpha;
  throw ConfigError("unknown ablation axis '" + name +
                    "' (expected objectives, depth, alpha)");
}

std::vector<AblationPoint> ablation_grid(AblationAxis axis, const RunConfig& base) {
  std::vector<AblationPoint> grid;
  switch (axis) {
    case AblationAxis::kObjectives:
      for (const char* o : {"cl", "mas", "cl+mas", "cl+mva", "mas+mva", "cl+mas+mva"}) {
        RunConfig c = base;
        c.train.objectives = Objectives::parse(o);
        grid.push_back({o, c});
      }
      break;
    case AblationAxis::kDepth:
      for (int d : {4, 8, 12, 16}) {
        RunConfig c = base;
        c.model.decoder_depth = d;
        grid.push_back({std::to_string(d), c});
      }
      break;
    case AblationAxis::kAlpha:
      for (int k = 1; k <= 9; ++k) {
        RunConfig c = base;
        c.train.alpha = k / 10.0;
        char label[8];
        std::snprintf(label, sizeof(label), "%.1f", c.train.alpha);
        grid.push_back({label, c});
      }
      break;
  }
  return grid;
}

fs::path run_ablation(AblationAxis axis, const RunConfig& base,
                      const Manifest& train_set, const Manifest& test_set,
                      const fs::path& out_dir, const AblationOptions& opts) {
  if (opts.seeds.empty()) throw ConfigError("ablation needs at least one seed");
  fs::create_directories(out_dir);
  const fs::path csv = out_dir / "ablation.csv";
  std::ofstream out(csv);
  if (!out) throw Error("cannot write " + csv.string());
  out.precision(10);
  out << "axis,value,seed,piap,precision,recall,f1,sdr,sar,sdr_mixture,"
         "ir_acc,xnn_acc,wnn_acc\n";
  auto cell = [&](const std::optional<double>& v) {
    out << ',';
    if (v) out << *v;
  };
  for (const AblationPoint& point : ablation_grid(axis, base)) {
    for (std::uint64_t seed : opts.seeds) {
      RunConfig cfg = point.config;
      cfg.train.seed = seed;
      cfg.train.keep_epoch_checkpoints = false;
      const fs::path run_dir =
          out_dir / (to_string(axis) + "_" + point.label) / ("seed_" + std::to_string(seed));
      const TrainResult r = train(cfg, train_set, run_dir);
      const MetricsReport m = evaluate(r.last_checkpoint, test_set, opts.eval);
      out << to_string(axis) << ',' << point.label << ',' << seed;
      cell(m.piap);
      cell(m.precision);
      cell(m.recall);
      cell(m.f1);
      cell(m.sdr);
      cell(m.sar);
      cell(m.sdr_mixture);
      cell(m.ir_acc);
      cell(m.xnn_acc);
      cell(m.wnn_acc);
      out << '\n' << std::flush;
    }
  }
  return csv;
}

}  // namespace avu

// Copyright 2026 The avunify Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef AVU_METRICS_H_
#define AVU_METRICS_H_

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "avu/dsp.h"

namespace avu {

// Min-max normalized localization map; a constant map becomes 0.5.
struct Heatmap {
  Eigen::ArrayXXd values;
};

Heatmap normalize_heatmap(const Eigen::ArrayXXd& raw);

// Cosine of a_loc with each cell of a grid_h x grid_w local set (cell
// y * grid_w + x in column order), bilinearly upsampled to out_size^2 and
// normalized.
Heatmap localization_heatmap(const Eigen::VectorXd& a_loc,
                             const Eigen::MatrixXd& v_loc, int grid_h,
                             int grid_w, int out_size);

// Average precision of pixel scores against a binary mask in [0, 1]: tied
// scores form one operating point, the PR curve is integrated with the
// trapezoid rule from recall 0 (precision held at its first value).
// nullopt when the mask is empty.
std::optional<double> average_precision(const Eigen::ArrayXXd& scores,
                                        const Eigen::ArrayXXd& gt);

struct PiapResult {
  double piap = 0.0;  // percent
  int n_scored = 0;
  int n_skipped = 0;
};

PiapResult piap(const std::vector<Heatmap>& heatmaps,
                const std::vector<Eigen::ArrayXXd>& gt_masks);

enum class ThresholdRule {
  kNormalizedHalf,  // score >= 0.5 after min-max normalization
  kQuantile,        // score >= the q-quantile of the map's own scores
};

struct PrecisionRecall {
  double precision = 0.0;  // percent
  double recall = 0.0;
  double f1 = 0.0;
};

std::optional<PrecisionRecall> precision_f1(
    const Heatmap& heatmap, const Eigen::ArrayXXd& gt,
    ThresholdRule rule = ThresholdRule::kNormalizedHalf, double quantile = 0.5);

struct SeparationScore {
  double sdr = 0.0;  // dB, within [-100, 100]
  double sar = 0.0;
};

// Projection decomposition of the estimate onto the reference and the span
// of reference and interference.
SeparationScore sdr_sar(const Eigen::VectorXd& estimate,
                        const Eigen::VectorXd& reference,
                        const Eigen::VectorXd& interference);
inline SeparationScore sdr_sar(const Waveform& estimate,
                               const Waveform& reference,
                               const Waveform& interference) {
  return sdr_sar(estimate.samples, reference.samples, interference.samples);
}

// Top-1 instance retrieval over paired columns, both directions averaged,
// in percent.
double retrieval_accuracy(const Eigen::MatrixXd& audio,
                          const Eigen::MatrixXd& visual);

// Nearest neighbor (cosine, self excluded) label agreement in percent.
double within_nn_accuracy(const Eigen::MatrixXd& embeddings,
                          const std::vector<int>& labels);
// Queries search the other modality; key i (the query's own pair) is
// excluded when exclude_own_pair is set.
double cross_nn_accuracy(const Eigen::MatrixXd& queries,
                         const Eigen::MatrixXd& keys,
                         const std::vector<int>& labels,
                         bool exclude_own_pair = true);

struct SampleMetrics {
  std::string id;
  std::optional<double> ap, precision, recall, f1;
  std::optional<double> sdr, sar, sdr_mixture, sar_mixture;
};

struct MetricsReport {
  int n_samples = 0;
  std::optional<double> piap, precision, recall, f1;
  std::optional<double> sdr, sar;
  // Separation scores of the unprocessed mixture taken as the estimate.
  std::optional<double> sdr_mixture, sar_mixture;
  std::optional<double> ir_acc, xnn_acc, wnn_acc;
  int loc_skipped = 0;
  // Requested tasks that could not be evaluated, with the reason.
  std::map<std::string, std::string> task_errors;
  std::vector<SampleMetrics> per_sample;

  std::string to_json() const;
  static MetricsReport from_json(const std::string& text);
  bool operator==(const MetricsReport&) const;
};

// Sets precision/recall to their sample means and f1 to their harmonic
// mean.
void summarize_localization(MetricsReport& report,
                            const std::vector<PrecisionRecall>& rows);

void write_per_sample_csv(const std::filesystem::path& path,
                          const MetricsReport& report);

}  // namespace avu

#endif  // AVU_METRICS_H_

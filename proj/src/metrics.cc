// Copyright 2026 The avunify Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "avu/metrics.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "avu/errors.h"
#include "avu/resize.h"

namespace avu {

using json = nlohmann::json;

Heatmap normalize_heatmap(const Eigen::ArrayXXd& raw) {
  Heatmap h;
  const double lo = raw.minCoeff(), hi = raw.maxCoeff();
  if (!(hi - lo > 1e-12)) {
    h.values = Eigen::ArrayXXd::Constant(raw.rows(), raw.cols(), 0.5);
    return h;
  }
  h.values = (raw - lo) / (hi - lo);
  return h;
}

Heatmap localization_heatmap(const Eigen::VectorXd& a_loc,
                             const Eigen::MatrixXd& v_loc, int grid_h,
                             int grid_w, int out_size) {
  if (v_loc.cols() != static_cast<Eigen::Index>(grid_h) * grid_w ||
      v_loc.rows() != a_loc.size())
    throw InputError("local set does not match the grid or the audio vector");
  const Eigen::RowVectorXd cos = a_loc.transpose() * v_loc;
  Eigen::MatrixXd grid(grid_h, grid_w);
  for (int y = 0; y < grid_h; ++y)
    for (int x = 0; x < grid_w; ++x) grid(y, x) = cos(y * grid_w + x);
  return normalize_heatmap(resize_bilinear(grid, out_size, out_size).array());
}

std::optional<double> average_precision(const Eigen::ArrayXXd& scores,
                                        const Eigen::ArrayXXd& gt) {
  if (scores.rows() != gt.rows() || scores.cols() != gt.cols())
    throw InputError("heatmap and mask sizes differ");
  const Eigen::Index n = scores.size();
  Eigen::Index positives = 0;
  for (Eigen::Index k = 0; k < n; ++k) positives += gt(k) > 0.5;
  if (positives == 0) return std::nullopt;

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    return scores(a) > scores(b);
  });

  double ap = 0.0, prev_recall = 0.0, prev_precision = -1.0;
  Eigen::Index tp = 0, seen = 0;
  for (std::size_t k = 0; k < order.size();) {
    const double s = scores(order[k]);
    while (k < order.size() && scores(order[k]) == s) {
      tp += gt(order[k]) > 0.5;
      ++seen;
      ++k;
    }
    const double recall = static_cast<double>(tp) / static_cast<double>(positives);
    const double precision = static_cast<double>(tp) / static_cast<double>(seen);
    if (prev_precision < 0.0) prev_precision = precision;
    ap += (recall - prev_recall) * 0.5 * (precision + prev_precision);
    prev_recall = recall;
    prev_precision = precision;
  }
  return ap;
}

PiapResult piap(const std::vector<Heatmap>& heatmaps,
                const std::vector<Eigen::ArrayXXd>& gt_masks) {
  if (heatmaps.size() != gt_masks.size())
    throw InputError("heatmap and mask counts differ");
  PiapResult r;
  double sum = 0.0;
  for (std::size_t k = 0; k < heatmaps.size(); ++k) {
    const auto ap = average_precision(heatmaps[k].values, gt_masks[k]);
    if (!ap) {
      ++r.n_skipped;
      continue;
    }
    sum += *ap;
    ++r.n_scored;
  }
  r.piap = r.n_scored > 0 ? 100.0 * sum / r.n_scored : 0.0;
  return r;
}

std::optional<PrecisionRecall> precision_f1(const Heatmap& heatmap,
                                            const Eigen::ArrayXXd& gt,
                                            ThresholdRule rule,
                                            double quantile) {
  const Eigen::ArrayXXd& s = heatmap.values;
  if (s.rows() != gt.rows() || s.cols() != gt.cols())
    throw InputError("heatmap and mask sizes differ");
  double threshold = 0.5;
  if (rule == ThresholdRule::kQuantile) {
    if (!(quantile >= 0.0 && quantile <= 1.0))
      throw ConfigError("quantile must lie in [0, 1]");
    std::vector<double> sorted(s.data(), s.data() + s.size());
    std::sort(sorted.begin(), sorted.end());
    const auto idx = static_cast<std::size_t>(
        std::floor(quantile * static_cast<double>(sorted.size() - 1)));
    threshold = sorted[idx];
  }
  double inter = 0.0, pred = 0.0, truth = 0.0;
  for (Eigen::Index k = 0; k < s.size(); ++k) {
    const bool p = s(k) >= threshold;
    const bool g = gt(k) > 0.5;
    inter += p && g;
    pred += p;
    truth += g;
  }
  if (truth == 0.0) return std::nullopt;
  PrecisionRecall r;
  r.precision = pred > 0.0 ? 100.0 * inter / pred : 0.0;
  r.recall = 100.0 * inter / truth;
  r.f1 = r.precision + r.recall > 0.0
             ? 2.0 * r.precision * r.recall / (r.precision + r.recall)
             : 0.0;
  return r;
}

namespace {

double capped_db(double num, double den) {
  constexpr double kCap = 100.0;
  if (den <= 0.0) return num > 0.0 ? kCap : -kCap;
  if (num <= 0.0) return -kCap;
  return std::clamp(10.0 * std::log10(num / den), -kCap, kCap);
}

}  // namespace

SeparationScore sdr_sar(const Eigen::VectorXd& estimate,
                        const Eigen::VectorXd& reference,
                        const Eigen::VectorXd& interference) {
  if (estimate.size() != reference.size() ||
      interference.size() != reference.size())
    throw InputError("estimate, reference and interference lengths differ");
  const double rr = reference.squaredNorm();
  if (rr == 0.0) throw InputError("reference signal is identically zero");

  const Eigen::VectorXd s_target = (estimate.dot(reference) / rr) * reference;
  // Interference direction orthogonal to the reference.
  const Eigen::VectorXd q =
      interference - (interference.dot(reference) / rr) * reference;
  Eigen::VectorXd e_interf = Eigen::VectorXd::Zero(estimate.size());
  const double qq = q.squaredNorm();
  if (qq > 1e-20 * std::max(interference.squaredNorm(), 1e-300))
    e_interf = (estimate.dot(q) / qq) * q;
  const Eigen::VectorXd e_artif = estimate - s_target - e_interf;

  SeparationScore r;
  r.sdr = capped_db(s_target.squaredNorm(), (e_interf + e_artif).squaredNorm());
  r.sar = capped_db((s_target + e_interf).squaredNorm(), e_artif.squaredNorm());
  return r;
}

namespace {

Eigen::MatrixXd unit_columns(const Eigen::MatrixXd& m) {
  Eigen::MatrixXd out = m;
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    const double n = m.col(j).norm();
    if (n > 0.0) out.col(j) /= n;
  }
  return out;
}

}  // namespace

double retrieval_accuracy(const Eigen::MatrixXd& audio,
                          const Eigen::MatrixXd& visual) {
  if (audio.cols() != visual.cols() || audio.rows() != visual.rows())
    throw InputError("retrieval needs paired embeddings of equal dimension");
  const Eigen::Index n = audio.cols();
  if (n == 0) throw InputError("retrieval needs at least one pair");
  const Eigen::MatrixXd s = unit_columns(audio).transpose() * unit_columns(visual);
  Eigen::Index hits = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::Index arg;
    s.row(i).maxCoeff(&arg);
    hits += arg == i;
    s.col(i).maxCoeff(&arg);
    hits += arg == i;
  }
  return 100.0 * static_cast<double>(hits) / (2.0 * static_cast<double>(n));
}

namespace {

double nn_agreement(const Eigen::MatrixXd& queries, const Eigen::MatrixXd& keys,
                    const std::vector<int>& labels, bool exclude_diagonal) {
  const Eigen::Index n = queries.cols();
  if (n < 2) throw InputError("nearest-neighbor accuracy needs >= 2 samples");
  if (keys.cols() != n || static_cast<Eigen::Index>(labels.size()) != n ||
      keys.rows() != queries.rows())
    throw InputError("embedding and label counts differ");
  Eigen::MatrixXd s = unit_columns(queries).transpose() * unit_columns(keys);
  if (exclude_diagonal)
    s.diagonal().setConstant(-std::numeric_limits<double>::infinity());
  Eigen::Index hits = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::Index arg;
    s.row(i).maxCoeff(&arg);
    hits += labels[static_cast<std::size_t>(arg)] == labels[static_cast<std::size_t>(i)];
  }
  return 100.0 * static_cast<double>(hits) / static_cast<double>(n);
}

}  // namespace

double within_nn_accuracy(const Eigen::MatrixXd& embeddings,
                          const std::vector<int>& labels) {
  return nn_agreement(embeddings, embeddings, labels, true);
}

double cross_nn_accuracy(const Eigen::MatrixXd& queries,
                         const Eigen::MatrixXd& keys,
                         const std::vector<int>& labels,
                         bool exclude_own_pair) {
  return nn_agreement(queries, keys, labels, exclude_own_pair);
}

void summarize_localization(MetricsReport& report,
                            const std::vector<PrecisionRecall>& rows) {
  if (rows.empty()) return;
  double p = 0.0, r = 0.0;
  for (const auto& row : rows) {
    p += row.precision;
    r += row.recall;
  }
  p /= static_cast<double>(rows.size());
  r /= static_cast<double>(rows.size());
  report.precision = p;
  report.recall = r;
  report.f1 = p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
}

namespace {

void put(json& j, const char* key, const std::optional<double>& v) {
  if (v) j[key] = *v;
}

std::optional<double> get(const json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  return j[key].get<double>();
}

}  // namespace

std::string MetricsReport::to_json() const {
  json j;
  j["n_samples"] = n_samples;
  put(j, "piap", piap);
  put(j, "precision", precision);
  put(j, "recall", recall);
  put(j, "f1", f1);
  put(j, "sdr", sdr);
  put(j, "sar", sar);
  put(j, "sdr_mixture", sdr_mixture);
  put(j, "sar_mixture", sar_mixture);
  put(j, "ir_acc", ir_acc);
  put(j, "xnn_acc", xnn_acc);
  put(j, "wnn_acc", wnn_acc);
  j["loc_skipped"] = loc_skipped;
  j["task_errors"] = task_errors;
  json rows = json::array();
  for (const auto& s : per_sample) {
    json r;
    r["id"] = s.id;
    put(r, "ap", s.ap);
    put(r, "precision", s.precision);
    put(r, "recall", s.recall);
    put(r, "f1", s.f1);
    put(r, "sdr", s.sdr);
    put(r, "sar", s.sar);
    put(r, "sdr_mixture", s.sdr_mixture);
    put(r, "sar_mixture", s.sar_mixture);
    rows.push_back(std::move(r));
  }
  j["per_sample"] = std::move(rows);
  return j.dump(2);
}

MetricsReport MetricsReport::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw InputError(std::string("metrics report is not valid JSON: ") + e.what());
  }
  MetricsReport r;
  r.n_samples = j.value("n_samples", 0);
  r.piap = get(j, "piap");
  r.precision = get(j, "precision");
  r.recall = get(j, "recall");
  r.f1 = get(j, "f1");
  r.sdr = get(j, "sdr");
  r.sar = get(j, "sar");
  r.sdr_mixture = get(j, "sdr_mixture");
  r.sar_mixture = get(j, "sar_mixture");
  r.ir_acc = get(j, "ir_acc");
  r.xnn_acc = get(j, "xnn_acc");
  r.wnn_acc = get(j, "wnn_acc");
  r.loc_skipped = j.value("loc_skipped", 0);
  if (j.contains("task_errors"))
    r.task_errors = j["task_errors"].get<std::map<std::string, std::string>>();
  if (j.contains("per_sample"))
    for (const auto& row : j["per_sample"]) {
      SampleMetrics s;
      s.id = row.value("id", "");
      s.ap = get(row, "ap");
      s.precision = get(row, "precision");
      s.recall = get(row, "recall");
      s.f1 = get(row, "f1");
      s.sdr = get(row, "sdr");
      s.sar = get(row, "sar");
      s.sdr_mixture = get(row, "sdr_mixture");
      s.sar_mixture = get(row, "sar_mixture");
      r.per_sample.push_back(std::move(s));
    }
  return r;
}

bool MetricsReport::operator==(const MetricsReport& other) const {
  return to_json() == other.to_json();
}

void write_per_sample_csv(const std::filesystem::path& path,
                          const MetricsReport& report) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out.precision(10);
  out << "id,ap,precision,recall,f1,sdr,sar,sdr_mixture,sar_mixture\n";
  auto cell = [&](const std::optional<double>& v) {
    out << ',';
    if (v) out << *v;
  };
  for (const auto& s : report.per_sample) {
    out << s.id;
    cell(s.ap);
    cell(s.precision);
    cell(s.recall);
    cell(s.f1);
    cell(s.sdr);
    cell(s.sar);
    cell(s.sdr_mixture);
    cell(s.sar_mixture);
    out << '\n';
  }
}

}  // namespace avu

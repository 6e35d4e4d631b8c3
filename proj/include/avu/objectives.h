// Copyright 2026 The avunify Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Training losses over column-major embedding batches. Embeddings are
// P x B matrices (one unit vector per column); local visual sets are
// P x (B * L) with cell l of sample j in column j * L + l. Scores are
// indexed (audio i, visual j).

#ifndef AVU_OBJECTIVES_H_
#define AVU_OBJECTIVES_H_

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "avu/errors.h"

namespace avu {

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

// Score matrix together with the winning local cell of every (i, j) pair.
template <typename Scalar>
struct ScoreMatrix {
  Mat<Scalar> values;
  Eigen::MatrixXi local_arg;
};

// max_l <a_i, V_{j,l}> for all pairs.
template <typename Scalar>
ScoreMatrix<Scalar> local_max_scores(const Mat<Scalar>& a,
                                     const Mat<Scalar>& v_cells, int cells) {
  if (cells <= 0) throw InputError("local visual set is empty");
  if (v_cells.cols() % cells != 0 || a.rows() != v_cells.rows())
    throw InputError("local visual set does not match the audio batch");
  const Eigen::Index na = a.cols(), nv = v_cells.cols() / cells;
  const Mat<Scalar> g = a.transpose() * v_cells;
  ScoreMatrix<Scalar> s;
  s.values.resize(na, nv);
  s.local_arg.resize(na, nv);
  for (Eigen::Index j = 0; j < nv; ++j)
    for (Eigen::Index i = 0; i < na; ++i) {
      Eigen::Index arg;
      s.values(i, j) = g.row(i).segment(j * cells, cells).maxCoeff(&arg);
      s.local_arg(i, j) = static_cast<int>(arg);
    }
  return s;
}

template <typename Scalar>
ScoreMatrix<Scalar> correspondence_scores(const Mat<Scalar>& a_glb,
                                          const Mat<Scalar>& a_loc,
                                          const Mat<Scalar>& v_glb,
                                          const Mat<Scalar>& v_loc, int cells) {
  ScoreMatrix<Scalar> s = local_max_scores(a_loc, v_loc, cells);
  s.values += a_glb.transpose() * v_glb;
  return s;
}

// Single pair: cos(a_glb, v_glb) + max_l cos(a_loc, v_loc[:, l]).
template <typename Scalar>
Scalar correspondence_score(const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& a_glb,
                            const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& a_loc,
                            const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& v_glb,
                            const Mat<Scalar>& v_loc) {
  if (v_loc.cols() == 0) throw InputError("local visual set is empty");
  return a_glb.dot(v_glb) + (a_loc.transpose() * v_loc).maxCoeff();
}

// Two-sided InfoNCE over S / tau with the positive in both denominators,
// averaged over the batch. Writes dL/dS when `grad` is given.
template <typename Scalar>
Scalar contrastive_loss(const Mat<Scalar>& s, Scalar tau,
                        Mat<Scalar>* grad = nullptr) {
  if (!(tau > 0)) throw ConfigError("temperature must be positive");
  if (s.rows() != s.cols() || s.rows() == 0)
    throw InputError("score matrix must be square and nonempty");
  const Eigen::Index b = s.rows();
  const Mat<Scalar> z = s / tau;
  // Row softmax (over visual j) and column softmax (over audio k).
  Mat<Scalar> p_row(b, b), p_col(b, b);
  Scalar loss = 0;
  for (Eigen::Index i = 0; i < b; ++i) {
    const Scalar mr = z.row(i).maxCoeff();
    const auto er = (z.row(i).array() - mr).exp();
    const Scalar sr = er.sum();
    p_row.row(i) = er / sr;
    loss += mr + std::log(sr) - z(i, i);

    const Scalar mc = z.col(i).maxCoeff();
    const auto ec = (z.col(i).array() - mc).exp();
    const Scalar sc = ec.sum();
    p_col.col(i) = ec / sc;
    loss += mc + std::log(sc) - z(i, i);
  }
  if (grad) {
    *grad = p_row + p_col;
    grad->diagonal().array() -= Scalar(2);
    *grad /= tau * static_cast<Scalar>(b);
  }
  return loss / static_cast<Scalar>(b);
}

template <typename Scalar>
struct CorrespondenceGrad {
  Mat<Scalar> a_glb, a_loc, v_glb, v_loc;
};

// Scatters dL/dS through the global dot products and the local max.
template <typename Scalar>
void score_backward(const Mat<Scalar>& d_s, const Eigen::MatrixXi& local_arg,
                    const Mat<Scalar>& a_loc, const Mat<Scalar>& v_loc,
                    int cells, Mat<Scalar>& d_a_loc, Mat<Scalar>& d_v_loc) {
  d_a_loc.setZero(a_loc.rows(), a_loc.cols());
  d_v_loc.setZero(v_loc.rows(), v_loc.cols());
  for (Eigen::Index j = 0; j < d_s.cols(); ++j)
    for (Eigen::Index i = 0; i < d_s.rows(); ++i) {
      const Eigen::Index col = j * cells + local_arg(i, j);
      d_a_loc.col(i) += d_s(i, j) * v_loc.col(col);
      d_v_loc.col(col) += d_s(i, j) * a_loc.col(i);
    }
}

// Correspondence & localization loss for a batch of matched pairs.
template <typename Scalar>
Scalar cl_loss(const Mat<Scalar>& a_glb, const Mat<Scalar>& a_loc,
               const Mat<Scalar>& v_glb, const Mat<Scalar>& v_loc, int cells,
               Scalar tau, CorrespondenceGrad<Scalar>* grad = nullptr) {
  const ScoreMatrix<Scalar> s =
      correspondence_scores(a_glb, a_loc, v_glb, v_loc, cells);
  if (!grad) return contrastive_loss<Scalar>(s.values, tau);
  Mat<Scalar> d_s;
  const Scalar loss = contrastive_loss<Scalar>(s.values, tau, &d_s);
  grad->a_glb = v_glb * d_s.transpose();
  grad->v_glb = a_glb * d_s;
  score_backward<Scalar>(d_s, s.local_arg, a_loc, v_loc, cells, grad->a_loc,
                         grad->v_loc);
  return loss;
}

// Mean binary cross-entropy with predictions clamped to [1e-6, 1 - 1e-6].
template <typename Scalar>
Scalar separation_loss(const Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic>& pred,
                       const Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic>& target,
                       Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic>* grad = nullptr) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols())
    throw InputError("mask shape " + std::to_string(pred.rows()) + "x" +
                     std::to_string(pred.cols()) + " does not match target " +
                     std::to_string(target.rows()) + "x" +
                     std::to_string(target.cols()));
  if (pred.size() == 0) throw InputError("empty mask");
  const Scalar lo(1e-6), hi = Scalar(1) - Scalar(1e-6);
  const auto p = pred.max(lo).min(hi);
  const Scalar n = static_cast<Scalar>(pred.size());
  const Scalar loss =
      -(target * p.log() + (Scalar(1) - target) * (Scalar(1) - p).log()).sum() / n;
  if (grad) *grad = (p - target) / (p * (Scalar(1) - p)) / n;
  return loss;
}

template <typename Scalar>
struct MvaGrad {
  Mat<Scalar> a_i, a_j, v_mix;
};

// alpha * L_CL(V_m, a_i) + (1 - alpha) * L_CL(V_m, a_j) with local-max
// similarity only. Column b of a_j is the audio of sample b's partner.
template <typename Scalar>
Scalar mva_loss(const Mat<Scalar>& v_mix, const Mat<Scalar>& a_i,
                const Mat<Scalar>& a_j, int cells, Scalar alpha, Scalar tau,
                MvaGrad<Scalar>* grad = nullptr) {
  if (!(alpha >= 0 && alpha <= 1))
    throw ConfigError("mixing coefficient must lie in [0, 1]");
  const ScoreMatrix<Scalar> si = local_max_scores(a_i, v_mix, cells);
  const ScoreMatrix<Scalar> sj = local_max_scores(a_j, v_mix, cells);
  if (!grad)
    return alpha * contrastive_loss<Scalar>(si.values, tau) +
           (Scalar(1) - alpha) * contrastive_loss<Scalar>(sj.values, tau);
  Mat<Scalar> di, dj, dv_i, dv_j;
  const Scalar li = contrastive_loss<Scalar>(si.values, tau, &di);
  const Scalar lj = contrastive_loss<Scalar>(sj.values, tau, &dj);
  di *= alpha;
  dj *= Scalar(1) - alpha;
  score_backward<Scalar>(di, si.local_arg, a_i, v_mix, cells, grad->a_i, dv_i);
  score_backward<Scalar>(dj, sj.local_arg, a_j, v_mix, cells, grad->a_j, dv_j);
  grad->v_mix = dv_i + dv_j;
  return alpha * li + (Scalar(1) - alpha) * lj;
}

struct LossBundle {
  double cl = 0.0;
  double mas = 0.0;
  double mva = 0.0;
  double total = 0.0;
};

// Unweighted sum; any non-finite component aborts training.
inline LossBundle total_loss(double cl, double mas, double mva) {
  if (!std::isfinite(cl) || !std::isfinite(mas) || !std::isfinite(mva))
    throw DivergenceError("non-finite loss (cl=" + std::to_string(cl) +
                          ", mas=" + std::to_string(mas) +
                          ", mva=" + std::to_string(mva) + ")");
  return {cl, mas, mva, cl + mas + mva};
}

}  // namespace avu

#endif  // AVU_OBJECTIVES_H_

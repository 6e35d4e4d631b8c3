// Copyright 2026 The avunify Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#ifndef AVU_RESIZE_H_
#define AVU_RESIZE_H_

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

namespace avu {

// Linear interpolation operator R (out x in) mapping a length-`in` signal to
// length `out` with half-pixel centers and clamped edges. With
// `antialias` set and out < in, the triangle kernel is widened by the
// downscale factor so every input sample contributes (area-style shrink).
// Rows always sum to one.
template <typename Scalar = double>
Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> interpolation_matrix(
    Eigen::Index out, Eigen::Index in, bool antialias = false) {
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  Mat r = Mat::Zero(out, in);
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  const double support = (antialias && scale > 1.0) ? scale : 1.0;
  for (Eigen::Index o = 0; o < out; ++o) {
    const double center = (static_cast<double>(o) + 0.5) * scale - 0.5;
    if (support == 1.0) {
      const double c = std::clamp(center, 0.0, static_cast<double>(in - 1));
      const auto lo = static_cast<Eigen::Index>(std::floor(c));
      const auto hi = std::min<Eigen::Index>(lo + 1, in - 1);
      const double frac = c - static_cast<double>(lo);
      r(o, lo) += static_cast<Scalar>(1.0 - frac);
      r(o, hi) += static_cast<Scalar>(frac);
      continue;
    }
    const auto first = static_cast<Eigen::Index>(std::floor(center - support));
    const auto last = static_cast<Eigen::Index>(std::ceil(center + support));
    double total = 0.0;
    for (Eigen::Index i = first; i <= last; ++i) {
      const double w = 1.0 - std::abs(static_cast<double>(i) - center) / support;
      if (w <= 0.0) continue;
      const Eigen::Index src = std::clamp<Eigen::Index>(i, 0, in - 1);
      r(o, src) += static_cast<Scalar>(w);
      total += w;
    }
    r.row(o) /= static_cast<Scalar>(total);
  }
  return r;
}

// Separable bilinear resize of a 2-D grid: rows x cols -> out_rows x out_cols.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic>
resize_bilinear(const Eigen::MatrixBase<Derived>& grid, Eigen::Index out_rows,
                Eigen::Index out_cols, bool antialias = false) {
  using Scalar = typename Derived::Scalar;
  if (grid.rows() == out_rows && grid.cols() == out_cols) return grid;
  const auto ry = interpolation_matrix<Scalar>(out_rows, grid.rows(), antialias);
  const auto rx = interpolation_matrix<Scalar>(out_cols, grid.cols(), antialias);
  return ry * grid * rx.transpose();
}

}  // namespace avu

#endif  // AVU_RESIZE_H_

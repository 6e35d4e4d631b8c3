// Copyright 2026 The avunify Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include "avu/nn.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

#include "avu/errors.h"

namespace avu::nn {

FeatureMap FeatureMap::slice(int first, int count) const {
  if (first < 0 || count < 0 || first + count > n)
    throw InputError("feature map slice out of range");
  FeatureMap out;
  out.n = count;
  out.h = h;
  out.w = w;
  out.x = x.middleCols(first * pixels(), count * pixels());
  return out;
}

FeatureMap concat_channels(const FeatureMap& a, const FeatureMap& b) {
  if (a.n != b.n || a.h != b.h || a.w != b.w)
    throw InputError("channel concat needs matching n, h, w");
  FeatureMap out;
  out.n = a.n;
  out.h = a.h;
  out.w = a.w;
  out.x.resize(a.channels() + b.channels(), a.x.cols());
  out.x.topRows(a.channels()) = a.x;
  out.x.bottomRows(b.channels()) = b.x;
  return out;
}

FeatureMap concat_batch(const FeatureMap& a, const FeatureMap& b) {
  if (a.n == 0) return b;
  if (b.n == 0) return a;
  if (a.channels() != b.channels() || a.h != b.h || a.w != b.w)
    throw InputError("batch concat needs matching channels, h, w");
  FeatureMap out;
  out.n = a.n + b.n;
  out.h = a.h;
  out.w = a.w;
  out.x.resize(a.channels(), a.x.cols() + b.x.cols());
  out.x.leftCols(a.x.cols()) = a.x;
  out.x.rightCols(b.x.cols()) = b.x;
  return out;
}

namespace {

struct Geometry {
  int channels, n, h, w;  // the large (spatial input of a convolution) side
  int kernel, stride, pad;
  int oh, ow;             // the small side
  Padding padding;
};

// Maps one tap to a source pixel of the large side; -1 when it falls into
// zero padding.
inline int tap_source(int o, int k, const Geometry& g, int extent) {
  int i = o * g.stride - g.pad + k;
  if (i >= 0 && i < extent) return i;
  if (g.padding == Padding::kZero) return -1;
  return std::clamp(i, 0, extent - 1);
}

void im2col(const Eigen::MatrixXf& x, const Geometry& g, Eigen::MatrixXf& cols) {
  const Eigen::Index rows = static_cast<Eigen::Index>(g.kernel) * g.kernel * g.channels;
  cols.resize(rows, static_cast<Eigen::Index>(g.n) * g.oh * g.ow);
  const std::size_t bytes = sizeof(float) * g.channels;
  for (int b = 0; b < g.n; ++b)
    for (int oy = 0; oy < g.oh; ++oy)
      for (int ox = 0; ox < g.ow; ++ox) {
        const Eigen::Index col = (static_cast<Eigen::Index>(b) * g.oh + oy) * g.ow + ox;
        float* dst = cols.data() + col * rows;
        for (int ky = 0; ky < g.kernel; ++ky) {
          const int iy = tap_source(oy, ky, g, g.h);
          for (int kx = 0; kx < g.kernel; ++kx) {
            float* tap = dst + (static_cast<Eigen::Index>(ky) * g.kernel + kx) * g.channels;
            const int ix = tap_source(ox, kx, g, g.w);
            if (iy < 0 || ix < 0) {
              std::memset(tap, 0, bytes);
              continue;
            }
            const Eigen::Index src = (static_cast<Eigen::Index>(b) * g.h + iy) * g.w + ix;
            std::memcpy(tap, x.data() + src * g.channels, bytes);
          }
        }
      }
}

// Adjoint of im2col: scatter-adds the columns into a zeroed large map.
void col2im(const Eigen::MatrixXf& cols, const Geometry& g, Eigen::MatrixXf& x) {
  x.setZero(g.channels, static_cast<Eigen::Index>(g.n) * g.h * g.w);
  const Eigen::Index rows = cols.rows();
  for (int b = 0; b < g.n; ++b)
    for (int oy = 0; oy < g.oh; ++oy)
      for (int ox = 0; ox < g.ow; ++ox) {
        const Eigen::Index col = (static_cast<Eigen::Index>(b) * g.oh + oy) * g.ow + ox;
        const float* srcp = cols.data() + col * rows;
        for (int ky = 0; ky < g.kernel; ++ky) {
          const int iy = tap_source(oy, ky, g, g.h);
          if (iy < 0) continue;
          for (int kx = 0; kx < g.kernel; ++kx) {
            const int ix = tap_source(ox, kx, g, g.w);
            if (ix < 0) continue;
            const float* tap = srcp + (static_cast<Eigen::Index>(ky) * g.kernel + kx) * g.channels;
            float* dst = x.data() + ((static_cast<Eigen::Index>(b) * g.h + iy) * g.w + ix) * g.channels;
            for (int c = 0; c < g.channels; ++c) dst[c] += tap[c];
          }
        }
      }
}

void normal_init(Eigen::MatrixXf& m, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      m(i, j) = static_cast<float>(dist(rng));
}

}  // namespace

Conv2d::Conv2d(const std::string& name, int in, int out, int kernel,
               int stride, int pad, Padding padding)
    : in_(in), out_(out), kernel_(kernel), stride_(stride), pad_(pad),
      padding_(padding),
      weight_(name + ".weight", out, static_cast<Eigen::Index>(kernel) * kernel * in),
      bias_(name + ".bias", out, 1) {}

void Conv2d::init(std::mt19937_64& rng) {
  normal_init(weight_.value, std::sqrt(2.0 / (kernel_ * kernel_ * in_)), rng);
  bias_.value.setZero();
}

FeatureMap Conv2d::forward(const FeatureMap& x) {
  if (x.channels() != in_)
    throw InputError(weight_.name + ": expected " + std::to_string(in_) +
                     " input channels, got " + std::to_string(x.channels()));
  n_ = x.n;
  h_ = x.h;
  w_ = x.w;
  const Geometry g{in_, n_, h_, w_, kernel_, stride_, pad_,
                   out_extent(h_), out_extent(w_), padding_};
  if (g.oh <= 0 || g.ow <= 0) throw InputError(weight_.name + ": input too small");
  im2col(x.x, g, cols_);
  FeatureMap y;
  y.n = n_;
  y.h = g.oh;
  y.w = g.ow;
  y.x.noalias() = weight_.value * cols_;
  y.x.colwise() += bias_.value.col(0);
  return y;
}

FeatureMap Conv2d::backward(const FeatureMap& dy, bool input_grad) {
  const Geometry g{in_, n_, h_, w_, kernel_, stride_, pad_,
                   out_extent(h_), out_extent(w_), padding_};
  weight_.grad.noalias() += dy.x * cols_.transpose();
  bias_.grad.col(0) += dy.x.rowwise().sum();
  if (!input_grad) return {};
  const Eigen::MatrixXf dcols = weight_.value.transpose() * dy.x;
  FeatureMap dx;
  dx.n = n_;
  dx.h = h_;
  dx.w = w_;
  col2im(dcols, g, dx.x);
  return dx;
}

ConvTranspose2d::ConvTranspose2d(const std::string& name, int in, int out,
                                 int kernel, int stride, int pad)
    : in_(in), out_(out), kernel_(kernel), stride_(stride), pad_(pad),
      weight_(name + ".weight", static_cast<Eigen::Index>(kernel) * kernel * out, in),
      bias_(name + ".bias", out, 1) {}

void ConvTranspose2d::init(std::mt19937_64& rng) {
  const double taps = static_cast<double>(kernel_) * kernel_ /
                      (static_cast<double>(stride_) * stride_);
  normal_init(weight_.value, std::sqrt(2.0 / (in_ * taps)), rng);
  bias_.value.setZero();
}

FeatureMap ConvTranspose2d::forward(const FeatureMap& x) {
  if (x.channels() != in_)
    throw InputError(weight_.name + ": expected " + std::to_string(in_) +
                     " input channels, got " + std::to_string(x.channels()));
  n_ = x.n;
  h_ = x.h;
  w_ = x.w;
  input_ = x.x;
  const Geometry g{out_, n_, out_extent(h_), out_extent(w_), kernel_, stride_,
                   pad_, h_, w_, Padding::kZero};
  const Eigen::MatrixXf cols = weight_.value * x.x;
  FeatureMap y;
  y.n = n_;
  y.h = g.h;
  y.w = g.w;
  col2im(cols, g, y.x);
  y.x.colwise() += bias_.value.col(0);
  return y;
}

FeatureMap ConvTranspose2d::backward(const FeatureMap& dy) {
  const Geometry g{out_, n_, out_extent(h_), out_extent(w_), kernel_, stride_,
                   pad_, h_, w_, Padding::kZero};
  Eigen::MatrixXf dcols;
  im2col(dy.x, g, dcols);
  weight_.grad.noalias() += dcols * input_.transpose();
  bias_.grad.col(0) += dy.x.rowwise().sum();
  FeatureMap dx;
  dx.n = n_;
  dx.h = h_;
  dx.w = w_;
  dx.x.noalias() = weight_.value.transpose() * dcols;
  return dx;
}

Linear::Linear(const std::string& name, int in, int out)
    : weight_(name + ".weight", out, in), bias_(name + ".bias", out, 1) {}

void Linear::init(std::mt19937_64& rng) {
  normal_init(weight_.value, 1.0 / std::sqrt(static_cast<double>(weight_.value.cols())), rng);
  bias_.value.setZero();
}

Eigen::MatrixXf Linear::forward(const Eigen::MatrixXf& x) {
  if (x.rows() != weight_.value.cols())
    throw InputError(weight_.name + ": input dimension mismatch");
  input_ = x;
  Eigen::MatrixXf y = weight_.value * x;
  y.colwise() += bias_.value.col(0);
  return y;
}

Eigen::MatrixXf Linear::backward(const Eigen::MatrixXf& dy) {
  weight_.grad.noalias() += dy * input_.transpose();
  bias_.grad.col(0) += dy.rowwise().sum();
  return weight_.value.transpose() * dy;
}

void Relu::forward_inplace(Eigen::MatrixXf& x) {
  x = x.cwiseMax(0.0f);
  output_ = x;
}

void Relu::backward_inplace(Eigen::MatrixXf& dy) const {
  dy = (output_.array() > 0.0f).select(dy, 0.0f);
}

FeatureMap MaxPool2d::forward(const FeatureMap& x) {
  n_ = x.n;
  h_ = x.h;
  w_ = x.w;
  channels_ = x.channels();
  const int oh = (h_ + 2 - 3) / 2 + 1, ow = (w_ + 2 - 3) / 2 + 1;
  FeatureMap y;
  y.n = n_;
  y.h = oh;
  y.w = ow;
  y.x.resize(channels_, static_cast<Eigen::Index>(n_) * oh * ow);
  argmax_.assign(static_cast<std::size_t>(y.x.size()), 0);
  for (int b = 0; b < n_; ++b)
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox) {
        const Eigen::Index col = (static_cast<Eigen::Index>(b) * oh + oy) * ow + ox;
        for (Eigen::Index c = 0; c < channels_; ++c) {
          float best = -std::numeric_limits<float>::infinity();
          Eigen::Index arg = 0;
          for (int ky = 0; ky < 3; ++ky) {
            const int iy = oy * 2 - 1 + ky;
            if (iy < 0 || iy >= h_) continue;
            for (int kx = 0; kx < 3; ++kx) {
              const int ix = ox * 2 - 1 + kx;
              if (ix < 0 || ix >= w_) continue;
              const Eigen::Index src = (static_cast<Eigen::Index>(b) * h_ + iy) * w_ + ix;
              if (x.x(c, src) > best) {
                best = x.x(c, src);
                arg = src;
              }
            }
          }
          y.x(c, col) = best;
          argmax_[col * channels_ + c] = arg;
        }
      }
  return y;
}

FeatureMap MaxPool2d::backward(const FeatureMap& dy) const {
  FeatureMap dx(static_cast<int>(channels_), n_, h_, w_);
  for (Eigen::Index col = 0; col < dy.x.cols(); ++col)
    for (Eigen::Index c = 0; c < channels_; ++c)
      dx.x(c, argmax_[col * channels_ + c]) += dy.x(c, col);
  return dx;
}

GlobalMax global_max_pool(const FeatureMap& x) {
  const Eigen::Index hw = x.pixels();
  GlobalMax out;
  out.values.resize(x.channels(), x.n);
  out.argmax.resize(x.channels(), x.n);
  for (int b = 0; b < x.n; ++b) {
    const Eigen::Index first = b * hw;
    out.values.col(b) = x.x.col(first);
    out.argmax.col(b).setConstant(static_cast<int>(first));
    for (Eigen::Index p = first + 1; p < first + hw; ++p)
      for (Eigen::Index c = 0; c < x.channels(); ++c)
        if (x.x(c, p) > out.values(c, b)) {
          out.values(c, b) = x.x(c, p);
          out.argmax(c, b) = static_cast<int>(p);
        }
  }
  return out;
}

void global_max_pool_backward(const GlobalMax& pool,
                              const Eigen::MatrixXf& d_values, FeatureMap& dx) {
  for (Eigen::Index b = 0; b < d_values.cols(); ++b)
    for (Eigen::Index c = 0; c < d_values.rows(); ++c)
      dx.x(c, pool.argmax(c, b)) += d_values(c, b);
}

Eigen::MatrixXf l2_normalize(const Eigen::MatrixXf& x) {
  Eigen::MatrixXf y = x;
  for (Eigen::Index j = 0; j < x.cols(); ++j)
    y.col(j) /= std::max(x.col(j).norm(), 1e-12f);
  return y;
}

Eigen::MatrixXf l2_normalize_backward(const Eigen::MatrixXf& x,
                                      const Eigen::MatrixXf& dy) {
  Eigen::MatrixXf dx(x.rows(), x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const float norm = std::max(x.col(j).norm(), 1e-12f);
    const Eigen::VectorXf y = x.col(j) / norm;
    dx.col(j) = (dy.col(j) - y * y.dot(dy.col(j))) / norm;
  }
  return dx;
}

Adam::Moments& Adam::moments_for(const Parameter& p) {
  for (auto& s : state_)
    if (s.name == p.name) return s;
  state_.push_back({p.name, Eigen::MatrixXf::Zero(p.value.rows(), p.value.cols()),
                    Eigen::MatrixXf::Zero(p.value.rows(), p.value.cols())});
  return state_.back();
}

void Adam::step(const std::vector<Parameter*>& params,
                const std::vector<bool>& active) {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  const auto b1 = static_cast<float>(cfg_.beta1);
  const auto b2 = static_cast<float>(cfg_.beta2);
  const auto step = static_cast<float>(cfg_.learning_rate / bc1);
  const auto eps = static_cast<float>(cfg_.epsilon);
  const auto inv_bc2 = static_cast<float>(1.0 / bc2);
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!active[i]) continue;
    Parameter& p = *params[i];
    Moments& s = moments_for(p);
    s.m = b1 * s.m + (1.0f - b1) * p.grad;
    s.v = b2 * s.v + (1.0f - b2) * p.grad.cwiseAbs2();
    p.value.array() -=
        step * s.m.array() / ((s.v.array() * inv_bc2).sqrt() + eps);
  }
}

std::vector<std::pair<std::string, Eigen::MatrixXf>> Adam::first_moments() const {
  std::vector<std::pair<std::string, Eigen::MatrixXf>> out;
  for (const auto& s : state_) out.emplace_back(s.name, s.m);
  return out;
}

std::vector<std::pair<std::string, Eigen::MatrixXf>> Adam::second_moments() const {
  std::vector<std::pair<std::string, Eigen::MatrixXf>> out;
  for (const auto& s : state_) out.emplace_back(s.name, s.v);
  return out;
}

void Adam::set_moments(const std::string& name, Eigen::MatrixXf m,
                       Eigen::MatrixXf v) {
  for (auto& s : state_)
    if (s.name == name) {
      s.m = std::move(m);
      s.v = std::move(v);
      return;
    }
  state_.push_back({name, std::move(m), std::move(v)});
}

}  // namespace avu::nn

// Copyright 2026 The avunify Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)
//
// Minimal layer library for the two-stream model. Every layer keeps the
// activations of its most recent forward() call and consumes them in
// backward(), accumulating parameter gradients.

#ifndef AVU_NN_H_
#define AVU_NN_H_

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace avu::nn {

// Batch of feature maps stored channels x (n * h * w); sample b, pixel
// (y, x) lives in column (b * h + y) * w + x.
struct FeatureMap {
  int n = 0;
  int h = 0;
  int w = 0;
  Eigen::MatrixXf x;

  FeatureMap() = default;
  FeatureMap(int channels, int n_, int h_, int w_)
      : n(n_), h(h_), w(w_),
        x(Eigen::MatrixXf::Zero(channels, static_cast<Eigen::Index>(n_) * h_ * w_)) {}

  Eigen::Index channels() const { return x.rows(); }
  Eigen::Index pixels() const { return static_cast<Eigen::Index>(h) * w; }

  // Samples [first, first + count) as a new map.
  FeatureMap slice(int first, int count) const;
};

// Stacks maps along the channel axis (same n, h, w).
FeatureMap concat_channels(const FeatureMap& a, const FeatureMap& b);
// Stacks maps along the batch axis (same channels, h, w).
FeatureMap concat_batch(const FeatureMap& a, const FeatureMap& b);

struct Parameter {
  std::string name;
  Eigen::MatrixXf value;
  Eigen::MatrixXf grad;

  Parameter() = default;
  Parameter(std::string n, Eigen::Index rows, Eigen::Index cols)
      : name(std::move(n)),
        value(Eigen::MatrixXf::Zero(rows, cols)),
        grad(Eigen::MatrixXf::Zero(rows, cols)) {}

  void zero_grad() { grad.setZero(); }
};

enum class Padding { kZero, kReplicate };

// 2-D convolution via im2col. Weight is out x (k * k * in) with column
// (ky * k + kx) * in + c.
class Conv2d {
 public:
  Conv2d(const std::string& name, int in, int out, int kernel, int stride,
         int pad, Padding padding = Padding::kZero);

  void init(std::mt19937_64& rng);
  FeatureMap forward(const FeatureMap& x);
  // Skips the input gradient (returns an empty map) when input_grad is
  // false.
  FeatureMap backward(const FeatureMap& dy, bool input_grad = true);
  std::vector<Parameter*> parameters() { return {&weight_, &bias_}; }

  int out_extent(int in) const { return (in + 2 * pad_ - kernel_) / stride_ + 1; }
  int in_channels() const { return in_; }
  int out_channels() const { return out_; }
  Parameter& weight() { return weight_; }
  Parameter& bias() { return bias_; }

 private:
  int in_, out_, kernel_, stride_, pad_;
  Padding padding_;
  Parameter weight_, bias_;
  Eigen::MatrixXf cols_;
  int n_ = 0, h_ = 0, w_ = 0;
};

// Transposed convolution, the adjoint of Conv2d with the same geometry.
// Weight is (k * k * out) x in.
class ConvTranspose2d {
 public:
  ConvTranspose2d(const std::string& name, int in, int out, int kernel,
                  int stride, int pad);

  void init(std::mt19937_64& rng);
  FeatureMap forward(const FeatureMap& x);
  FeatureMap backward(const FeatureMap& dy);
  std::vector<Parameter*> parameters() { return {&weight_, &bias_}; }

  int out_extent(int in) const { return (in - 1) * stride_ - 2 * pad_ + kernel_; }
  int in_channels() const { return in_; }
  int out_channels() const { return out_; }
  int stride() const { return stride_; }
  Parameter& weight() { return weight_; }
  Parameter& bias() { return bias_; }

 private:
  int in_, out_, kernel_, stride_, pad_;
  Parameter weight_, bias_;
  Eigen::MatrixXf input_;
  int n_ = 0, h_ = 0, w_ = 0;
};

// Affine map applied to every column: y = W x + b.
class Linear {
 public:
  Linear(const std::string& name, int in, int out);

  void init(std::mt19937_64& rng);
  Eigen::MatrixXf forward(const Eigen::MatrixXf& x);
  Eigen::MatrixXf backward(const Eigen::MatrixXf& dy);
  std::vector<Parameter*> parameters() { return {&weight_, &bias_}; }

  Parameter& weight() { return weight_; }
  Parameter& bias() { return bias_; }

 private:
  Parameter weight_, bias_;
  Eigen::MatrixXf input_;
};

class Relu {
 public:
  void forward_inplace(Eigen::MatrixXf& x);
  void backward_inplace(Eigen::MatrixXf& dy) const;

 private:
  Eigen::MatrixXf output_;
};

// 3x3 / stride 2 / pad 1 spatial max pooling (residual stem).
class MaxPool2d {
 public:
  FeatureMap forward(const FeatureMap& x);
  FeatureMap backward(const FeatureMap& dy) const;

 private:
  std::vector<Eigen::Index> argmax_;
  int n_ = 0, h_ = 0, w_ = 0;
  Eigen::Index channels_ = 0;
};

// Spatial max per (sample, channel): channels x n, with the winning column
// recorded for the backward pass.
struct GlobalMax {
  Eigen::MatrixXf values;
  Eigen::MatrixXi argmax;  // absolute column index into the input map
};
GlobalMax global_max_pool(const FeatureMap& x);
// Scatters d_values (channels x n) into a zero map shaped like the input.
void global_max_pool_backward(const GlobalMax& pool,
                              const Eigen::MatrixXf& d_values, FeatureMap& dx);

// Column-wise L2 normalization and its vector-Jacobian product.
Eigen::MatrixXf l2_normalize(const Eigen::MatrixXf& x);
Eigen::MatrixXf l2_normalize_backward(const Eigen::MatrixXf& x,
                                      const Eigen::MatrixXf& dy);

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class Adam {
 public:
  explicit Adam(AdamConfig cfg) : cfg_(cfg) {}

  // Updates every parameter whose `active` flag is set; inactive ones keep
  // both their values and their moment estimates.
  void step(const std::vector<Parameter*>& params,
            const std::vector<bool>& active);

  std::int64_t steps() const { return t_; }
  void set_steps(std::int64_t t) { t_ = t; }
  // Moment estimates keyed by parameter name.
  std::vector<std::pair<std::string, Eigen::MatrixXf>> first_moments() const;
  std::vector<std::pair<std::string, Eigen::MatrixXf>> second_moments() const;
  void set_moments(const std::string& name, Eigen::MatrixXf m,
                   Eigen::MatrixXf v);

 private:
  struct Moments {
    std::string name;
    Eigen::MatrixXf m, v;
  };
  Moments& moments_for(const Parameter& p);

  AdamConfig cfg_;
  std::int64_t t_ = 0;
  std::vector<Moments> state_;
};

}  // namespace avu::nn

#endif  // AVU_NN_H_

#pragma once

#include <random>
#include <span>
#include <string>
#include <vector>

#include "objseg/geometry.hpp"
#include "objseg/tensor.hpp"

namespace objseg::nn {

template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
  bool trainable = true;  // false for running statistics
};

template <typename T>
using ParamList = std::vector<Parameter<T>*>;

// Every layer caches what its backward pass needs from the latest forward
// call; calling forward twice before backward discards the first cache.
template <typename T>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(const std::string& name, int in_channels, int out_channels, int kernel, int stride,
         int pad, bool bias = true);

  // He-normal weights, zero bias.
  void init(std::mt19937_64& rng);
  Tensor<T> forward(const Tensor<T>& x);
  Tensor<T> backward(const Tensor<T>& grad_out);
  void collect(ParamList<T>& out);

  int in_channels() const { return in_; }
  int out_channels() const { return out_; }

  Parameter<T> weight;
  Parameter<T> bias;

 private:
  int in_ = 0, out_ = 0, kernel_ = 1, stride_ = 1, pad_ = 0;
  bool has_bias_ = true;
  Tensor<T> input_;
};

template <typename T>
class BatchNorm2d {
 public:
  BatchNorm2d() = default;
  BatchNorm2d(const std::string& name, int channels, double momentum = 0.1, double eps = 1e-5);

  Tensor<T> forward(const Tensor<T>& x, bool training);
  Tensor<T> backward(const Tensor<T>& grad_out);
  void collect(ParamList<T>& out);

  Parameter<T> gamma, beta;
  Parameter<T> running_mean, running_var;

 private:
  int channels_ = 0;
  double momentum_ = 0.1, eps_ = 1e-5;
  bool last_training_ = true;
  Tensor<T> xhat_;
  std::vector<double> inv_std_;
};

// Per-sample, per-channel standardisation over the spatial extent followed
// by a learned per-channel affine: y = gamma * (x - mu) / sqrt(var + eps) + beta.
template <typename T>
class InstanceNorm2d {
 public:
  InstanceNorm2d() = default;
  InstanceNorm2d(const std::string& name, int channels, double eps = 1e-5);

  Tensor<T> forward(const Tensor<T>& x);
  Tensor<T> backward(const Tensor<T>& grad_out);
  void collect(ParamList<T>& out);

  // Input and pre-affine normalised activations of the latest forward call.
  const Tensor<T>& input() const { return input_; }
  const Tensor<T>& normalized() const { return xhat_; }
  double epsilon() const { return eps_; }

  Parameter<T> gamma, beta;

 private:
  int channels_ = 0;
  double eps_ = 1e-5;
  Tensor<T> input_, xhat_;
  std::vector<double> inv_std_;
};

struct RoiRef {
  int image = 0;  // sample index into the feature batch
  Box box;        // input-image coordinates
};

// Bilinear resampling of each box (divided by `stride`) onto a regular
// grid x grid lattice of cell centres. Taps outside the feature read as 0.
template <typename T>
Tensor<T> crop_resize(const Tensor<T>& feature, std::span<const RoiRef> rois, double stride,
                      int grid);

// Accumulates the adjoint of crop_resize into `grad_feature`.
template <typename T>
void crop_resize_backward(const Tensor<T>& grad_out, std::span<const RoiRef> rois, double stride,
                          Tensor<T>& grad_feature);

}  // namespace objseg::nn

#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

namespace objseg::nn {

// Dense NCHW tensor with value semantics.
template <typename T>
class Tensor {
 public:
  Tensor() = default;
  Tensor(int n, int c, int h, int w, T fill = T(0))
      : shape_{n, c, h, w}, data_(size_t(n) * c * h * w, fill) {}

  int n() const { return shape_[0]; }
  int c() const { return shape_[1]; }
  int h() const { return shape_[2]; }
  int w() const { return shape_[3]; }
  const std::array<int, 4>& shape() const { return shape_; }
  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }
  size_t plane_size() const { return size_t(shape_[2]) * shape_[3]; }
  size_t sample_size() const { return size_t(shape_[1]) * plane_size(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> span() { return data_; }
  std::span<const T> span() const { return data_; }

  T* plane(int n, int c) { return data_.data() + (size_t(n) * shape_[1] + c) * plane_size(); }
  const T* plane(int n, int c) const {
    return data_.data() + (size_t(n) * shape_[1] + c) * plane_size();
  }

  T& at(int n, int c, int y, int x) { return plane(n, c)[size_t(y) * shape_[3] + x]; }
  T at(int n, int c, int y, int x) const { return plane(n, c)[size_t(y) * shape_[3] + x]; }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }
  Tensor& operator+=(const Tensor& o);

  static Tensor zeros_like(const Tensor& o) { return Tensor(o.n(), o.c(), o.h(), o.w()); }

 private:
  std::array<int, 4> shape_{0, 0, 0, 0};
  std::vector<T> data_;
};

// Row-major C = alpha * op(A) * op(B) + beta * C.
template <typename T>
void gemm(bool trans_a, bool trans_b, int m, int n, int k, T alpha, const T* a, int lda,
          const T* b, int ldb, T beta, T* c, int ldc);

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b);

// Inverse of concat_channels: splits `grad` into the first `ca` channels and the rest.
template <typename T>
void split_channels(const Tensor<T>& grad, int ca, Tensor<T>& ga, Tensor<T>& gb);

// 2x bilinear upsampling with half-pixel centres (align_corners = false).
template <typename T>
Tensor<T> upsample2x(const Tensor<T>& x);
template <typename T>
Tensor<T> upsample2x_backward(const Tensor<T>& grad_out);

template <typename T>
void relu_inplace(Tensor<T>& x);
// Zeroes grad where the ReLU output was zero.
template <typename T>
void relu_backward_inplace(Tensor<T>& grad, const Tensor<T>& out);

template <typename T>
void sigmoid_inplace(Tensor<T>& x);

template <typename T>
Tensor<double> to_double(const Tensor<T>& x);
template <typename T>
Tensor<T> from_double(const Tensor<double>& x);

}  // namespace objseg::nn

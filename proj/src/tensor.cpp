#include "objseg/tensor.hpp"

#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace objseg::nn {

template <typename T>
Tensor<T>& Tensor<T>::operator+=(const Tensor& o) {
  if (!same_shape(o)) throw std::invalid_argument("Tensor += shape mismatch");
  for (size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
  return *this;
}

template <>
void gemm<float>(bool ta, bool tb, int m, int n, int k, float alpha, const float* a, int lda,
                 const float* b, int ldb, float beta, float* c, int ldc) {
  cblas_sgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans, m, n,
              k, alpha, a, lda, b, ldb, beta, c, ldc);
}

template <>
void gemm<double>(bool ta, bool tb, int m, int n, int k, double alpha, const double* a, int lda,
                  const double* b, int ldb, double beta, double* c, int ldc) {
  cblas_dgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans, m, n,
              k, alpha, a, lda, b, ldb, beta, c, ldc);
}

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.n() != b.n() || a.h() != b.h() || a.w() != b.w())
    throw std::invalid_argument("concat_channels: shape mismatch");
  Tensor<T> out(a.n(), a.c() + b.c(), a.h(), a.w());
  for (int n = 0; n < a.n(); ++n) {
    std::copy_n(a.plane(n, 0), a.sample_size(), out.plane(n, 0));
    std::copy_n(b.plane(n, 0), b.sample_size(), out.plane(n, a.c()));
  }
  return out;
}

template <typename T>
void split_channels(const Tensor<T>& g, int ca, Tensor<T>& ga, Tensor<T>& gb) {
  const int cb = g.c() - ca;
  ga = Tensor<T>(g.n(), ca, g.h(), g.w());
  gb = Tensor<T>(g.n(), cb, g.h(), g.w());
  for (int n = 0; n < g.n(); ++n) {
    std::copy_n(g.plane(n, 0), ga.sample_size(), ga.plane(n, 0));
    std::copy_n(g.plane(n, ca), gb.sample_size(), gb.plane(n, 0));
  }
}

namespace {

// Source index pair and weights for one output coordinate of a 2x upsample.
struct Tap {
  int i0, i1;
  double w0, w1;
};

std::vector<Tap> upsample_taps(int in_size) {
  std::vector<Tap> taps(size_t(in_size) * 2);
  for (int o = 0; o < in_size * 2; ++o) {
    double src = (o + 0.5) / 2.0 - 0.5;
    src = std::max(src, 0.0);
    int i0 = static_cast<int>(std::floor(src));
    i0 = std::min(i0, in_size - 1);
    const int i1 = std::min(i0 + 1, in_size - 1);
    const double f = src - i0;
    taps[o] = {i0, i1, 1.0 - f, f};
  }
  return taps;
}

}  // namespace

template <typename T>
Tensor<T> upsample2x(const Tensor<T>& x) {
  Tensor<T> out(x.n(), x.c(), x.h() * 2, x.w() * 2);
  const auto ty = upsample_taps(x.h());
  const auto tx = upsample_taps(x.w());
  for (int n = 0; n < x.n(); ++n) {
    for (int c = 0; c < x.c(); ++c) {
      const T* src = x.plane(n, c);
      T* dst = out.plane(n, c);
      for (int oy = 0; oy < out.h(); ++oy) {
        const Tap& a = ty[oy];
        const T* r0 = src + size_t(a.i0) * x.w();
        const T* r1 = src + size_t(a.i1) * x.w();
        for (int ox = 0; ox < out.w(); ++ox) {
          const Tap& b = tx[ox];
          dst[size_t(oy) * out.w() + ox] =
              T(a.w0 * (b.w0 * r0[b.i0] + b.w1 * r0[b.i1]) + a.w1 * (b.w0 * r1[b.i0] + b.w1 * r1[b.i1]));
        }
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> upsample2x_backward(const Tensor<T>& g) {
  Tensor<T> out(g.n(), g.c(), g.h() / 2, g.w() / 2);
  const auto ty = upsample_taps(out.h());
  const auto tx = upsample_taps(out.w());
  for (int n = 0; n < g.n(); ++n) {
    for (int c = 0; c < g.c(); ++c) {
      const T* src = g.plane(n, c);
      T* dst = out.plane(n, c);
      for (int oy = 0; oy < g.h(); ++oy) {
        const Tap& a = ty[oy];
        T* r0 = dst + size_t(a.i0) * out.w();
        T* r1 = dst + size_t(a.i1) * out.w();
        for (int ox = 0; ox < g.w(); ++ox) {
          const Tap& b = tx[ox];
          const double v = src[size_t(oy) * g.w() + ox];
          r0[b.i0] += T(a.w0 * b.w0 * v);
          r0[b.i1] += T(a.w0 * b.w1 * v);
          r1[b.i0] += T(a.w1 * b.w0 * v);
          r1[b.i1] += T(a.w1 * b.w1 * v);
        }
      }
    }
  }
  return out;
}

template <typename T>
void relu_inplace(Tensor<T>& x) {
  for (T& v : x.span()) v = v > T(0) ? v : T(0);
}

template <typename T>
void relu_backward_inplace(Tensor<T>& grad, const Tensor<T>& out) {
  auto g = grad.span();
  auto o = out.span();
  for (size_t i = 0; i < g.size(); ++i)
    if (!(o[i] > T(0))) g[i] = T(0);
}

template <typename T>
void sigmoid_inplace(Tensor<T>& x) {
  for (T& v : x.span()) v = T(1) / (T(1) + std::exp(-v));
}

template <typename T>
Tensor<double> to_double(const Tensor<T>& x) {
  Tensor<double> out(x.n(), x.c(), x.h(), x.w());
  std::copy(x.span().begin(), x.span().end(), out.span().begin());
  return out;
}

template <typename T>
Tensor<T> from_double(const Tensor<double>& x) {
  Tensor<T> out(x.n(), x.c(), x.h(), x.w());
  std::transform(x.span().begin(), x.span().end(), out.span().begin(),
                 [](double v) { return static_cast<T>(v); });
  return out;
}

#define OBJSEG_INSTANTIATE(T)                                                              \
  template class Tensor<T>;                                                                \
  template Tensor<T> concat_channels(const Tensor<T>&, const Tensor<T>&);                  \
  template void split_channels(const Tensor<T>&, int, Tensor<T>&, Tensor<T>&);             \
  template Tensor<T> upsample2x(const Tensor<T>&);                                         \
  template Tensor<T> upsample2x_backward(const Tensor<T>&);                                \
  template void relu_inplace(Tensor<T>&);                                                  \
  template void relu_backward_inplace(Tensor<T>&, const Tensor<T>&);                       \
  template void sigmoid_inplace(Tensor<T>&);                                               \
  template Tensor<double> to_double(const Tensor<T>&);                                     \
  template Tensor<T> from_double(const Tensor<double>&);

OBJSEG_INSTANTIATE(float)
OBJSEG_INSTANTIATE(double)
#undef OBJSEG_INSTANTIATE

}  // namespace objseg::nn

#include "objseg/layers.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace objseg::nn {

namespace {

// Upper bound on im2col buffer elements; larger batches are processed in chunks.
constexpr size_t kColumnBudget = size_t(1) << 24;

template <typename T>
void im2col(const Tensor<T>& x, int n0, int count, int k, int stride, int pad, int ho, int wo,
            T* col) {
  const int C = x.c(), H = x.h(), W = x.w();
  const size_t L = size_t(ho) * wo;
  const size_t row_len = L * count;
  for (int c = 0; c < C; ++c) {
    for (int kh = 0; kh < k; ++kh) {
      for (int kw = 0; kw < k; ++kw) {
        T* row = col + (size_t(c * k + kh) * k + kw) * row_len;
        for (int j = 0; j < count; ++j) {
          const T* src = x.plane(n0 + j, c);
          T* dst = row + j * L;
          for (int oy = 0; oy < ho; ++oy) {
            const int iy = oy * stride - pad + kh;
            T* d = dst + size_t(oy) * wo;
            if (iy < 0 || iy >= H) {
              std::fill_n(d, wo, T(0));
              continue;
            }
            const T* s = src + size_t(iy) * W;
            for (int ox = 0; ox < wo; ++ox) {
              const int ix = ox * stride - pad + kw;
              d[ox] = (ix >= 0 && ix < W) ? s[ix] : T(0);
            }
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* col, int n0, int count, int k, int stride, int pad, int ho, int wo,
            Tensor<T>& dx) {
  const int C = dx.c(), H = dx.h(), W = dx.w();
  const size_t L = size_t(ho) * wo;
  const size_t row_len = L * count;
  for (int c = 0; c < C; ++c) {
    for (int kh = 0; kh < k; ++kh) {
      for (int kw = 0; kw < k; ++kw) {
        const T* row = col + (size_t(c * k + kh) * k + kw) * row_len;
        for (int j = 0; j < count; ++j) {
          T* dst = dx.plane(n0 + j, c);
          const T* src = row + j * L;
          for (int oy = 0; oy < ho; ++oy) {
            const int iy = oy * stride - pad + kh;
            if (iy < 0 || iy >= H) continue;
            T* d = dst + size_t(iy) * W;
            const T* s = src + size_t(oy) * wo;
            for (int ox = 0; ox < wo; ++ox) {
              const int ix = ox * stride - pad + kw;
              if (ix >= 0 && ix < W) d[ix] += s[ox];
            }
          }
        }
      }
    }
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Conv2d

template <typename T>
Conv2d<T>::Conv2d(const std::string& name, int in_channels, int out_channels, int kernel,
                  int stride, int pad, bool bias)
    : in_(in_channels), out_(out_channels), kernel_(kernel), stride_(stride), pad_(pad),
      has_bias_(bias) {
  weight = {name + ".weight", Tensor<T>(out_, in_, kernel_, kernel_),
            Tensor<T>(out_, in_, kernel_, kernel_), true};
  if (has_bias_) this->bias = Parameter<T>{name + ".bias", Tensor<T>(1, out_, 1, 1), Tensor<T>(1, out_, 1, 1), true};
}

template <typename T>
void Conv2d<T>::init(std::mt19937_64& rng) {
  const double fan_in = double(in_) * kernel_ * kernel_;
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
  for (T& v : weight.value.span()) v = T(dist(rng));
  if (has_bias_) bias.value.fill(T(0));
}

template <typename T>
Tensor<T> Conv2d<T>::forward(const Tensor<T>& x) {
  if (x.c() != in_) throw std::invalid_argument("Conv2d " + weight.name + ": channel mismatch");
  input_ = x;
  const int N = x.n();
  const int ho = (x.h() + 2 * pad_ - kernel_) / stride_ + 1;
  const int wo = (x.w() + 2 * pad_ - kernel_) / stride_ + 1;
  Tensor<T> y(N, out_, ho, wo);
  if (N == 0) return y;
  const int K = in_ * kernel_ * kernel_;
  const size_t L = size_t(ho) * wo;
  const int chunk = std::clamp<int>(int(kColumnBudget / std::max<size_t>(1, K * L)), 1, N);
  std::vector<T> col(size_t(K) * L * chunk);
  std::vector<T> tmp(size_t(out_) * L * chunk);
  for (int n0 = 0; n0 < N; n0 += chunk) {
    const int cnt = std::min(chunk, N - n0);
    const int cols = int(L * cnt);
    im2col(x, n0, cnt, kernel_, stride_, pad_, ho, wo, col.data());
    gemm<T>(false, false, out_, cols, K, T(1), weight.value.data(), K, col.data(), cols, T(0),
            tmp.data(), cols);
    for (int j = 0; j < cnt; ++j) {
      for (int o = 0; o < out_; ++o) {
        const T b = has_bias_ ? bias.value.data()[o] : T(0);
        const T* src = tmp.data() + size_t(o) * cols + j * L;
        T* dst = y.plane(n0 + j, o);
        for (size_t l = 0; l < L; ++l) dst[l] = src[l] + b;
      }
    }
  }
  return y;
}

template <typename T>
Tensor<T> Conv2d<T>::backward(const Tensor<T>& gy) {
  const Tensor<T>& x = input_;
  const int N = x.n();
  Tensor<T> dx = Tensor<T>::zeros_like(x);
  if (N == 0) return dx;
  const int ho = gy.h(), wo = gy.w();
  const int K = in_ * kernel_ * kernel_;
  const size_t L = size_t(ho) * wo;
  const int chunk = std::clamp<int>(int(kColumnBudget / std::max<size_t>(1, K * L)), 1, N);
  std::vector<T> col(size_t(K) * L * chunk);
  std::vector<T> dcol(size_t(K) * L * chunk);
  std::vector<T> g(size_t(out_) * L * chunk);
  for (int n0 = 0; n0 < N; n0 += chunk) {
    const int cnt = std::min(chunk, N - n0);
    const int cols = int(L * cnt);
    for (int j = 0; j < cnt; ++j)
      for (int o = 0; o < out_; ++o)
        std::copy_n(gy.plane(n0 + j, o), L, g.data() + size_t(o) * cols + j * L);
    if (has_bias_) {
      for (int o = 0; o < out_; ++o) {
        double s = 0;
        const T* src = g.data() + size_t(o) * cols;
        for (int l = 0; l < cols; ++l) s += src[l];
        bias.grad.data()[o] += T(s);
      }
    }
    im2col(x, n0, cnt, kernel_, stride_, pad_, ho, wo, col.data());
    gemm<T>(false, true, out_, K, cols, T(1), g.data(), cols, col.data(), cols, T(1),
            weight.grad.data(), K);
    gemm<T>(true, false, K, cols, out_, T(1), weight.value.data(), K, g.data(), cols, T(0),
            dcol.data(), cols);
    col2im(dcol.data(), n0, cnt, kernel_, stride_, pad_, ho, wo, dx);
  }
  return dx;
}

template <typename T>
void Conv2d<T>::collect(ParamList<T>& out) {
  out.push_back(&weight);
  if (has_bias_) out.push_back(&bias);
}

// ---------------------------------------------------------------------------
// BatchNorm2d

template <typename T>
BatchNorm2d<T>::BatchNorm2d(const std::string& name, int channels, double momentum, double eps)
    : channels_(channels), momentum_(momentum), eps_(eps) {
  auto make = [&](const char* suffix, T fill, bool trainable) {
    return Parameter<T>{name + suffix, Tensor<T>(1, channels, 1, 1, fill),
                        Tensor<T>(1, channels, 1, 1), trainable};
  };
  gamma = make(".weight", T(1), true);
  beta = make(".bias", T(0), true);
  running_mean = make(".running_mean", T(0), false);
  running_var = make(".running_var", T(1), false);
}

template <typename T>
Tensor<T> BatchNorm2d<T>::forward(const Tensor<T>& x, bool training) {
  last_training_ = training;
  const int N = x.n(), C = x.c();
  const size_t P = x.plane_size();
  const double M = double(N) * P;
  Tensor<T> y(N, C, x.h(), x.w());
  xhat_ = Tensor<T>(N, C, x.h(), x.w());
  inv_std_.assign(C, 0.0);
  for (int c = 0; c < C; ++c) {
    double mean, var;
    if (training && M > 0) {
      double s = 0;
      for (int n = 0; n < N; ++n) {
        const T* p = x.plane(n, c);
        for (size_t i = 0; i < P; ++i) s += p[i];
      }
      mean = s / M;
      double ss = 0;
      for (int n = 0; n < N; ++n) {
        const T* p = x.plane(n, c);
        for (size_t i = 0; i < P; ++i) ss += (p[i] - mean) * (p[i] - mean);
      }
      var = ss / M;
      const double unbiased = M > 1 ? ss / (M - 1) : var;
      T& rm = running_mean.value.data()[c];
      T& rv = running_var.value.data()[c];
      rm = T((1 - momentum_) * rm + momentum_ * mean);
      rv = T((1 - momentum_) * rv + momentum_ * unbiased);
    } else {
      mean = running_mean.value.data()[c];
      var = running_var.value.data()[c];
    }
    const double inv = 1.0 / std::sqrt(var + eps_);
    inv_std_[c] = inv;
    const double g = gamma.value.data()[c], b = beta.value.data()[c];
    for (int n = 0; n < N; ++n) {
      const T* p = x.plane(n, c);
      T* xh = xhat_.plane(n, c);
      T* q = y.plane(n, c);
      for (size_t i = 0; i < P; ++i) {
        const double v = (p[i] - mean) * inv;
        xh[i] = T(v);
        q[i] = T(g * v + b);
      }
    }
  }
  return y;
}

template <typename T>
Tensor<T> BatchNorm2d<T>::backward(const Tensor<T>& gy) {
  const int N = gy.n(), C = gy.c();
  const size_t P = gy.plane_size();
  const double M = double(N) * P;
  Tensor<T> dx = Tensor<T>::zeros_like(gy);
  for (int c = 0; c < C; ++c) {
    double sum_g = 0, sum_gx = 0;
    for (int n = 0; n < N; ++n) {
      const T* g = gy.plane(n, c);
      const T* xh = xhat_.plane(n, c);
      for (size_t i = 0; i < P; ++i) {
        sum_g += g[i];
        sum_gx += g[i] * xh[i];
      }
    }
    gamma.grad.data()[c] += T(sum_gx);
    beta.grad.data()[c] += T(sum_g);
    const double scale = gamma.value.data()[c] * inv_std_[c];
    for (int n = 0; n < N; ++n) {
      const T* g = gy.plane(n, c);
      const T* xh = xhat_.plane(n, c);
      T* d = dx.plane(n, c);
      if (last_training_) {
        for (size_t i = 0; i < P; ++i)
          d[i] = T(scale * (g[i] - sum_g / M - xh[i] * sum_gx / M));
      } else {
        for (size_t i = 0; i < P; ++i) d[i] = T(scale * g[i]);
      }
    }
  }
  return dx;
}

template <typename T>
void BatchNorm2d<T>::collect(ParamList<T>& out) {
  out.push_back(&gamma);
  out.push_back(&beta);
  out.push_back(&running_mean);
  out.push_back(&running_var);
}

// ---------------------------------------------------------------------------
// InstanceNorm2d

template <typename T>
InstanceNorm2d<T>::InstanceNorm2d(const std::string& name, int channels, double eps)
    : channels_(channels), eps_(eps) {
  gamma = {name + ".weight", Tensor<T>(1, channels, 1, 1, T(1)), Tensor<T>(1, channels, 1, 1),
           true};
  beta = {name + ".bias", Tensor<T>(1, channels, 1, 1, T(0)), Tensor<T>(1, channels, 1, 1), true};
}

template <typename T>
Tensor<T> InstanceNorm2d<T>::forward(const Tensor<T>& x) {
  if (x.c() != channels_) throw std::invalid_argument("InstanceNorm2d: channel mismatch");
  const int N = x.n(), C = x.c();
  const size_t P = x.plane_size();
  Tensor<T> y(N, C, x.h(), x.w());
  input_ = x;
  xhat_ = Tensor<T>(N, C, x.h(), x.w());
  inv_std_.assign(size_t(N) * C, 0.0);
  for (int n = 0; n < N; ++n) {
    for (int c = 0; c < C; ++c) {
      const T* p = x.plane(n, c);
      double s = 0;
      for (size_t i = 0; i < P; ++i) s += p[i];
      const double mean = s / double(P);
      double ss = 0;
      for (size_t i = 0; i < P; ++i) ss += (p[i] - mean) * (p[i] - mean);
      const double inv = 1.0 / std::sqrt(ss / double(P) + eps_);
      inv_std_[size_t(n) * C + c] = inv;
      const double g = gamma.value.data()[c], b = beta.value.data()[c];
      T* xh = xhat_.plane(n, c);
      T* q = y.plane(n, c);
      for (size_t i = 0; i < P; ++i) {
        const double v = (p[i] - mean) * inv;
        xh[i] = T(v);
        q[i] = T(g * v + b);
      }
    }
  }
  return y;
}

template <typename T>
Tensor<T> InstanceNorm2d<T>::backward(const Tensor<T>& gy) {
  const int N = gy.n(), C = gy.c();
  const size_t P = gy.plane_size();
  const double M = double(P);
  Tensor<T> dx = Tensor<T>::zeros_like(gy);
  for (int n = 0; n < N; ++n) {
    for (int c = 0; c < C; ++c) {
      const T* g = gy.plane(n, c);
      const T* xh = xhat_.plane(n, c);
      double sum_g = 0, sum_gx = 0;
      for (size_t i = 0; i < P; ++i) {
        sum_g += g[i];
        sum_gx += g[i] * xh[i];
      }
      gamma.grad.data()[c] += T(sum_gx);
      beta.grad.data()[c] += T(sum_g);
      const double scale = gamma.value.data()[c] * inv_std_[size_t(n) * C + c];
      T* d = dx.plane(n, c);
      for (size_t i = 0; i < P; ++i) d[i] = T(scale * (g[i] - sum_g / M - xh[i] * sum_gx / M));
    }
  }
  return dx;
}

template <typename T>
void InstanceNorm2d<T>::collect(ParamList<T>& out) {
  out.push_back(&gamma);
  out.push_back(&beta);
}

// ---------------------------------------------------------------------------
// RoI crop

namespace {

struct Sample {
  int i0;
  double f;  // weight of i0 + 1
};

std::vector<Sample> roi_axis(double lo, double hi, double stride, int grid) {
  std::vector<Sample> out(grid);
  const double step = (hi - lo) / stride / grid;
  for (int i = 0; i < grid; ++i) {
    const double u = lo / stride + (i + 0.5) * step - 0.5;
    const double fl = std::floor(u);
    out[i] = {static_cast<int>(fl), u - fl};
  }
  return out;
}

}  // namespace

template <typename T>
Tensor<T> crop_resize(const Tensor<T>& feature, std::span<const RoiRef> rois, double stride,
                      int grid) {
  const int C = feature.c(), H = feature.h(), W = feature.w();
  Tensor<T> out(int(rois.size()), C, grid, grid);
  for (size_t r = 0; r < rois.size(); ++r) {
    const auto& roi = rois[r];
    if (roi.image < 0 || roi.image >= feature.n())
      throw std::invalid_argument("crop_resize: RoI image index out of range");
    const auto ys = roi_axis(roi.box.y1, roi.box.y2, stride, grid);
    const auto xs = roi_axis(roi.box.x1, roi.box.x2, stride, grid);
    for (int c = 0; c < C; ++c) {
      const T* src = feature.plane(roi.image, c);
      T* dst = out.plane(int(r), c);
      auto tap = [&](int y, int x) -> double {
        return (y >= 0 && y < H && x >= 0 && x < W) ? double(src[size_t(y) * W + x]) : 0.0;
      };
      for (int i = 0; i < grid; ++i) {
        const auto [y0, fy] = ys[i];
        for (int j = 0; j < grid; ++j) {
          const auto [x0, fx] = xs[j];
          const double v = (1 - fy) * ((1 - fx) * tap(y0, x0) + fx * tap(y0, x0 + 1)) +
                           fy * ((1 - fx) * tap(y0 + 1, x0) + fx * tap(y0 + 1, x0 + 1));
          dst[size_t(i) * grid + j] = T(v);
        }
      }
    }
  }
  return out;
}

template <typename T>
void crop_resize_backward(const Tensor<T>& grad_out, std::span<const RoiRef> rois, double stride,
                          Tensor<T>& grad_feature) {
  const int C = grad_feature.c(), H = grad_feature.h(), W = grad_feature.w();
  const int grid = grad_out.h();
  for (size_t r = 0; r < rois.size(); ++r) {
    const auto& roi = rois[r];
    const auto ys = roi_axis(roi.box.y1, roi.box.y2, stride, grid);
    const auto xs = roi_axis(roi.box.x1, roi.box.x2, stride, grid);
    for (int c = 0; c < C; ++c) {
      const T* src = grad_out.plane(int(r), c);
      T* dst = grad_feature.plane(roi.image, c);
      auto put = [&](int y, int x, double v) {
        if (y >= 0 && y < H && x >= 0 && x < W) dst[size_t(y) * W + x] += T(v);
      };
      for (int i = 0; i < grid; ++i) {
        const auto [y0, fy] = ys[i];
        for (int j = 0; j < grid; ++j) {
          const auto [x0, fx] = xs[j];
          const double g = src[size_t(i) * grid + j];
          put(y0, x0, (1 - fy) * (1 - fx) * g);
          put(y0, x0 + 1, (1 - fy) * fx * g);
          put(y0 + 1, x0, fy * (1 - fx) * g);
          put(y0 + 1, x0 + 1, fy * fx * g);
        }
      }
    }
  }
}

template class Conv2d<float>;
template class Conv2d<double>;
template class BatchNorm2d<float>;
template class BatchNorm2d<double>;
template class InstanceNorm2d<float>;
template class InstanceNorm2d<double>;
template Tensor<float> crop_resize(const Tensor<float>&, std::span<const RoiRef>, double, int);
template Tensor<double> crop_resize(const Tensor<double>&, std::span<const RoiRef>, double, int);
template void crop_resize_backward(const Tensor<float>&, std::span<const RoiRef>, double,
                                   Tensor<float>&);
template void crop_resize_backward(const Tensor<double>&, std::span<const RoiRef>, double,
                                   Tensor<double>&);

}  // namespace objseg::nn

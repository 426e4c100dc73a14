#define EIGEN_DONT_PARALLELIZE
#include "aerosdf/autodiff/kernels.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cstring>
#include <limits>
#include <vector>

namespace aerosdf::ad::kernels {

namespace {

template <typename T>
using RowMajor = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapRM = Eigen::Map<RowMajor<T>>;
template <typename T>
using ConstMapRM = Eigen::Map<const RowMajor<T>>;

// Valid output range [lo, hi) along one axis for kernel tap `tap`.
inline void valid_range(std::size_t out, std::size_t in, std::size_t stride, std::size_t padding,
                        std::size_t offset, std::size_t& lo, std::size_t& hi) {
  // input = o * stride + offset - padding must lie in [0, in)
  const auto s = static_cast<std::ptrdiff_t>(stride);
  const auto base = static_cast<std::ptrdiff_t>(offset) - static_cast<std::ptrdiff_t>(padding);
  std::ptrdiff_t first = base >= 0 ? 0 : (-base + s - 1) / s;
  std::ptrdiff_t last = (static_cast<std::ptrdiff_t>(in) - 1 - base);
  last = last < 0 ? -1 : last / s;
  lo = static_cast<std::size_t>(std::min<std::ptrdiff_t>(first, static_cast<std::ptrdiff_t>(out)));
  hi = static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(last + 1, static_cast<std::ptrdiff_t>(lo),
                                                           static_cast<std::ptrdiff_t>(out)));
}

// col[(c, kz, ky, kx), (oz, oy, ox)]
template <typename T>
void im2col(const ConvGeometry& g, const T* x, T* col) {
  const std::size_t P = g.out_spatial();
  const auto [D, H, W] = g.in;
  const auto [OD, OH, OW] = g.out;
  std::size_t row = 0;
  for (std::size_t c = 0; c < g.c; ++c) {
    const T* xc = x + c * g.in_spatial();
    for (std::size_t kz = 0; kz < g.kernel[0]; ++kz) {
      std::size_t z0, z1;
      valid_range(OD, D, g.stride, g.padding, kz * g.dilation, z0, z1);
      for (std::size_t ky = 0; ky < g.kernel[1]; ++ky) {
        std::size_t y0, y1;
        valid_range(OH, H, g.stride, g.padding, ky * g.dilation, y0, y1);
        for (std::size_t kx = 0; kx < g.kernel[2]; ++kx, ++row) {
          std::size_t x0, x1;
          valid_range(OW, W, g.stride, g.padding, kx * g.dilation, x0, x1);
          T* dst = col + row * P;
          std::fill(dst, dst + P, T(0));
          for (std::size_t oz = z0; oz < z1; ++oz) {
            const std::size_t iz = oz * g.stride + kz * g.dilation - g.padding;
            for (std::size_t oy = y0; oy < y1; ++oy) {
              const std::size_t iy = oy * g.stride + ky * g.dilation - g.padding;
              const T* src = xc + (iz * H + iy) * W;
              T* out = dst + (oz * OH + oy) * OW;
              const std::size_t ix0 = x0 * g.stride + kx * g.dilation - g.padding;
              if (g.stride == 1) {
                std::memcpy(out + x0, src + ix0, (x1 - x0) * sizeof(T));
              } else {
                for (std::size_t ox = x0, ix = ix0; ox < x1; ++ox, ix += g.stride) out[ox] = src[ix];
              }
            }
          }
        }
      }
    }
  }
}

// Adjoint of im2col: dx += scatter(col). dx must be zeroed by the caller.
template <typename T>
void col2im(const ConvGeometry& g, const T* col, T* dx) {
  const std::size_t P = g.out_spatial();
  const auto [D, H, W] = g.in;
  const auto [OD, OH, OW] = g.out;
  std::size_t row = 0;
  for (std::size_t c = 0; c < g.c; ++c) {
    T* xc = dx + c * g.in_spatial();
    for (std::size_t kz = 0; kz < g.kernel[0]; ++kz) {
      std::size_t z0, z1;
      valid_range(OD, D, g.stride, g.padding, kz * g.dilation, z0, z1);
      for (std::size_t ky = 0; ky < g.kernel[1]; ++ky) {
        std::size_t y0, y1;
        valid_range(OH, H, g.stride, g.padding, ky * g.dilation, y0, y1);
        for (std::size_t kx = 0; kx < g.kernel[2]; ++kx, ++row) {
          std::size_t x0, x1;
          valid_range(OW, W, g.stride, g.padding, kx * g.dilation, x0, x1);
          const T* src = col + row * P;
          for (std::size_t oz = z0; oz < z1; ++oz) {
            const std::size_t iz = oz * g.stride + kz * g.dilation - g.padding;
            for (std::size_t oy = y0; oy < y1; ++oy) {
              const std::size_t iy = oy * g.stride + ky * g.dilation - g.padding;
              T* dst = xc + (iz * H + iy) * W;
              const T* in = src + (oz * OH + oy) * OW;
              const std::size_t ix0 = x0 * g.stride + kx * g.dilation - g.padding;
              for (std::size_t ox = x0, ix = ix0; ox < x1; ++ox, ix += g.stride) dst[ix] += in[ox];
            }
          }
        }
      }
    }
  }
}

}  // namespace

std::size_t conv_output_extent(std::size_t n, std::size_t k, std::size_t stride, std::size_t padding,
                               std::size_t dilation, const char* axis) {
  if (stride < 1 || dilation < 1 || k < 1) throw ShapeError("stride, dilation and kernel extents must be >= 1");
  const auto span = static_cast<std::ptrdiff_t>(dilation * (k - 1) + 1);
  const auto padded = static_cast<std::ptrdiff_t>(n + 2 * padding);
  if (padded < span) {
    throw ShapeError(std::string("conv3d: axis ") + axis + " extent " + std::to_string(n) +
                     " too small for kernel span " + std::to_string(span) + " with padding " +
                     std::to_string(padding));
  }
  return static_cast<std::size_t>((padded - span) / static_cast<std::ptrdiff_t>(stride)) + 1;
}

std::size_t conv_transpose_output_extent(std::size_t n, std::size_t k, std::size_t stride, std::size_t padding,
                                         std::size_t dilation, std::size_t output_padding, const char* axis) {
  if (output_padding >= stride && output_padding >= dilation) {
    throw ShapeError("conv3d_transpose: output_padding must be smaller than stride or dilation");
  }
  const auto full = static_cast<std::ptrdiff_t>((n - 1) * stride + dilation * (k - 1) + 1 + output_padding);
  const auto out = full - 2 * static_cast<std::ptrdiff_t>(padding);
  if (n < 1 || out < 1) {
    throw ShapeError(std::string("conv3d_transpose: axis ") + axis + " produces an empty output");
  }
  return static_cast<std::size_t>(out);
}

ConvGeometry make_conv_geometry(const Shape& input, const Shape& kernel, std::size_t stride, std::size_t padding,
                                std::size_t dilation) {
  if (input.size() != 5) throw ShapeError("conv3d: input must be [N,C,D,H,W], got " + shape_string(input));
  if (kernel.size() != 5) throw ShapeError("conv3d: kernel must be [F,C,KD,KH,KW], got " + shape_string(kernel));
  if (kernel[1] != input[1]) {
    throw ShapeError("conv3d: axis C mismatch, input has " + std::to_string(input[1]) + " channels, kernel expects " +
                     std::to_string(kernel[1]));
  }
  ConvGeometry g;
  g.n = input[0];
  g.c = input[1];
  g.f = kernel[0];
  g.in = {input[2], input[3], input[4]};
  g.kernel = {kernel[2], kernel[3], kernel[4]};
  g.stride = stride;
  g.padding = padding;
  g.dilation = dilation;
  const char* names[3] = {"D", "H", "W"};
  for (int a = 0; a < 3; ++a) g.out[a] = conv_output_extent(g.in[a], g.kernel[a], stride, padding, dilation, names[a]);
  return g;
}

template <typename T>
void conv3d_forward(const ConvGeometry& g, const T* x, const T* w, const T* bias, T* y) {
  const std::size_t K = g.c * g.kernel_volume();
  const std::size_t P = g.out_spatial();
  const ConstMapRM<T> W(w, g.f, K);
  const auto n_batch = static_cast<std::ptrdiff_t>(g.n);
#pragma omp parallel
  {
    std::vector<T> col(K * P);
#pragma omp for schedule(static)
    for (std::ptrdiff_t n = 0; n < n_batch; ++n) {
      im2col(g, x + n * g.c * g.in_spatial(), col.data());
      MapRM<T> Y(y + n * g.f * P, g.f, P);
      Y.noalias() = W * ConstMapRM<T>(col.data(), K, P);
      if (bias) {
        for (std::size_t f = 0; f < g.f; ++f) Y.row(f).array() += bias[f];
      }
    }
  }
}

template <typename T>
void conv3d_backward_input(const ConvGeometry& g, const T* w, const T* dy, T* dx) {
  const std::size_t K = g.c * g.kernel_volume();
  const std::size_t P = g.out_spatial();
  const ConstMapRM<T> W(w, g.f, K);
  const auto n_batch = static_cast<std::ptrdiff_t>(g.n);
  std::fill(dx, dx + g.n * g.c * g.in_spatial(), T(0));
#pragma omp parallel
  {
    std::vector<T> col(K * P);
#pragma omp for schedule(static)
    for (std::ptrdiff_t n = 0; n < n_batch; ++n) {
      MapRM<T> C(col.data(), K, P);
      C.noalias() = W.transpose() * ConstMapRM<T>(dy + n * g.f * P, g.f, P);
      col2im(g, col.data(), dx + n * g.c * g.in_spatial());
    }
  }
}

template <typename T>
void conv3d_backward_weight(const ConvGeometry& g, const T* x, const T* dy, T* dw, T* db) {
  const std::size_t K = g.c * g.kernel_volume();
  const std::size_t P = g.out_spatial();
  const auto n_batch = static_cast<std::ptrdiff_t>(g.n);
  std::vector<T> partial(g.n * g.f * K);
#pragma omp parallel
  {
    std::vector<T> col(K * P);
#pragma omp for schedule(static)
    for (std::ptrdiff_t n = 0; n < n_batch; ++n) {
      im2col(g, x + n * g.c * g.in_spatial(), col.data());
      MapRM<T> Pn(partial.data() + n * g.f * K, g.f, K);
      Pn.noalias() = ConstMapRM<T>(dy + n * g.f * P, g.f, P) * ConstMapRM<T>(col.data(), K, P).transpose();
    }
  }
  std::fill(dw, dw + g.f * K, T(0));
  for (std::size_t n = 0; n < g.n; ++n) {
    const T* src = partial.data() + n * g.f * K;
    for (std::size_t i = 0; i < g.f * K; ++i) dw[i] += src[i];
  }
  if (db) {
    for (std::size_t f = 0; f < g.f; ++f) {
      double acc = 0.0;
      for (std::size_t n = 0; n < g.n; ++n) acc += pairwise_sum(dy + (n * g.f + f) * P, P);
      db[f] = static_cast<T>(acc);
    }
  }
}

template <typename T>
void maxpool3d_forward(std::size_t n, std::size_t c, const std::array<std::size_t, 3>& in, std::size_t window,
                       std::size_t stride, const T* x, T* y, std::size_t* argmax) {
  std::array<std::size_t, 3> out{};
  for (int a = 0; a < 3; ++a) out[a] = (in[a] - window) / stride + 1;
  const std::size_t in_sp = in[0] * in[1] * in[2];
  const std::size_t out_sp = out[0] * out[1] * out[2];
  const auto planes = static_cast<std::ptrdiff_t>(n * c);
#pragma omp parallel for schedule(static) if (planes * out_sp > 32768)
  for (std::ptrdiff_t plane = 0; plane < planes; ++plane) {
    const T* xp = x + plane * in_sp;
    std::size_t o = plane * out_sp;
    for (std::size_t oz = 0; oz < out[0]; ++oz) {
      for (std::size_t oy = 0; oy < out[1]; ++oy) {
        for (std::size_t ox = 0; ox < out[2]; ++ox, ++o) {
          std::size_t best = (oz * stride * in[1] + oy * stride) * in[2] + ox * stride;
          for (std::size_t kz = 0; kz < window; ++kz) {
            for (std::size_t ky = 0; ky < window; ++ky) {
              for (std::size_t kx = 0; kx < window; ++kx) {
                const std::size_t idx = ((oz * stride + kz) * in[1] + oy * stride + ky) * in[2] + ox * stride + kx;
                if (xp[idx] > xp[best]) best = idx;
              }
            }
          }
          y[o] = xp[best];
          argmax[o] = plane * in_sp + best;
        }
      }
    }
  }
}

template <typename T>
double pairwise_sum(const T* x, std::size_t n) {
  if (n <= 64) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += static_cast<double>(x[i]);
    return acc;
  }
  const std::size_t half = n / 2;
  return pairwise_sum(x, half) + pairwise_sum(x + half, n - half);
}

namespace reference {

template <typename T>
void conv3d_forward(const ConvGeometry& g, const T* x, const T* w, const T* bias, T* y) {
  const auto [D, H, W] = g.in;
  const auto [OD, OH, OW] = g.out;
  const auto [KD, KH, KW] = g.kernel;
  for (std::size_t n = 0; n < g.n; ++n)
    for (std::size_t f = 0; f < g.f; ++f)
      for (std::size_t oz = 0; oz < OD; ++oz)
        for (std::size_t oy = 0; oy < OH; ++oy)
          for (std::size_t ox = 0; ox < OW; ++ox) {
            double acc = bias ? static_cast<double>(bias[f]) : 0.0;
            for (std::size_t c = 0; c < g.c; ++c)
              for (std::size_t kz = 0; kz < KD; ++kz)
                for (std::size_t ky = 0; ky < KH; ++ky)
                  for (std::size_t kx = 0; kx < KW; ++kx) {
                    const auto iz = static_cast<std::ptrdiff_t>(oz * g.stride + kz * g.dilation) - static_cast<std::ptrdiff_t>(g.padding);
                    const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky * g.dilation) - static_cast<std::ptrdiff_t>(g.padding);
                    const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx * g.dilation) - static_cast<std::ptrdiff_t>(g.padding);
                    if (iz < 0 || iy < 0 || ix < 0 || iz >= static_cast<std::ptrdiff_t>(D) ||
                        iy >= static_cast<std::ptrdiff_t>(H) || ix >= static_cast<std::ptrdiff_t>(W))
                      continue;
                    acc += static_cast<double>(x[(((n * g.c + c) * D + iz) * H + iy) * W + ix]) *
                           static_cast<double>(w[(((f * g.c + c) * KD + kz) * KH + ky) * KW + kx]);
                  }
            y[(((n * g.f + f) * OD + oz) * OH + oy) * OW + ox] = static_cast<T>(acc);
          }
}

template <typename T>
void conv3d_backward_input(const ConvGeometry& g, const T* w, const T* dy, T* dx) {
  const auto [D, H, W] = g.in;
  const auto [OD, OH, OW] = g.out;
  const auto [KD, KH, KW] = g.kernel;
  std::vector<double> acc(g.n * g.c * g.in_spatial(), 0.0);
  for (std::size_t n = 0; n < g.n; ++n)
    for (std::size_t f = 0; f < g.f; ++f)
      for (std::size_t oz = 0; oz < OD; ++oz)
        for (std::size_t oy = 0; oy < OH; ++oy)
          for (std::size_t ox = 0; ox < OW; ++ox) {
            const double go = dy[(((n * g.f + f) * OD + oz) * OH + oy) * OW + ox];
            for (std::size_t c = 0; c < g.c; ++c)
              for (std::size_t kz = 0; kz < KD; ++kz)
                for (std::size_t ky = 0; ky < KH; ++ky)
                  for (std::size_t kx = 0; kx < KW; ++kx) {
                    const auto iz = static_cast<std::ptrdiff_t>(oz * g.stride + kz * g.dilation) - static_cast<std::ptrdiff_t>(g.padding);
                    const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky * g.dilation) - static_cast<std::ptrdiff_t>(g.padding);
                    const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx * g.dilation) - static_cast<std::ptrdiff_t>(g.padding);
                    if (iz < 0 || iy < 0 || ix < 0 || iz >= static_cast<std::ptrdiff_t>(D) ||
                        iy >= static_cast<std::ptrdiff_t>(H) || ix >= static_cast<std::ptrdiff_t>(W))
                      continue;
                    acc[(((n * g.c + c) * D + iz) * H + iy) * W + ix] +=
                        go * static_cast<double>(w[(((f * g.c + c) * KD + kz) * KH + ky) * KW + kx]);
                  }
          }
  for (std::size_t i = 0; i < acc.size(); ++i) dx[i] = static_cast<T>(acc[i]);
}

template <typename T>
void conv3d_backward_weight(const ConvGeometry& g, const T* x, const T* dy, T* dw, T* db) {
  const auto [D, H, W] = g.in;
  const auto [OD, OH, OW] = g.out;
  const auto [KD, KH, KW] = g.kernel;
  std::vector<double> acc(g.f * g.c * g.kernel_volume(), 0.0);
  std::vector<double> bacc(g.f, 0.0);
  for (std::size_t n = 0; n < g.n; ++n)
    for (std::size_t f = 0; f < g.f; ++f)
      for (std::size_t oz = 0; oz < OD; ++oz)
        for (std::size_t oy = 0; oy < OH; ++oy)
          for (std::size_t ox = 0; ox < OW; ++ox) {
            const double go = dy[(((n * g.f + f) * OD + oz) * OH + oy) * OW + ox];
            bacc[f] += go;
            for (std::size_t c = 0; c < g.c; ++c)
              for (std::size_t kz = 0; kz < KD; ++kz)
                for (std::size_t ky = 0; ky < KH; ++ky)
                  for (std::size_t kx = 0; kx < KW; ++kx) {
                    const auto iz = static_cast<std::ptrdiff_t>(oz * g.stride + kz * g.dilation) - static_cast<std::ptrdiff_t>(g.padding);
                    const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky * g.dilation) - static_cast<std::ptrdiff_t>(g.padding);
                    const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx * g.dilation) - static_cast<std::ptrdiff_t>(g.padding);
                    if (iz < 0 || iy < 0 || ix < 0 || iz >= static_cast<std::ptrdiff_t>(D) ||
                        iy >= static_cast<std::ptrdiff_t>(H) || ix >= static_cast<std::ptrdiff_t>(W))
                      continue;
                    acc[(((f * g.c + c) * KD + kz) * KH + ky) * KW + kx] +=
                        go * static_cast<double>(x[(((n * g.c + c) * D + iz) * H + iy) * W + ix]);
                  }
          }
  for (std::size_t i = 0; i < acc.size(); ++i) dw[i] = static_cast<T>(acc[i]);
  if (db) {
    for (std::size_t f = 0; f < g.f; ++f) db[f] = static_cast<T>(bacc[f]);
  }
}

}  // namespace reference

#define AEROSDF_INSTANTIATE(T)                                                                                  \
  template void conv3d_forward<T>(const ConvGeometry&, const T*, const T*, const T*, T*);                      \
  template void conv3d_backward_input<T>(const ConvGeometry&, const T*, const T*, T*);                         \
  template void conv3d_backward_weight<T>(const ConvGeometry&, const T*, const T*, T*, T*);                    \
  template void maxpool3d_forward<T>(std::size_t, std::size_t, const std::array<std::size_t, 3>&, std::size_t, \
                                     std::size_t, const T*, T*, std::size_t*);                                 \
  template double pairwise_sum<T>(const T*, std::size_t);                                                      \
  template void reference::conv3d_forward<T>(const ConvGeometry&, const T*, const T*, const T*, T*);           \
  template void reference::conv3d_backward_input<T>(const ConvGeometry&, const T*, const T*, T*);              \
  template void reference::conv3d_backward_weight<T>(const ConvGeometry&, const T*, const T*, T*, T*);

AEROSDF_INSTANTIATE(float)
AEROSDF_INSTANTIATE(double)

}  // namespace aerosdf::ad::kernels

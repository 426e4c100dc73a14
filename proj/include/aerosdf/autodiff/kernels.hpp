#pragma once

#include <array>
#include <cstddef>

#include "aerosdf/autodiff/tensor.hpp"

namespace aerosdf::ad::kernels {

/// Geometry of a 3D cross-correlation from x[N,C,D,H,W] with kernel
/// w[F,C,KD,KH,KW] to y[N,F,OD,OH,OW]; zero padding.
struct ConvGeometry {
  std::size_t n = 1, c = 1, f = 1;
  std::array<std::size_t, 3> in{1, 1, 1};
  std::array<std::size_t, 3> kernel{1, 1, 1};
  std::array<std::size_t, 3> out{1, 1, 1};
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t dilation = 1;

  std::size_t in_spatial() const { return in[0] * in[1] * in[2]; }
  std::size_t out_spatial() const { return out[0] * out[1] * out[2]; }
  std::size_t kernel_volume() const { return kernel[0] * kernel[1] * kernel[2]; }
};

/// floor((n + 2p - d(k-1) - 1) / s) + 1; throws if the result would be < 1.
std::size_t conv_output_extent(std::size_t n, std::size_t k, std::size_t stride, std::size_t padding,
                               std::size_t dilation, const char* axis);

/// (n - 1) s - 2p + d(k-1) + 1 + output_padding.
std::size_t conv_transpose_output_extent(std::size_t n, std::size_t k, std::size_t stride, std::size_t padding,
                                         std::size_t dilation, std::size_t output_padding, const char* axis);

/// Validates shapes and derives the output extents.
ConvGeometry make_conv_geometry(const Shape& input, const Shape& kernel, std::size_t stride, std::size_t padding,
                                std::size_t dilation);

// Fast path: im2col + GEMM, parallel over the batch. Results do not depend on
// the worker count (per-sample partials are reduced in a fixed order).

template <typename T>
void conv3d_forward(const ConvGeometry& g, const T* x, const T* w, const T* bias, T* y);

/// dx = conv^T(dy); dx is overwritten.
template <typename T>
void conv3d_backward_input(const ConvGeometry& g, const T* w, const T* dy, T* dx);

/// dw (and db when non-null) are overwritten.
template <typename T>
void conv3d_backward_weight(const ConvGeometry& g, const T* x, const T* dy, T* dw, T* db);

/// 2x2x2-style max pooling; argmax holds flat input offsets, first maximum wins.
template <typename T>
void maxpool3d_forward(std::size_t n, std::size_t c, const std::array<std::size_t, 3>& in, std::size_t window,
                       std::size_t stride, const T* x, T* y, std::size_t* argmax);

/// Deterministic pairwise sum, accumulated in double.
template <typename T>
double pairwise_sum(const T* x, std::size_t n);

namespace reference {

// Direct loops, single-threaded; kept as the oracle for the fast path.

template <typename T>
void conv3d_forward(const ConvGeometry& g, const T* x, const T* w, const T* bias, T* y);

template <typename T>
void conv3d_backward_input(const ConvGeometry& g, const T* w, const T* dy, T* dx);

template <typename T>
void conv3d_backward_weight(const ConvGeometry& g, const T* x, const T* dy, T* dw, T* db);

}  // namespace reference

}  // namespace aerosdf::ad::kernels

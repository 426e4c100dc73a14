#pragma once

#include <cstdint>
#include <vector>

#include "aerosdf/autodiff/tape.hpp"

namespace aerosdf::ad {

enum class Mode { kTrain, kEval };

/// Running batch statistics, one entry per channel. `var` tracks the unbiased
/// batch variance, as the usual deep-learning frameworks do.
template <typename T>
struct BatchNormState {
  Tensor<T> mean;
  Tensor<T> var;

  static BatchNormState fresh(std::size_t channels) {
    return {Tensor<T>({channels}, T(0)), Tensor<T>({channels}, T(1))};
  }
};

struct BatchNormOptions {
  double momentum = 0.1;
  double epsilon = 1e-5;
};

// Every op records onto the tape of its first valid input. Optional inputs
// (biases) may be default-constructed Vars.

/// Cross-correlation of x[N,C,D,H,W] with w[F,C,kd,kh,kw], zero padding.
template <typename T>
Var<T> conv3d(const Var<T>& x, const Var<T>& w, const Var<T>& bias, std::size_t stride = 1, std::size_t padding = 0,
              std::size_t dilation = 1);

/// Adjoint of conv3d; w is [C_in, C_out, kd, kh, kw].
template <typename T>
Var<T> conv3d_transpose(const Var<T>& x, const Var<T>& w, const Var<T>& bias, std::size_t stride = 2,
                        std::size_t padding = 1, std::size_t output_padding = 1, std::size_t dilation = 1);

template <typename T>
Var<T> maxpool3d(const Var<T>& x, std::size_t window = 2, std::size_t stride = 2);

/// Normalizes x[N,C,...] per channel over the batch and any trailing axes.
template <typename T>
Var<T> batchnorm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, BatchNormState<T>& state, Mode mode,
                 const BatchNormOptions& options = {});

/// Eval-mode batchnorm against fixed running statistics.
template <typename T>
Var<T> batchnorm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, const BatchNormState<T>& state,
                 const BatchNormOptions& options = {});

/// Inverted dropout; the mask depends only on (seed, element index).
template <typename T>
Var<T> dropout(const Var<T>& x, double rate, Mode mode, std::uint64_t seed);

/// x[N,K] · w[K,M] + b[M]
template <typename T>
Var<T> dense(const Var<T>& x, const Var<T>& w, const Var<T>& bias);

template <typename T>
Var<T> relu(const Var<T>& x);

template <typename T>
Var<T> sigmoid(const Var<T>& x);

template <typename T>
Var<T> square(const Var<T>& x);

template <typename T>
Var<T> scale(const Var<T>& x, double factor);

/// [N,C,...] -> [N,C]
template <typename T>
Var<T> global_avg_pool(const Var<T>& x);

/// [N,C,...] -> [N,1,...]; gradient to the first maximal channel.
template <typename T>
Var<T> channel_max(const Var<T>& x);

/// Elementwise maximum of equal shapes; ties route the gradient to `a`.
template <typename T>
Var<T> maximum(const Var<T>& a, const Var<T>& b);

/// Concatenation along axis 1.
template <typename T>
Var<T> concat(const std::vector<Var<T>>& parts);

/// Selects channels [begin, end) along axis 1.
template <typename T>
Var<T> slice_channels(const Var<T>& x, std::size_t begin, std::size_t end);

/// [N, ...] -> [N, prod(...)]
template <typename T>
Var<T> flatten(const Var<T>& x);

template <typename T>
Var<T> reshape(const Var<T>& x, Shape shape);

// Binary ops broadcast over axes where one operand has extent 1; ranks must match.
template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b);

template <typename T>
Var<T> sum(const Var<T>& x);

template <typename T>
Var<T> mean(const Var<T>& x);

/// Σ w_i x_i with constant weights of the same shape as x.
template <typename T>
Var<T> weighted_sum(const Var<T>& x, const Tensor<T>& weights);

}  // namespace aerosdf::ad

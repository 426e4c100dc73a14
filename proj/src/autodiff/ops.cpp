#include "aerosdf/autodiff/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

#include "aerosdf/autodiff/kernels.hpp"

namespace aerosdf::ad {

namespace {

template <typename T>
Tape<T>& tape_of(const Var<T>& x, const char* op) {
  if (!x.valid()) throw Error(std::string(op) + ": input is not bound to a tape");
  return *x.tape();
}

void require_rank(const Shape& s, std::size_t rank, const char* op, const char* what) {
  if (s.size() != rank) {
    throw ShapeError(std::string(op) + ": " + what + " must have rank " + std::to_string(rank) + ", got " +
                     shape_string(s));
  }
}

template <typename T>
void accumulate(Tensor<T>* sink, const Tensor<T>& g) {
  if (!sink) return;
  T* d = sink->data();
  const T* s = g.data();
  for (std::size_t i = 0; i < g.size(); ++i) d[i] += s[i];
}

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Output shape and per-operand strides for a broadcast binary op (stride 0 on broadcast axes).
struct Broadcast {
  Shape out;
  std::vector<std::size_t> sa, sb;
  bool same = false;
};

Broadcast broadcast(const Shape& a, const Shape& b, const char* op) {
  if (a.size() != b.size()) {
    throw ShapeError(std::string(op) + ": rank mismatch " + shape_string(a) + " vs " + shape_string(b));
  }
  Broadcast r;
  r.same = a == b;
  const std::size_t rank = a.size();
  r.out.resize(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    if (a[i] != b[i] && a[i] != 1 && b[i] != 1) {
      throw ShapeError(std::string(op) + ": axis " + std::to_string(i) + " mismatch " + shape_string(a) + " vs " +
                       shape_string(b));
    }
    r.out[i] = std::max(a[i], b[i]);
  }
  r.sa.assign(rank, 0);
  r.sb.assign(rank, 0);
  std::size_t st_a = 1, st_b = 1;
  for (std::size_t i = rank; i-- > 0;) {
    r.sa[i] = a[i] == 1 ? 0 : st_a;
    r.sb[i] = b[i] == 1 ? 0 : st_b;
    st_a *= a[i];
    st_b *= b[i];
  }
  return r;
}

// Calls f(out_index, a_index, b_index) in row-major output order.
template <typename F>
void for_each_broadcast(const Broadcast& bc, F&& f) {
  const std::size_t total = shape_size(bc.out);
  if (bc.same) {
    for (std::size_t i = 0; i < total; ++i) f(i, i, i);
    return;
  }
  const std::size_t rank = bc.out.size();
  if (total == 0) return;
  std::vector<std::size_t> idx(rank, 0);
  std::size_t ia = 0, ib = 0;
  const std::size_t inner = rank ? bc.out[rank - 1] : 1;
  const std::size_t ia_step = rank ? bc.sa[rank - 1] : 0;
  const std::size_t ib_step = rank ? bc.sb[rank - 1] : 0;
  for (std::size_t o = 0; o < total; o += inner) {
    std::size_t a = ia, b = ib;
    for (std::size_t k = 0; k < inner; ++k, a += ia_step, b += ib_step) f(o + k, a, b);
    for (std::size_t ax = rank - 1; ax-- > 0;) {
      ++idx[ax];
      ia += bc.sa[ax];
      ib += bc.sb[ax];
      if (idx[ax] < bc.out[ax]) break;
      ia -= bc.sa[ax] * idx[ax];
      ib -= bc.sb[ax] * idx[ax];
      idx[ax] = 0;
    }
  }
}

template <typename T>
std::size_t trailing_size(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t i = 2; i < s.size(); ++i) n *= s[i];
  return n;
}

}  // namespace

template <typename T>
Var<T> conv3d(const Var<T>& x, const Var<T>& w, const Var<T>& bias, std::size_t stride, std::size_t padding,
              std::size_t dilation) {
  auto& tape = tape_of(x, "conv3d");
  const auto g = kernels::make_conv_geometry(x.shape(), w.shape(), stride, padding, dilation);
  if (bias.valid() && bias.shape() != Shape{g.f}) {
    throw ShapeError("conv3d: bias must be [" + std::to_string(g.f) + "], got " + shape_string(bias.shape()));
  }
  Tensor<T> y({g.n, g.f, g.out[0], g.out[1], g.out[2]});
  kernels::conv3d_forward(g, x.value().data(), w.value().data(), bias.valid() ? bias.value().data() : nullptr,
                          y.data());
  return tape.record("conv3d", std::move(y), {x, w, bias}, [x, w, bias, g](Tape<T>& t, const Tensor<T>& gy) {
    if (auto* gx = t.grad_sink(x)) {
      Tensor<T> tmp(x.shape());
      kernels::conv3d_backward_input(g, w.value().data(), gy.data(), tmp.data());
      accumulate(gx, tmp);
    }
    auto* gw = t.grad_sink(w);
    auto* gb = t.grad_sink(bias);
    if (gw || gb) {
      Tensor<T> tw(w.shape());
      Tensor<T> tb({g.f});
      kernels::conv3d_backward_weight(g, x.value().data(), gy.data(), tw.data(), tb.data());
      accumulate(gw, tw);
      accumulate(gb, tb);
    }
  });
}

template <typename T>
Var<T> conv3d_transpose(const Var<T>& x, const Var<T>& w, const Var<T>& bias, std::size_t stride,
                        std::size_t padding, std::size_t output_padding, std::size_t dilation) {
  auto& tape = tape_of(x, "conv3d_transpose");
  const Shape& xs = x.shape();
  const Shape& ws = w.shape();
  require_rank(xs, 5, "conv3d_transpose", "input");
  require_rank(ws, 5, "conv3d_transpose", "kernel");
  if (ws[0] != xs[1]) {
    throw ShapeError("conv3d_transpose: axis C mismatch, input has " + std::to_string(xs[1]) +
                     " channels, kernel expects " + std::to_string(ws[0]));
  }
  // Geometry of the forward convolution whose input-gradient this op computes.
  kernels::ConvGeometry g;
  g.n = xs[0];
  g.f = ws[0];
  g.c = ws[1];
  g.kernel = {ws[2], ws[3], ws[4]};
  g.stride = stride;
  g.padding = padding;
  g.dilation = dilation;
  const char* names[3] = {"D", "H", "W"};
  for (int a = 0; a < 3; ++a) {
    g.in[a] = kernels::conv_transpose_output_extent(xs[2 + a], g.kernel[a], stride, padding, dilation,
                                                    output_padding, names[a]);
    g.out[a] = xs[2 + a];
    if (kernels::conv_output_extent(g.in[a], g.kernel[a], stride, padding, dilation, names[a]) != g.out[a]) {
      throw ShapeError(std::string("conv3d_transpose: axis ") + names[a] + " geometry is not invertible");
    }
  }
  if (bias.valid() && bias.shape() != Shape{g.c}) {
    throw ShapeError("conv3d_transpose: bias must be [" + std::to_string(g.c) + "], got " +
                     shape_string(bias.shape()));
  }
  Tensor<T> y({g.n, g.c, g.in[0], g.in[1], g.in[2]});
  kernels::conv3d_backward_input(g, w.value().data(), x.value().data(), y.data());
  if (bias.valid()) {
    const std::size_t sp = g.in_spatial();
    for (std::size_t n = 0; n < g.n; ++n)
      for (std::size_t c = 0; c < g.c; ++c) {
        T* p = y.data() + (n * g.c + c) * sp;
        const T b = bias.value()[c];
        for (std::size_t i = 0; i < sp; ++i) p[i] += b;
      }
  }
  return tape.record("conv3d_transpose", std::move(y), {x, w, bias},
                     [x, w, bias, g](Tape<T>& t, const Tensor<T>& gy) {
                       if (auto* gx = t.grad_sink(x)) {
                         Tensor<T> tmp(x.shape());
                         kernels::conv3d_forward<T>(g, gy.data(), w.value().data(), nullptr, tmp.data());
                         accumulate(gx, tmp);
                       }
                       if (auto* gw = t.grad_sink(w)) {
                         Tensor<T> tw(w.shape());
                         kernels::conv3d_backward_weight<T>(g, gy.data(), x.value().data(), tw.data(), nullptr);
                         accumulate(gw, tw);
                       }
                       if (auto* gb = t.grad_sink(bias)) {
                         const std::size_t sp = g.in_spatial();
                         for (std::size_t c = 0; c < g.c; ++c) {
                           double acc = 0.0;
                           for (std::size_t n = 0; n < g.n; ++n)
                             acc += kernels::pairwise_sum(gy.data() + (n * g.c + c) * sp, sp);
                           (*gb)[c] += static_cast<T>(acc);
                         }
                       }
                     });
}

template <typename T>
Var<T> maxpool3d(const Var<T>& x, std::size_t window, std::size_t stride) {
  auto& tape = tape_of(x, "maxpool3d");
  const Shape& s = x.shape();
  require_rank(s, 5, "maxpool3d", "input");
  if (window < 1 || stride < 1) throw ShapeError("maxpool3d: window and stride must be >= 1");
  std::array<std::size_t, 3> in{s[2], s[3], s[4]};
  Shape out_shape{s[0], s[1], 0, 0, 0};
  const char* names[3] = {"D", "H", "W"};
  for (int a = 0; a < 3; ++a) {
    if (in[a] < window) {
      throw ShapeError(std::string("maxpool3d: axis ") + names[a] + " extent " + std::to_string(in[a]) +
                       " smaller than window " + std::to_string(window));
    }
    out_shape[2 + a] = (in[a] - window) / stride + 1;
  }
  Tensor<T> y(out_shape);
  auto argmax = std::make_shared<std::vector<std::size_t>>(y.size());
  kernels::maxpool3d_forward(s[0], s[1], in, window, stride, x.value().data(), y.data(), argmax->data());
  return tape.record("maxpool3d", std::move(y), {x}, [x, argmax](Tape<T>& t, const Tensor<T>& gy) {
    if (auto* gx = t.grad_sink(x)) {
      for (std::size_t i = 0; i < gy.size(); ++i) (*gx)[(*argmax)[i]] += gy[i];
    }
  });
}

namespace {

template <typename T>
Var<T> batchnorm_impl(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, const BatchNormState<T>& state,
                      BatchNormState<T>* update, const BatchNormOptions& options) {
  const Mode mode = update ? Mode::kTrain : Mode::kEval;
  auto& tape = tape_of(x, "batchnorm");
  const Shape& s = x.shape();
  if (s.size() < 2) throw ShapeError("batchnorm: input must be [N,C,...], got " + shape_string(s));
  const std::size_t n = s[0], c = s[1], sp = trailing_size<T>(s);
  const Shape cs{c};
  if (gamma.shape() != cs || beta.shape() != cs) throw ShapeError("batchnorm: gamma/beta must be [C]");
  if (state.mean.shape() != cs || state.var.shape() != cs) throw ShapeError("batchnorm: running stats must be [C]");
  const std::size_t m = n * sp;
  if (mode == Mode::kTrain && m < 2) throw ShapeError("batchnorm: train mode needs more than one value per channel");

  const T* xv = x.value().data();
  auto xhat = std::make_shared<Tensor<T>>(s);
  auto inv_std = std::make_shared<std::vector<double>>(c);
  Tensor<T> y(s);
  for (std::size_t ch = 0; ch < c; ++ch) {
    double mu, var;
    if (mode == Mode::kTrain) {
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) acc += kernels::pairwise_sum(xv + (i * c + ch) * sp, sp);
      mu = acc / static_cast<double>(m);
      double sq = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const T* p = xv + (i * c + ch) * sp;
        for (std::size_t k = 0; k < sp; ++k) sq += (p[k] - mu) * (p[k] - mu);
      }
      var = sq / static_cast<double>(m);
      const double mom = options.momentum;
      update->mean[ch] = static_cast<T>((1.0 - mom) * state.mean[ch] + mom * mu);
      update->var[ch] = static_cast<T>((1.0 - mom) * state.var[ch] +
                                     mom * var * static_cast<double>(m) / static_cast<double>(m - 1));
    } else {
      mu = state.mean[ch];
      var = state.var[ch];
    }
    const double is = 1.0 / std::sqrt(var + options.epsilon);
    (*inv_std)[ch] = is;
    const double gm = gamma.value()[ch], bt = beta.value()[ch];
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t off = (i * c + ch) * sp;
      for (std::size_t k = 0; k < sp; ++k) {
        const double h = (xv[off + k] - mu) * is;
        (*xhat)[off + k] = static_cast<T>(h);
        y[off + k] = static_cast<T>(gm * h + bt);
      }
    }
  }
  const bool train = mode == Mode::kTrain;
  return tape.record("batchnorm", std::move(y), {x, gamma, beta},
                     [x, gamma, beta, xhat, inv_std, n, c, sp, m, train](Tape<T>& t, const Tensor<T>& gy) {
                       auto* gx = t.grad_sink(x);
                       auto* gg = t.grad_sink(gamma);
                       auto* gb = t.grad_sink(beta);
                       for (std::size_t ch = 0; ch < c; ++ch) {
                         double sum_g = 0.0, sum_gh = 0.0;
                         for (std::size_t i = 0; i < n; ++i) {
                           const std::size_t off = (i * c + ch) * sp;
                           for (std::size_t k = 0; k < sp; ++k) {
                             sum_g += gy[off + k];
                             sum_gh += static_cast<double>(gy[off + k]) * (*xhat)[off + k];
                           }
                         }
                         if (gg) (*gg)[ch] += static_cast<T>(sum_gh);
                         if (gb) (*gb)[ch] += static_cast<T>(sum_g);
                         if (!gx) continue;
                         const double gm = gamma.value()[ch];
                         const double is = (*inv_std)[ch];
                         const double md = static_cast<double>(m);
                         for (std::size_t i = 0; i < n; ++i) {
                           const std::size_t off = (i * c + ch) * sp;
                           for (std::size_t k = 0; k < sp; ++k) {
                             double d;
                             if (train) {
                               d = gm * is * (gy[off + k] - sum_g / md - (*xhat)[off + k] * sum_gh / md);
                             } else {
                               d = gm * is * gy[off + k];
                             }
                             (*gx)[off + k] += static_cast<T>(d);
                           }
                         }
                       }
                     });
}

}  // namespace

template <typename T>
Var<T> batchnorm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, BatchNormState<T>& state, Mode mode,
                 const BatchNormOptions& options) {
  return batchnorm_impl(x, gamma, beta, state, mode == Mode::kTrain ? &state : nullptr, options);
}

template <typename T>
Var<T> batchnorm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, const BatchNormState<T>& state,
                 const BatchNormOptions& options) {
  return batchnorm_impl<T>(x, gamma, beta, state, nullptr, options);
}

template <typename T>
Var<T> dropout(const Var<T>& x, double rate, Mode mode, std::uint64_t seed) {
  auto& tape = tape_of(x, "dropout");
  if (!(rate >= 0.0 && rate < 1.0)) throw Error("dropout: rate must lie in [0, 1)");
  if (mode == Mode::kEval || rate == 0.0) {
    return tape.record("dropout", x.value(), {x}, [x](Tape<T>& t, const Tensor<T>& gy) {
      accumulate(t.grad_sink(x), gy);
    });
  }
  const std::size_t count = x.value().size();
  auto mask = std::make_shared<std::vector<T>>(count);
  const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
  for (std::size_t i = 0; i < count; ++i) {
    const double u = static_cast<double>(splitmix(seed ^ splitmix(i)) >> 11) * 0x1.0p-53;
    (*mask)[i] = u >= rate ? keep_scale : T(0);
  }
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < count; ++i) y[i] = x.value()[i] * (*mask)[i];
  return tape.record("dropout", std::move(y), {x}, [x, mask](Tape<T>& t, const Tensor<T>& gy) {
    if (auto* gx = t.grad_sink(x)) {
      for (std::size_t i = 0; i < gy.size(); ++i) (*gx)[i] += gy[i] * (*mask)[i];
    }
  });
}

template <typename T>
Var<T> dense(const Var<T>& x, const Var<T>& w, const Var<T>& bias) {
  auto& tape = tape_of(x, "dense");
  require_rank(x.shape(), 2, "dense", "input");
  require_rank(w.shape(), 2, "dense", "weight");
  const std::size_t n = x.shape()[0], k = x.shape()[1], m = w.shape()[1];
  if (w.shape()[0] != k) {
    throw ShapeError("dense: axis K mismatch, input has " + std::to_string(k) + " features, weight expects " +
                     std::to_string(w.shape()[0]));
  }
  if (bias.valid() && bias.shape() != Shape{m}) throw ShapeError("dense: bias must be [M]");
  Tensor<T> y({n, m});
  const T* xv = x.value().data();
  const T* wv = w.value().data();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      double acc = bias.valid() ? static_cast<double>(bias.value()[j]) : 0.0;
      for (std::size_t q = 0; q < k; ++q) acc += static_cast<double>(xv[i * k + q]) * wv[q * m + j];
      y[i * m + j] = static_cast<T>(acc);
    }
  return tape.record("dense", std::move(y), {x, w, bias}, [x, w, bias, n, k, m](Tape<T>& t, const Tensor<T>& gy) {
    const T* xv = x.value().data();
    const T* wv = w.value().data();
    if (auto* gx = t.grad_sink(x)) {
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t q = 0; q < k; ++q) {
          double acc = 0.0;
          for (std::size_t j = 0; j < m; ++j) acc += static_cast<double>(gy[i * m + j]) * wv[q * m + j];
          (*gx)[i * k + q] += static_cast<T>(acc);
        }
    }
    if (auto* gw = t.grad_sink(w)) {
      for (std::size_t q = 0; q < k; ++q)
        for (std::size_t j = 0; j < m; ++j) {
          double acc = 0.0;
          for (std::size_t i = 0; i < n; ++i) acc += static_cast<double>(xv[i * k + q]) * gy[i * m + j];
          (*gw)[q * m + j] += static_cast<T>(acc);
        }
    }
    if (auto* gb = t.grad_sink(bias)) {
      for (std::size_t j = 0; j < m; ++j) {
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) acc += gy[i * m + j];
        (*gb)[j] += static_cast<T>(acc);
      }
    }
  });
}

template <typename T>
Var<T> relu(const Var<T>& x) {
  auto& tape = tape_of(x, "relu");
  Tensor<T> y(x.shape());
  const T* xv = x.value().data();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = xv[i] > T(0) ? xv[i] : T(0);
  return tape.record("relu", std::move(y), {x}, [x](Tape<T>& t, const Tensor<T>& gy) {
    if (auto* gx = t.grad_sink(x)) {
      const T* xv = x.value().data();
      for (std::size_t i = 0; i < gy.size(); ++i)
        if (xv[i] > T(0)) (*gx)[i] += gy[i];
    }
  });
}

namespace {

template <typename T>
T logistic(T v) {
  return v >= T(0) ? T(1) / (T(1) + std::exp(-v)) : std::exp(v) / (T(1) + std::exp(v));
}

}  // namespace

template <typename T>
Var<T> sigmoid(const Var<T>& x) {
  auto& tape = tape_of(x, "sigmoid");
  Tensor<T> y(x.shape());
  const T* xv = x.value().data();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = logistic(xv[i]);
  return tape.record("sigmoid", std::move(y), {x}, [x](Tape<T>& t, const Tensor<T>& gy) {
    if (auto* gx = t.grad_sink(x)) {
      const T* xv = x.value().data();
      for (std::size_t i = 0; i < gy.size(); ++i) {
        const T s = logistic(xv[i]);
        (*gx)[i] += gy[i] * s * (T(1) - s);
      }
    }
  });
}

template <typename T>
Var<T> square(const Var<T>& x) {
  auto& tape = tape_of(x, "square");
  Tensor<T> y(x.shape());
  const T* xv = x.value().data();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = xv[i] * xv[i];
  return tape.record("square", std::move(y), {x}, [x](Tape<T>& t, const Tensor<T>& gy) {
    if (auto* gx = t.grad_sink(x)) {
      const T* xv = x.value().data();
      for (std::size_t i = 0; i < gy.size(); ++i) (*gx)[i] += T(2) * xv[i] * gy[i];
    }
  });
}

template <typename T>
Var<T> scale(const Var<T>& x, double factor) {
  auto& tape = tape_of(x, "scale");
  Tensor<T> y(x.shape());
  const T f = static_cast<T>(factor);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = x.value()[i] * f;
  return tape.record("scale", std::move(y), {x}, [x, f](Tape<T>& t, const Tensor<T>& gy) {
    if (auto* gx = t.grad_sink(x)) {
      for (std::size_t i = 0; i < gy.size(); ++i) (*gx)[i] += gy[i] * f;
    }
  });
}

template <typename T>
Var<T> global_avg_pool(const Var<T>& x) {
  auto& tape = tape_of(x, "global_avg_pool");
  const Shape& s = x.shape();
  if (s.size() < 3) throw ShapeError("global_avg_pool: input must be [N,C,...], got " + shape_string(s));
  const std::size_t n = s[0], c = s[1], sp = trailing_size<T>(s);
  Tensor<T> y({n, c});
  for (std::size_t i = 0; i < n * c; ++i) {
    y[i] = static_cast<T>(kernels::pairwise_sum(x.value().data() + i * sp, sp) / static_cast<double>(sp));
  }
  return tape.record("global_avg_pool", std::move(y), {x}, [x, n, c, sp](Tape<T>& t, const Tensor<T>& gy) {
    if (auto* gx = t.grad_sink(x)) {
      for (std::size_t i = 0; i < n * c; ++i) {
        const T g = static_cast<T>(static_cast<double>(gy[i]) / static_cast<double>(sp));
        T* p = gx->data() + i * sp;
        for (std::size_t k = 0; k < sp; ++k) p[k] += g;
      }
    }
  });
}

template <typename T>
Var<T> channel_max(const Var<T>& x) {
  auto& tape = tape_of(x, "channel_max");
  const Shape& s = x.shape();
  if (s.size() < 2) throw ShapeError("channel_max: input must be [N,C,...], got " + shape_string(s));
  const std::size_t n = s[0], c = s[1], sp = trailing_size<T>(s);
  Shape out = s;
  out[1] = 1;
  Tensor<T> y(out);
  auto arg = std::make_shared<std::vector<std::size_t>>(n * sp);
  const T* xv = x.value().data();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < sp; ++k) {
      std::size_t best = i * c * sp + k;
      for (std::size_t ch = 1; ch < c; ++ch) {
        const std::size_t idx = (i * c + ch) * sp + k;
        if (xv[idx] > xv[best]) best = idx;
      }
      y[i * sp + k] = xv[best];
      (*arg)[i * sp + k] = best;
    }
  return tape.record("channel_max", std::move(y), {x}, [x, arg](Tape<T>& t, const Tensor<T>& gy) {
    if (auto* gx = t.grad_sink(x)) {
      for (std::size_t i = 0; i < gy.size(); ++i) (*gx)[(*arg)[i]] += gy[i];
    }
  });
}

template <typename T>
Var<T> maximum(const Var<T>& a, const Var<T>& b) {
  auto& tape = tape_of(a, "maximum");
  if (a.shape() != b.shape()) {
    throw ShapeError("maximum: shape mismatch " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
  Tensor<T> y(a.shape());
  const T* av = a.value().data();
  const T* bv = b.value().data();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = av[i] >= bv[i] ? av[i] : bv[i];
  return tape.record("maximum", std::move(y), {a, b}, [a, b](Tape<T>& t, const Tensor<T>& gy) {
    auto* ga = t.grad_sink(a);
    auto* gb = t.grad_sink(b);
    const T* av = a.value().data();
    const T* bv = b.value().data();
    for (std::size_t i = 0; i < gy.size(); ++i) {
      if (av[i] >= bv[i]) {
        if (ga) (*ga)[i] += gy[i];
      } else if (gb) {
        (*gb)[i] += gy[i];
      }
    }
  });
}

template <typename T>
Var<T> concat(const std::vector<Var<T>>& parts) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  auto& tape = tape_of(parts[0], "concat");
  const Shape& s0 = parts[0].shape();
  if (s0.size() < 2) throw ShapeError("concat: inputs must be [N,C,...]");
  std::size_t channels = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != s0.size()) throw ShapeError("concat: rank mismatch");
    for (std::size_t a = 0; a < s.size(); ++a) {
      if (a != 1 && s[a] != s0[a]) {
        throw ShapeError("concat: axis " + std::to_string(a) + " mismatch " + shape_string(s0) + " vs " +
                         shape_string(s));
      }
    }
    channels += s[1];
  }
  const std::size_t n = s0[0], sp = trailing_size<T>(s0);
  Shape out = s0;
  out[1] = channels;
  Tensor<T> y(out);
  std::vector<std::size_t> offsets;
  std::size_t off = 0;
  for (const auto& p : parts) {
    offsets.push_back(off);
    const std::size_t pc = p.shape()[1];
    for (std::size_t i = 0; i < n; ++i) {
      std::copy_n(p.value().data() + i * pc * sp, pc * sp, y.data() + (i * channels + off) * sp);
    }
    off += pc;
  }
  return tape.record("concat", std::move(y), parts,
                     [parts, offsets, n, sp, channels](Tape<T>& t, const Tensor<T>& gy) {
                       for (std::size_t j = 0; j < parts.size(); ++j) {
                         auto* g = t.grad_sink(parts[j]);
                         if (!g) continue;
                         const std::size_t pc = parts[j].shape()[1];
                         for (std::size_t i = 0; i < n; ++i) {
                           const T* src = gy.data() + (i * channels + offsets[j]) * sp;
                           T* dst = g->data() + i * pc * sp;
                           for (std::size_t k = 0; k < pc * sp; ++k) dst[k] += src[k];
                         }
                       }
                     });
}

template <typename T>
Var<T> slice_channels(const Var<T>& x, std::size_t begin, std::size_t end) {
  auto& tape = tape_of(x, "slice_channels");
  const Shape& s = x.shape();
  if (s.size() < 2 || begin >= end || end > s[1]) {
    throw ShapeError("slice_channels: range [" + std::to_string(begin) + "," + std::to_string(end) +
                     ") invalid for " + shape_string(s));
  }
  const std::size_t n = s[0], c = s[1], sp = trailing_size<T>(s), pc = end - begin;
  Shape out = s;
  out[1] = pc;
  Tensor<T> y(out);
  for (std::size_t i = 0; i < n; ++i) {
    std::copy_n(x.value().data() + (i * c + begin) * sp, pc * sp, y.data() + i * pc * sp);
  }
  return tape.record("slice_channels", std::move(y), {x}, [x, n, c, sp, pc, begin](Tape<T>& t, const Tensor<T>& gy) {
    if (auto* gx = t.grad_sink(x)) {
      for (std::size_t i = 0; i < n; ++i) {
        const T* src = gy.data() + i * pc * sp;
        T* dst = gx->data() + (i * c + begin) * sp;
        for (std::size_t k = 0; k < pc * sp; ++k) dst[k] += src[k];
      }
    }
  });
}

template <typename T>
Var<T> reshape(const Var<T>& x, Shape shape) {
  auto& tape = tape_of(x, "reshape");
  Tensor<T> y = x.value();
  y.reshape(std::move(shape));
  return tape.record("reshape", std::move(y), {x}, [x](Tape<T>& t, const Tensor<T>& gy) {
    if (auto* gx = t.grad_sink(x)) {
      for (std::size_t i = 0; i < gy.size(); ++i) (*gx)[i] += gy[i];
    }
  });
}

template <typename T>
Var<T> flatten(const Var<T>& x) {
  const Shape& s = x.shape();
  if (s.empty()) throw ShapeError("flatten: scalar input");
  return reshape(x, Shape{s[0], shape_size(s) / std::max<std::size_t>(s[0], 1)});
}

namespace {

enum class BinaryOp { kAdd, kSub, kMul };

template <typename T>
Var<T> binary(const Var<T>& a, const Var<T>& b, BinaryOp op, const char* name) {
  auto& tape = tape_of(a, name);
  const Broadcast bc = broadcast(a.shape(), b.shape(), name);
  Tensor<T> y(bc.out);
  const T* av = a.value().data();
  const T* bv = b.value().data();
  T* yv = y.data();
  switch (op) {
    case BinaryOp::kAdd:
      for_each_broadcast(bc, [&](std::size_t o, std::size_t i, std::size_t j) { yv[o] = av[i] + bv[j]; });
      break;
    case BinaryOp::kSub:
      for_each_broadcast(bc, [&](std::size_t o, std::size_t i, std::size_t j) { yv[o] = av[i] - bv[j]; });
      break;
    case BinaryOp::kMul:
      for_each_broadcast(bc, [&](std::size_t o, std::size_t i, std::size_t j) { yv[o] = av[i] * bv[j]; });
      break;
  }
  return tape.record(name, std::move(y), {a, b}, [a, b, bc, op](Tape<T>& t, const Tensor<T>& gy) {
    auto* ga = t.grad_sink(a);
    auto* gb = t.grad_sink(b);
    const T* av = a.value().data();
    const T* bv = b.value().data();
    const T* g = gy.data();
    if (ga) {
      T* d = ga->data();
      if (op == BinaryOp::kMul) {
        for_each_broadcast(bc, [&](std::size_t o, std::size_t i, std::size_t j) { d[i] += g[o] * bv[j]; });
      } else {
        for_each_broadcast(bc, [&](std::size_t o, std::size_t i, std::size_t) { d[i] += g[o]; });
      }
    }
    if (gb) {
      T* d = gb->data();
      if (op == BinaryOp::kMul) {
        for_each_broadcast(bc, [&](std::size_t o, std::size_t i, std::size_t j) { d[j] += g[o] * av[i]; });
      } else if (op == BinaryOp::kSub) {
        for_each_broadcast(bc, [&](std::size_t o, std::size_t, std::size_t j) { d[j] -= g[o]; });
      } else {
        for_each_broadcast(bc, [&](std::size_t o, std::size_t, std::size_t j) { d[j] += g[o]; });
      }
    }
  });
}

}  // namespace

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  return binary(a, b, BinaryOp::kAdd, "add");
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  return binary(a, b, BinaryOp::kSub, "sub");
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  return binary(a, b, BinaryOp::kMul, "mul");
}

template <typename T>
Var<T> sum(const Var<T>& x) {
  auto& tape = tape_of(x, "sum");
  Tensor<T> y({1});
  y[0] = static_cast<T>(kernels::pairwise_sum(x.value().data(), x.value().size()));
  return tape.record("sum", std::move(y), {x}, [x](Tape<T>& t, const Tensor<T>& gy) {
    if (auto* gx = t.grad_sink(x)) {
      for (std::size_t i = 0; i < gx->size(); ++i) (*gx)[i] += gy[0];
    }
  });
}

template <typename T>
Var<T> mean(const Var<T>& x) {
  const std::size_t n = x.value().size();
  if (n == 0) throw ShapeError("mean: empty input");
  return scale(sum(x), 1.0 / static_cast<double>(n));
}

template <typename T>
Var<T> weighted_sum(const Var<T>& x, const Tensor<T>& weights) {
  auto& tape = tape_of(x, "weighted_sum");
  if (weights.shape() != x.shape()) {
    throw ShapeError("weighted_sum: weights " + shape_string(weights.shape()) + " do not match input " +
                     shape_string(x.shape()));
  }
  std::vector<double> prod(weights.size());
  for (std::size_t i = 0; i < prod.size(); ++i) prod[i] = static_cast<double>(x.value()[i]) * weights[i];
  Tensor<T> y({1});
  y[0] = static_cast<T>(kernels::pairwise_sum(prod.data(), prod.size()));
  auto w = std::make_shared<Tensor<T>>(weights);
  return tape.record("weighted_sum", std::move(y), {x}, [x, w](Tape<T>& t, const Tensor<T>& gy) {
    if (auto* gx = t.grad_sink(x)) {
      for (std::size_t i = 0; i < gx->size(); ++i) (*gx)[i] += gy[0] * (*w)[i];
    }
  });
}

#define AEROSDF_INSTANTIATE_OPS(T)                                                                              \
  template Var<T> conv3d(const Var<T>&, const Var<T>&, const Var<T>&, std::size_t, std::size_t, std::size_t);    \
  template Var<T> conv3d_transpose(const Var<T>&, const Var<T>&, const Var<T>&, std::size_t, std::size_t,       \
                                   std::size_t, std::size_t);                                                   \
  template Var<T> maxpool3d(const Var<T>&, std::size_t, std::size_t);                                          \
  template Var<T> batchnorm(const Var<T>&, const Var<T>&, const Var<T>&, BatchNormState<T>&, Mode,              \
                            const BatchNormOptions&);                                                           \
  template Var<T> batchnorm(const Var<T>&, const Var<T>&, const Var<T>&, const BatchNormState<T>&,              \
                            const BatchNormOptions&);                                                           \
  template Var<T> dropout(const Var<T>&, double, Mode, std::uint64_t);                                          \
  template Var<T> dense(const Var<T>&, const Var<T>&, const Var<T>&);                                           \
  template Var<T> relu(const Var<T>&);                                                                          \
  template Var<T> sigmoid(const Var<T>&);                                                                       \
  template Var<T> square(const Var<T>&);                                                                        \
  template Var<T> scale(const Var<T>&, double);                                                                 \
  template Var<T> global_avg_pool(const Var<T>&);                                                               \
  template Var<T> channel_max(const Var<T>&);                                                                   \
  template Var<T> maximum(const Var<T>&, const Var<T>&);                                                        \
  template Var<T> concat(const std::vector<Var<T>>&);                                                           \
  template Var<T> slice_channels(const Var<T>&, std::size_t, std::size_t);                                      \
  template Var<T> flatten(const Var<T>&);                                                                       \
  template Var<T> reshape(const Var<T>&, Shape);                                                                \
  template Var<T> add(const Var<T>&, const Var<T>&);                                                            \
  template Var<T> sub(const Var<T>&, const Var<T>&);                                                            \
  template Var<T> mul(const Var<T>&, const Var<T>&);                                                            \
  template Var<T> sum(const Var<T>&);                                                                           \
  template Var<T> mean(const Var<T>&);                                                                          \
  template Var<T> weighted_sum(const Var<T>&, const Tensor<T>&);

AEROSDF_INSTANTIATE_OPS(float)
AEROSDF_INSTANTIATE_OPS(double)

}  // namespace aerosdf::ad

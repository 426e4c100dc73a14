#include "aerosdf/unet.hpp"

#include <cmath>

namespace aerosdf::unet {

namespace {

std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::size_t cube(std::size_t k) { return k * k * k; }

template <typename T>
void declare_batchnorm(const std::string& prefix, std::size_t channels, ParameterStore<T>& store,
                       StatsStore<T>& stats) {
  store.add(prefix + ".gamma", Tensor<T>({channels}, T(1)));
  store.add(prefix + ".beta", Tensor<T>({channels}, T(0)));
  stats.add(prefix, ad::BatchNormState<T>::fresh(channels));
}

}  // namespace

void UNetConfig::validate() const {
  if (depth < 1) throw Error("unet: depth must be >= 1");
  if (base_width < 1 || channel_multiplier < 1 || max_width < 1) throw Error("unet: widths must be >= 1");
  if (kernel < 1 || kernel % 2 == 0) throw Error("unet: kernel size must be odd");
  if (dilation < 1 || se_reduction < 1 || head_width < 1) throw Error("unet: dilation, reduction and head width must be >= 1");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw Error("unet: dropout must lie in [0, 1)");
  if (!(cd_scale > 0.0) || !std::isfinite(cd_offset)) throw Error("unet: invalid c_d output scaling");
  const char* names[3] = {"x", "y", "z"};
  for (int a = 0; a < 3; ++a) {
    if (depth >= 63 || dims[a] == 0 || dims[a] % (std::size_t{1} << depth) != 0) {
      throw ShapeError(std::string("unet: axis ") + names[a] + " extent " + std::to_string(dims[a]) +
                       " is not divisible by 2^" + std::to_string(depth));
    }
  }
}

std::vector<std::size_t> UNetConfig::widths() const {
  std::vector<std::size_t> w;
  std::size_t c = base_width;
  for (std::size_t l = 0; l <= depth; ++l) {
    w.push_back(std::min(c, max_width));
    c = std::min(c * channel_multiplier, max_width);
  }
  return w;
}

std::array<std::size_t, 3> UNetConfig::level_dims(std::size_t level) const {
  return {dims[0] >> level, dims[1] >> level, dims[2] >> level};
}

template <typename T>
Tensor<T> Initializer::kernel(Shape shape, std::size_t fan_in) {
  std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
  Tensor<T> t(std::move(shape));
  for (auto& v : t.values()) v = static_cast<T>(normal(rng_));
  return t;
}

template <typename T>
Var<T> Context<T>::batchnorm(const std::string& prefix, const Var<T>& x) {
  auto gamma = bind(prefix + ".gamma");
  auto beta = bind(prefix + ".beta");
  if (update) return ad::batchnorm(x, gamma, beta, update->at(prefix), Mode::kTrain);
  return ad::batchnorm(x, gamma, beta, stats.at(prefix));
}

// --- SE -------------------------------------------------------------------

std::size_t SeBlock::parameter_count() const {
  const std::size_t h = hidden();
  return channels * h + h + h * channels + channels + channels + 1;
}

template <typename T>
void SeBlock::declare(ParameterStore<T>& store, Initializer& init) const {
  const std::size_t h = hidden();
  store.add(prefix + ".fc1.w", init.kernel<T>({channels, h}, channels));
  store.add(prefix + ".fc1.b", Tensor<T>({h}));
  store.add(prefix + ".fc2.w", init.kernel<T>({h, channels}, h));
  store.add(prefix + ".fc2.b", Tensor<T>({channels}));
  store.add(prefix + ".spatial.w", init.kernel<T>({1, channels, 1, 1, 1}, channels));
  store.add(prefix + ".spatial.b", Tensor<T>({1}));
}

template <typename T>
Var<T> SeBlock::apply(Context<T>& ctx, const Var<T>& x) const {
  const Shape& s = x.shape();
  auto& b = ctx.bind;
  auto gate = ad::global_avg_pool(x);
  gate = ad::relu(ad::dense(gate, b(prefix + ".fc1.w"), b(prefix + ".fc1.b")));
  gate = ad::sigmoid(ad::dense(gate, b(prefix + ".fc2.w"), b(prefix + ".fc2.b")));
  Shape gate_shape(s.size(), 1);
  gate_shape[0] = s[0];
  gate_shape[1] = s[1];
  auto channel = ad::mul(x, ad::reshape(gate, gate_shape));
  auto spatial_gate = ad::sigmoid(ad::conv3d(x, b(prefix + ".spatial.w"), b(prefix + ".spatial.b")));
  auto spatial = ad::mul(x, spatial_gate);
  return ad::maximum(channel, spatial);
}

// --- encoder ----------------------------------------------------------------

std::size_t EncoderBlock::parameter_count() const {
  return se().parameter_count() + cube(kernel) * in_channels * out_channels + 2 * out_channels;
}

template <typename T>
void EncoderBlock::declare(ParameterStore<T>& store, StatsStore<T>& stats, Initializer& init) const {
  se().declare(store, init);
  store.add(prefix + ".conv.w",
            init.kernel<T>({out_channels, in_channels, kernel, kernel, kernel}, in_channels * cube(kernel)));
  declare_batchnorm(prefix + ".bn", out_channels, store, stats);
}

template <typename T>
Var<T> EncoderBlock::apply(Context<T>& ctx, const Var<T>& x) const {
  auto h = ad::relu(x);
  h = se().apply(ctx, h);
  h = ad::conv3d(h, ctx.bind(prefix + ".conv.w"), Var<T>{}, 1, dilation * (kernel - 1) / 2,
                 dilation);
  h = ad::maxpool3d(h, 2, 2);
  return ctx.batchnorm(prefix + ".bn", h);
}

// --- c_d head ---------------------------------------------------------------

std::size_t CdHead::parameter_count() const { return features * width + width + 2 * width + width + 1; }

template <typename T>
void CdHead::declare(ParameterStore<T>& store, StatsStore<T>& stats, Initializer& init) const {
  store.add(prefix + ".fc1.w", init.kernel<T>({features, width}, features));
  store.add(prefix + ".fc1.b", Tensor<T>({width}));
  declare_batchnorm(prefix + ".bn", width, store, stats);
  store.add(prefix + ".out.w", init.kernel<T>({width, 1}, width));
  store.add(prefix + ".out.b", Tensor<T>({1}));
}

template <typename T>
Var<T> CdHead::apply(Context<T>& ctx, const Var<T>& x) const {
  auto h = ad::flatten(x);
  h = ad::dropout(h, ctx.dropout, ctx.mode(), mix(ctx.dropout_seed ^ 0x1));
  h = ad::dense(h, ctx.bind(prefix + ".fc1.w"), ctx.bind(prefix + ".fc1.b"));
  h = ad::relu(h);
  h = ad::dropout(h, ctx.dropout, ctx.mode(), mix(ctx.dropout_seed ^ 0x2));
  h = ctx.batchnorm(prefix + ".bn", h);
  return ad::dense(h, ctx.bind(prefix + ".out.w"), ctx.bind(prefix + ".out.b"));
}

// --- decoder ----------------------------------------------------------------

std::size_t DecoderBlock::parameter_count() const {
  return se().parameter_count() + in_channels * out_channels * cube(kernel) + 2 * out_channels;
}

template <typename T>
void DecoderBlock::declare(ParameterStore<T>& store, StatsStore<T>& stats, Initializer& init) const {
  se().declare(store, init);
  store.add(prefix + ".convt.w",
            init.kernel<T>({in_channels, out_channels, kernel, kernel, kernel}, in_channels * cube(kernel)));
  declare_batchnorm(prefix + ".bn", out_channels, store, stats);
}

template <typename T>
Var<T> DecoderBlock::apply(Context<T>& ctx, const Var<T>& x) const {
  auto h = ad::relu(x);
  h = se().apply(ctx, h);
  h = ad::conv3d_transpose(h, ctx.bind(prefix + ".convt.w"), Var<T>{}, 2, (kernel - 1) / 2, 1);
  return ctx.batchnorm(prefix + ".bn", h);
}

std::size_t VelocityDecoder::parameter_count() const {
  std::size_t n = out_in_channels + 1;
  for (const auto& b : blocks) n += b.parameter_count();
  return n;
}

template <typename T>
void VelocityDecoder::declare(ParameterStore<T>& store, StatsStore<T>& stats, Initializer& init) const {
  for (std::size_t l = blocks.size(); l-- > 0;) blocks[l].declare(store, stats, init);
  store.add(prefix + ".out.w", init.kernel<T>({1, out_in_channels, 1, 1, 1}, out_in_channels));
  store.add(prefix + ".out.b", Tensor<T>({1}));
}

template <typename T>
Var<T> VelocityDecoder::apply(Context<T>& ctx, const std::vector<Var<T>>& skips) const {
  const std::size_t depth = blocks.size();
  if (skips.size() != depth + 1) throw ShapeError("velocity decoder: expected " + std::to_string(depth + 1) + " skips");
  Var<T> g = skips[depth];
  for (std::size_t l = depth; l-- > 0;) {
    const Var<T> in = l + 1 == depth ? g : ad::concat<T>({g, skips[l + 1]});
    g = blocks[l].apply(ctx, in);
  }
  return ad::conv3d(ad::concat<T>({g, skips[0]}), ctx.bind(prefix + ".out.w"), ctx.bind(prefix + ".out.b"));
}

// --- builders ---------------------------------------------------------------

EncoderBlock build_encoder_block(std::size_t in_channels, std::size_t out_channels, const UNetConfig& config,
                                 const std::string& prefix) {
  return {prefix, in_channels, out_channels, config.kernel, config.dilation, config.se_reduction};
}

SeBlock build_se_block(std::size_t channels, std::size_t reduction, const std::string& prefix) {
  return {prefix, channels, reduction};
}

CdHead build_cd_head(std::size_t feature_length, const UNetConfig& config, const std::string& prefix) {
  return {prefix, feature_length, config.head_width};
}

VelocityDecoder build_velocity_decoder(const UNetConfig& config, const std::string& prefix) {
  const auto w = config.widths();
  VelocityDecoder dec;
  dec.prefix = prefix;
  for (std::size_t l = 0; l < config.depth; ++l) {
    const std::size_t in = l + 1 == config.depth ? w[config.depth] : 2 * w[l + 1];
    dec.blocks.push_back({prefix + "." + std::to_string(l), in, w[l], config.kernel, config.se_reduction});
  }
  dec.out_in_channels = 2 * w[0];
  return dec;
}

std::size_t parameter_count(const UNetConfig& config) {
  config.validate();
  const auto w = config.widths();
  const std::size_t k3 = cube(config.kernel);
  auto se = [&](std::size_t c) {
    const std::size_t h = std::max<std::size_t>(1, c / config.se_reduction);
    return 2 * c * h + h + 2 * c + 1;
  };
  std::size_t n = k3 * w[0] + w[0];
  for (std::size_t l = 0; l < config.depth; ++l) n += se(w[l]) + k3 * w[l] * w[l + 1] + 2 * w[l + 1];
  const auto bottom = config.level_dims(config.depth);
  const std::size_t features = w[config.depth] * bottom[0] * bottom[1] * bottom[2];
  n += features * config.head_width + 4 * config.head_width + 1;
  if (config.predict_fields) {
    std::size_t dec = 2 * w[0] + 1;
    for (std::size_t l = 0; l < config.depth; ++l) {
      const std::size_t in = l + 1 == config.depth ? w[config.depth] : 2 * w[l + 1];
      dec += se(in) + k3 * in * w[l] + 2 * w[l];
    }
    n += 3 * dec;
  }
  return n;
}

// --- model ------------------------------------------------------------------

template <typename T>
UNetModel<T>::UNetModel(const UNetConfig& config) : config_(config) {
  config_.validate();
  const auto w = config_.widths();
  Initializer init(config_.seed);
  const std::size_t k = config_.kernel;
  params_.add("init.w", init.kernel<T>({w[0], 1, k, k, k}, cube(k)));
  params_.add("init.b", Tensor<T>({w[0]}));
  for (std::size_t l = 0; l < config_.depth; ++l) {
    encoder_.push_back(build_encoder_block(w[l], w[l + 1], config_, "enc" + std::to_string(l)));
    encoder_.back().declare(params_, stats_, init);
  }
  const auto bottom = config_.level_dims(config_.depth);
  head_ = build_cd_head(w[config_.depth] * bottom[0] * bottom[1] * bottom[2], config_);
  head_.declare(params_, stats_, init);
  if (config_.predict_fields) {
    for (const char* axis : {"u", "v", "w"}) {
      decoders_.push_back(build_velocity_decoder(config_, std::string("dec_") + axis));
      decoders_.back().declare(params_, stats_, init);
    }
  }
}

template <typename T>
Outputs<T> UNetModel<T>::run(Tape<T>& tape, const Tensor<T>& input, StatsStore<T>* update, bool requires_grad,
                             std::uint64_t dropout_seed) const {
  const Shape& s = input.shape();
  if (s.size() != 5) throw ShapeError("unet: input must be [N,1,nx,ny,nz], got " + ad::shape_string(s));
  if (s[1] != 1) throw ShapeError("unet: axis C must be 1, got " + std::to_string(s[1]));
  const char* names[3] = {"x", "y", "z"};
  for (int a = 0; a < 3; ++a) {
    if (s[2 + a] != config_.dims[a]) {
      throw ShapeError(std::string("unet: axis ") + names[a] + " extent " + std::to_string(s[2 + a]) +
                       " does not match the configured " + std::to_string(config_.dims[a]));
    }
  }
  Binder<T> bind(tape, params_, requires_grad);
  Context<T> ctx{bind, stats_, update, config_.dropout, dropout_seed};
  auto x = tape.leaf(input);
  auto h = ad::conv3d(x, bind("init.w"), bind("init.b"), 1, config_.kernel / 2, 1);
  std::vector<Var<T>> skips{h};
  for (const auto& block : encoder_) {
    h = block.apply(ctx, h);
    skips.push_back(h);
  }
  Outputs<T> out;
  out.cd = head_.apply(ctx, h);
  if (config_.cd_scale != 1.0 || config_.cd_offset != 0.0) {
    out.cd = ad::add(ad::scale(out.cd, config_.cd_scale),
                     tape.leaf(Tensor<T>({1, 1}, static_cast<T>(config_.cd_offset))));
  }
  if (config_.predict_fields) {
    std::vector<Var<T>> parts;
    for (const auto& dec : decoders_) parts.push_back(dec.apply(ctx, skips));
    out.fields = ad::concat(parts);
  }
  out.params = bind.vars();
  return out;
}

template <typename T>
Outputs<T> UNetModel<T>::forward(Tape<T>& tape, const Tensor<T>& input, Mode mode, std::uint64_t dropout_seed) {
  if (mode == Mode::kEval) return run(tape, input, nullptr, true, dropout_seed);
  return run(tape, input, &stats_, true, dropout_seed);
}

template <typename T>
Outputs<T> UNetModel<T>::forward(Tape<T>& tape, const Tensor<T>& input) const {
  return run(tape, input, nullptr, false, 0);
}

template <typename T>
std::vector<double> UNetModel<T>::predict_cd(const Tensor<T>& input) const {
  Tape<T> tape;
  const auto out = forward(tape, input);
  std::vector<double> cd;
  for (T v : out.cd.value().values()) cd.push_back(static_cast<double>(v));
  return cd;
}

#define AEROSDF_INSTANTIATE_UNET(T)                                                                           \
  template Tensor<T> Initializer::kernel<T>(Shape, std::size_t);                                             \
  template struct Context<T>;                                                                                \
  template void SeBlock::declare<T>(ParameterStore<T>&, Initializer&) const;                                 \
  template Var<T> SeBlock::apply<T>(Context<T>&, const Var<T>&) const;                                       \
  template void EncoderBlock::declare<T>(ParameterStore<T>&, StatsStore<T>&, Initializer&) const;            \
  template Var<T> EncoderBlock::apply<T>(Context<T>&, const Var<T>&) const;                                  \
  template void CdHead::declare<T>(ParameterStore<T>&, StatsStore<T>&, Initializer&) const;                  \
  template Var<T> CdHead::apply<T>(Context<T>&, const Var<T>&) const;                                        \
  template void DecoderBlock::declare<T>(ParameterStore<T>&, StatsStore<T>&, Initializer&) const;            \
  template Var<T> DecoderBlock::apply<T>(Context<T>&, const Var<T>&) const;                                  \
  template void VelocityDecoder::declare<T>(ParameterStore<T>&, StatsStore<T>&, Initializer&) const;         \
  template Var<T> VelocityDecoder::apply<T>(Context<T>&, const std::vector<Var<T>>&) const;                  \
  template class UNetModel<T>;

AEROSDF_INSTANTIATE_UNET(float)
AEROSDF_INSTANTIATE_UNET(double)

}  // namespace aerosdf::unet

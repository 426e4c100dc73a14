#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "aerosdf/autodiff/gradcheck.hpp"
#include "aerosdf/autodiff/ops.hpp"

namespace aerosdf::unet {

using ad::Mode;
using ad::Shape;
using ad::Tape;
using ad::Tensor;
using ad::Var;

struct UNetConfig {
  /// Input extents (nx, ny, nz); network tensors are [N, C, nx, ny, nz].
  std::array<std::size_t, 3> dims{64, 16, 16};
  std::size_t base_width = 8;
  std::size_t channel_multiplier = 2;
  std::size_t max_width = 512;
  std::size_t depth = 6;
  std::size_t kernel = 3;
  std::size_t dilation = 2;
  std::size_t se_reduction = 2;
  std::size_t head_width = 64;
  double dropout = 0.1;
  bool predict_fields = false;
  std::uint64_t seed = 0;
  /// Fixed affine map applied to the head output: cd = raw * cd_scale + cd_offset.
  double cd_offset = 0.0;
  double cd_scale = 1.0;

  void validate() const;
  /// Channel count after the initial conv (index 0) and after each encoder block.
  std::vector<std::size_t> widths() const;
  /// Spatial extents after `level` encoder blocks.
  std::array<std::size_t, 3> level_dims(std::size_t level) const;
};

/// Insertion-ordered name -> value map with unique names.
template <typename V>
class NamedStore {
 public:
  V& add(const std::string& name, V value) {
    if (index_.count(name)) throw Error("duplicate name '" + name + "'");
    index_[name] = values_.size();
    names_.push_back(name);
    values_.push_back(std::move(value));
    return values_.back();
  }
  std::size_t size() const { return values_.size(); }
  const std::string& name(std::size_t i) const { return names_[i]; }
  V& value(std::size_t i) { return values_[i]; }
  const V& value(std::size_t i) const { return values_[i]; }
  bool contains(const std::string& name) const { return index_.count(name) > 0; }
  std::size_t index_of(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw Error("unknown name '" + name + "'");
    return it->second;
  }
  V& at(const std::string& name) { return values_[index_of(name)]; }
  const V& at(const std::string& name) const { return values_[index_of(name)]; }

 private:
  std::vector<std::string> names_;
  std::vector<V> values_;
  std::map<std::string, std::size_t> index_;
};

template <typename T>
using ParameterStore = NamedStore<Tensor<T>>;
template <typename T>
using StatsStore = NamedStore<ad::BatchNormState<T>>;

template <typename T>
std::size_t element_count(const ParameterStore<T>& store) {
  std::size_t n = 0;
  for (std::size_t i = 0; i < store.size(); ++i) n += store.value(i).size();
  return n;
}

/// Seeded initializer: fan-in-scaled normal kernels, zero biases.
class Initializer {
 public:
  explicit Initializer(std::uint64_t seed) : rng_(seed) {}
  template <typename T>
  Tensor<T> kernel(Shape shape, std::size_t fan_in);

 private:
  std::mt19937_64 rng_;
};

/// Puts store entries on a tape as leaves, once per name.
template <typename T>
class Binder {
 public:
  Binder(Tape<T>& tape, const ParameterStore<T>& store, bool requires_grad)
      : tape_(&tape), store_(&store), requires_grad_(requires_grad), vars_(store.size()) {}

  Var<T> operator()(const std::string& name) {
    const std::size_t i = store_->index_of(name);
    if (!vars_[i].valid()) vars_[i] = tape_->leaf(store_->value(i), requires_grad_);
    return vars_[i];
  }
  /// Leaf for each store entry in store order; invalid for entries not used.
  const std::vector<Var<T>>& vars() const { return vars_; }
  Tape<T>& tape() { return *tape_; }

 private:
  Tape<T>* tape_;
  const ParameterStore<T>* store_;
  bool requires_grad_;
  std::vector<Var<T>> vars_;
};

/// Per-forward state shared by the blocks.
template <typename T>
struct Context {
  Binder<T>& bind;
  const StatsStore<T>& stats;
  StatsStore<T>* update;  // non-null in train mode
  double dropout = 0.0;
  std::uint64_t dropout_seed = 0;

  Mode mode() const { return update ? Mode::kTrain : Mode::kEval; }
  Var<T> batchnorm(const std::string& prefix, const Var<T>& x);
};

/// Concurrent squeeze-and-excitation: max(x * channel gate, x * spatial gate).
struct SeBlock {
  std::string prefix;
  std::size_t channels = 1;
  std::size_t reduction = 2;

  std::size_t hidden() const { return std::max<std::size_t>(1, channels / reduction); }
  std::size_t parameter_count() const;
  template <typename T>
  void declare(ParameterStore<T>& store, Initializer& init) const;
  template <typename T>
  Var<T> apply(Context<T>& ctx, const Var<T>& x) const;
};

/// relu -> SE -> dilated conv -> 2x max-pool -> batchnorm.
struct EncoderBlock {
  std::string prefix;
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::size_t kernel = 3;
  std::size_t dilation = 2;
  std::size_t reduction = 2;

  SeBlock se() const { return {prefix + ".se", in_channels, reduction}; }
  std::size_t parameter_count() const;
  template <typename T>
  void declare(ParameterStore<T>& store, StatsStore<T>& stats, Initializer& init) const;
  template <typename T>
  Var<T> apply(Context<T>& ctx, const Var<T>& x) const;
};

/// flatten -> dropout -> dense -> relu -> dropout -> batchnorm -> dense(1).
struct CdHead {
  std::string prefix;
  std::size_t features = 1;
  std::size_t width = 64;

  std::size_t parameter_count() const;
  template <typename T>
  void declare(ParameterStore<T>& store, StatsStore<T>& stats, Initializer& init) const;
  template <typename T>
  Var<T> apply(Context<T>& ctx, const Var<T>& x) const;
};

/// relu -> SE -> stride-2 transpose conv -> batchnorm.
struct DecoderBlock {
  std::string prefix;
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::size_t kernel = 3;
  std::size_t reduction = 2;

  SeBlock se() const { return {prefix + ".se", in_channels, reduction}; }
  std::size_t parameter_count() const;
  template <typename T>
  void declare(ParameterStore<T>& store, StatsStore<T>& stats, Initializer& init) const;
  template <typename T>
  Var<T> apply(Context<T>& ctx, const Var<T>& x) const;
};

/// Mirror of the encoder producing one channel at input resolution. Level
/// `l` consumes the level-(l+1) features concatenated with the matching skip.
struct VelocityDecoder {
  std::string prefix;
  std::vector<DecoderBlock> blocks;  // blocks[l] upsamples level l+1 -> l
  std::size_t out_in_channels = 2;   // channels entering the final 1x1x1 conv

  std::size_t parameter_count() const;
  template <typename T>
  void declare(ParameterStore<T>& store, StatsStore<T>& stats, Initializer& init) const;
  /// skips[l] is the encoder output at level l (skips[0] = initial conv output).
  template <typename T>
  Var<T> apply(Context<T>& ctx, const std::vector<Var<T>>& skips) const;
};

EncoderBlock build_encoder_block(std::size_t in_channels, std::size_t out_channels, const UNetConfig& config,
                                 const std::string& prefix = "enc");
SeBlock build_se_block(std::size_t channels, std::size_t reduction, const std::string& prefix = "se");
CdHead build_cd_head(std::size_t feature_length, const UNetConfig& config, const std::string& prefix = "head");
VelocityDecoder build_velocity_decoder(const UNetConfig& config, const std::string& prefix = "dec");

/// Closed-form parameter count.
std::size_t parameter_count(const UNetConfig& config);

template <typename T>
struct Outputs {
  Var<T> cd;      // [N, 1]
  Var<T> fields;  // [N, 3, nx, ny, nz]; invalid unless predict_fields
  std::vector<Var<T>> params;  // leaves in parameter-store order
};

template <typename T>
class UNetModel {
 public:
  explicit UNetModel(const UNetConfig& config);

  const UNetConfig& config() const { return config_; }
  UNetConfig& config() { return config_; }
  ParameterStore<T>& parameters() { return params_; }
  const ParameterStore<T>& parameters() const { return params_; }
  StatsStore<T>& batch_stats() { return stats_; }
  const StatsStore<T>& batch_stats() const { return stats_; }

  /// Train mode updates the running batch statistics; parameters are leaves requiring grad.
  Outputs<T> forward(Tape<T>& tape, const Tensor<T>& input, Mode mode, std::uint64_t dropout_seed = 0);
  /// Eval-mode forward; leaves do not require grad.
  Outputs<T> forward(Tape<T>& tape, const Tensor<T>& input) const;

  /// Eval-mode c_d per sample, in sample order.
  std::vector<double> predict_cd(const Tensor<T>& input) const;

 private:
  Outputs<T> run(Tape<T>& tape, const Tensor<T>& input, StatsStore<T>* update, bool requires_grad,
                 std::uint64_t dropout_seed) const;

  UNetConfig config_;
  std::vector<EncoderBlock> encoder_;
  CdHead head_;
  std::vector<VelocityDecoder> decoders_;
  ParameterStore<T> params_;
  StatsStore<T> stats_;
};

/// Central-difference check of every parameter of a 64-bit model built from
/// `config`, on a seeded random batch. The c_d output and the fields are each
/// checked against a fixed random projection, evaluated in train mode.
ad::GradCheckResult check_model_gradients(const UNetConfig& config, std::size_t batch, std::uint64_t seed,
                                          const ad::GradCheckOptions& options = {});

}  // namespace aerosdf::unet

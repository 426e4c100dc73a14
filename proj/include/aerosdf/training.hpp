#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "aerosdf/sdf.hpp"
#include "aerosdf/unet.hpp"

namespace aerosdf::training {

using unet::Shape;
using unet::Tape;
using unet::Tensor;
using unet::Var;

// --- data -------------------------------------------------------------------

/// Reorders an x-fastest grid volume into a [C, nx, ny, nz] tensor (z fastest).
Tensor<float> to_network(const sdf::Volume& volume);
/// Inverse of to_network for a tensor of shape [C, nx, ny, nz].
sdf::Volume from_network(const Tensor<float>& tensor, const sdf::GridSpec& grid);

struct Sample {
  std::string id;
  Tensor<float> input;   // [1, nx, ny, nz], normalized SDF
  double cd = 0.0;
  Tensor<float> fields;  // [3, nx, ny, nz]; empty when no field target exists
  double weight = 1.0;
  bool augmented = false;
};

struct Dataset {
  std::vector<Sample> train;
  std::vector<Sample> val;
};

/// Stacks the inputs of the selected samples into [B, 1, nx, ny, nz].
Tensor<float> stack_inputs(const std::vector<Sample>& samples, std::span<const std::size_t> indices);
/// Stacks the field targets of the selected samples into [B, 3, nx, ny, nz].
Tensor<float> stack_fields(const std::vector<Sample>& samples, std::span<const std::size_t> indices);

/// Eval-mode c_d predictions for every sample, in order, in batches of `batch_size`.
std::vector<double> predict_cd(const unet::UNetModel<float>& model, const std::vector<Sample>& samples,
                               std::size_t batch_size = 16);

// --- losses -----------------------------------------------------------------

struct SampleWeighting {
  double original = 1.0;
  double augmented = 0.5;

  void validate() const;
  double weight(bool is_augmented) const { return is_augmented ? augmented : original; }
};

/// Per cell and velocity component, laid out like one sample of the field
/// tensor: [3, nx, ny, nz].
struct FieldWeights {
  static constexpr double kLow = 0.5;
  static constexpr double kHigh = 4.0;
  std::array<std::size_t, 3> dims{};
  std::vector<double> values;
};

/// Population variance per cell component across samples, mapped linearly onto
/// [0.5, 4]; a constant variance maps every weight to 0.5.
FieldWeights compute_field_weights(const std::vector<const Tensor<float>*>& fields);
/// Field weights over the field targets of `samples`.
FieldWeights training_field_weights(const std::vector<Sample>& samples);

/// (1/n) sum_i w_i (pred_i - truth_i)^2.
double wmse_cd(std::span<const double> pred, std::span<const double> truth, std::span<const double> weights);
/// (1/n) sum_i sum_j w_i c_j (pred_ij - truth_ij)^2, where j runs over the
/// `cell_weights.size()` values of one sample.
double wmse_field(std::span<const double> pred, std::span<const double> truth, std::span<const double> cell_weights,
                  std::span<const double> sample_weights);

/// Differentiable c_d loss; `pred` is [N, 1].
template <typename T>
Var<T> wmse_cd_loss(const Var<T>& pred, std::span<const double> truth, std::span<const double> weights);
/// Differentiable field loss; `pred` is [N, 3, nx, ny, nz].
template <typename T>
Var<T> wmse_field_loss(const Var<T>& pred, const Tensor<T>& truth, const FieldWeights& cell_weights,
                       std::span<const double> sample_weights);

// --- optimizers -------------------------------------------------------------

enum class OptimizerKind { kAdam, kNadam };

OptimizerKind parse_optimizer(const std::string& name);
std::string optimizer_name(OptimizerKind kind);

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <typename T>
struct OptimizerState {
  std::uint64_t step = 0;
  std::vector<Tensor<T>> m;
  std::vector<Tensor<T>> v;
};

/// Adam with bias correction; moments are created on the first step.
template <typename T>
void adam_step(const std::vector<Tensor<T>*>& params, const std::vector<Tensor<T>>& grads, OptimizerState<T>& state,
               double lr, const AdamOptions& options = {});

/// Adam with a Nesterov lookahead on the first moment (constant momentum schedule).
template <typename T>
void nadam_step(const std::vector<Tensor<T>*>& params, const std::vector<Tensor<T>>& grads, OptimizerState<T>& state,
                double lr, const AdamOptions& options = {});

// --- schedules --------------------------------------------------------------

/// Multiplies the learning rate by `factor` (floored at `min_lr`) once the
/// monitored loss has failed to strictly improve for `patience` epochs in a row.
class PlateauScheduler {
 public:
  PlateauScheduler(double factor, std::size_t patience, double min_lr);
  double update(double loss, double lr);

 private:
  double factor_;
  std::size_t patience_;
  double min_lr_;
  double best_ = std::numeric_limits<double>::infinity();
  std::size_t stale_ = 0;
};

/// Replays a validation-loss history through a PlateauScheduler starting at `lr`.
double reduce_lr_on_plateau(std::span<const double> history, double lr, double factor, std::size_t patience,
                            double min_lr);

class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience);
  /// Records the loss of `epoch`; returns true when it is a new strict minimum.
  bool update(std::size_t epoch, double loss);
  bool should_stop() const { return stale_ >= patience_; }
  double best() const { return best_; }
  std::size_t best_epoch() const { return best_epoch_; }

 private:
  std::size_t patience_;
  double best_ = std::numeric_limits<double>::infinity();
  std::size_t best_epoch_ = 0;
  std::size_t stale_ = 0;
};

// --- training loop ----------------------------------------------------------

struct TrainConfig {
  OptimizerKind optimizer = OptimizerKind::kAdam;
  double learning_rate = 1e-3;
  AdamOptions adam;
  std::size_t batch_size = 16;
  std::size_t max_epochs = 300;
  double plateau_factor = 0.5;
  std::size_t plateau_patience = 10;
  double min_lr = 1e-6;
  std::size_t early_stop_patience = 30;
  /// Weight of the field loss in the multi-task objective.
  double field_loss_weight = 0.1;
  /// Sets the model's c_d output scaling from the train-split target mean and spread.
  bool fit_cd_scaling = true;
  std::uint64_t seed = 0;

  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  double lr = 0.0;
  double seconds = 0.0;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// What the epoch loop needs from a trainable model.
class EpochDriver {
 public:
  virtual ~EpochDriver() = default;
  /// Runs one pass over the training data; returns the mean training loss.
  virtual double train_epoch(std::size_t epoch, double lr) = 0;
  virtual double validation_loss() = 0;
  virtual void remember_best() = 0;
  virtual void restore_best() = 0;
};

struct LoopResult {
  std::vector<EpochRecord> log;
  std::size_t best_epoch = 0;
  double best_val = std::numeric_limits<double>::infinity();
  bool stopped_early = false;
};

/// Epoch loop with plateau decay and early stopping on the validation loss.
/// On return the driver holds the weights of the best epoch.
LoopResult run_epochs(EpochDriver& driver, const TrainConfig& config, const EpochCallback& on_epoch = {});

std::string epoch_log_csv(const std::vector<EpochRecord>& log);
void write_epoch_log(const std::vector<EpochRecord>& log, const std::filesystem::path& path);

// --- checkpoints ------------------------------------------------------------

struct NamedArray {
  std::string name;
  Shape shape;
  std::vector<float> values;

  bool operator==(const NamedArray&) const = default;
};

/// "CKPT", u32 version, length-prefixed key=value text, u32 array count, then per
/// array: length-prefixed name, u8 rank, u32 extents, f32 values.
struct Checkpoint {
  std::vector<std::pair<std::string, std::string>> meta;
  std::vector<NamedArray> arrays;

  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const;
  const std::string& get(const std::string& key) const;
  const NamedArray* find(const std::string& name) const;

  bool operator==(const Checkpoint&) const = default;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& checkpoint);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);
void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Parameters, batch-norm running statistics, the model config and (optionally)
/// optimizer moments.
Checkpoint make_checkpoint(const unet::UNetModel<float>& model, const OptimizerState<float>* optimizer = nullptr);
unet::UNetConfig config_from_checkpoint(const Checkpoint& checkpoint);
/// Rebuilds the model described by the checkpoint and loads its weights.
unet::UNetModel<float> model_from_checkpoint(const Checkpoint& checkpoint);
void restore_model(unet::UNetModel<float>& model, const Checkpoint& checkpoint);
void restore_optimizer(OptimizerState<float>& state, const unet::UNetModel<float>& model,
                       const Checkpoint& checkpoint);

struct TrainResult {
  Checkpoint best;
  std::vector<EpochRecord> log;
  std::size_t best_epoch = 0;
  double best_val = 0.0;
};

class Trainer : public EpochDriver {
 public:
  Trainer(unet::UNetModel<float>& model, const Dataset& data, const TrainConfig& config);

  double train_epoch(std::size_t epoch, double lr) override;
  double validation_loss() override;
  void remember_best() override;
  void restore_best() override;

  /// Mini-batches of train-sample indices for `epoch`: a seeded shuffle cut into
  /// batch_size pieces, a trailing single sample joining the previous batch.
  std::vector<std::vector<std::size_t>> epoch_batches(std::size_t epoch) const;
  /// One optimizer step on the given train samples; returns the batch loss.
  double step(std::span<const std::size_t> batch, double lr);

  const FieldWeights& field_weights() const { return field_weights_; }
  OptimizerState<float>& optimizer() { return optimizer_; }
  /// Optimizer state captured by the last remember_best().
  const OptimizerState<float>& best_optimizer() const { return best_optimizer_; }
  Checkpoint checkpoint() const;

 private:
  unet::UNetModel<float>* model_;
  const Dataset* data_;
  TrainConfig config_;
  FieldWeights field_weights_;
  OptimizerState<float> optimizer_;
  unet::ParameterStore<float> best_params_;
  unet::StatsStore<float> best_stats_;
  OptimizerState<float> best_optimizer_;
};

/// Trains `model` in place; on return it holds the best-epoch weights, which are
/// also returned as a checkpoint together with the epoch log.
TrainResult train(unet::UNetModel<float>& model, const Dataset& data, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

}  // namespace aerosdf::training

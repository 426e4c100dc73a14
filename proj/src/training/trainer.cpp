#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>

#include "aerosdf/common/random.hpp"
#include "aerosdf/training.hpp"

namespace aerosdf::training {

Trainer::Trainer(unet::UNetModel<float>& model, const Dataset& data, const TrainConfig& config)
    : model_(&model), data_(&data), config_(config) {
  config_.validate();
  if (data.train.size() < 2) throw Error("training split needs at least 2 samples");
  if (data.val.empty()) throw Error("validation split is empty");
  for (const auto& s : data.val) {
    if (s.augmented) throw Error("validation sample '" + s.id + "' is augmented");
  }
  if (model.config().predict_fields) field_weights_ = training_field_weights(data.train);
}

std::vector<std::vector<std::size_t>> Trainer::epoch_batches(std::size_t epoch) const {
  std::vector<std::size_t> order(data_->train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(derive_seed(config_.seed, epoch));
  for (std::size_t i = order.size(); i > 1; --i) {
    std::swap(order[i - 1], order[rng() % i]);
  }
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t begin = 0; begin < order.size(); begin += config_.batch_size) {
    const std::size_t end = std::min(order.size(), begin + config_.batch_size);
    if (end - begin == 1 && !batches.empty()) {
      batches.back().push_back(order[begin]);
    } else {
      batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(begin),
                           order.begin() + static_cast<std::ptrdiff_t>(end));
    }
  }
  return batches;
}

double Trainer::step(std::span<const std::size_t> batch, double lr) {
  const auto& samples = data_->train;
  std::vector<double> targets, weights;
  for (auto i : batch) {
    targets.push_back(samples.at(i).cd);
    weights.push_back(samples[i].weight);
  }
  Tape<float> tape;
  const std::uint64_t dropout_seed = derive_seed(config_.seed ^ 0xd50f, optimizer_.step);
  auto out = model_->forward(tape, stack_inputs(samples, batch), ad::Mode::kTrain, dropout_seed);
  auto loss = wmse_cd_loss(out.cd, targets, weights);
  if (out.fields.valid()) {
    auto field_loss = wmse_field_loss(out.fields, stack_fields(samples, batch), field_weights_, weights);
    loss = ad::add(loss, ad::scale(field_loss, config_.field_loss_weight));
  }
  const double value = loss.value()[0];
  if (!std::isfinite(value)) {
    throw Error("non-finite training loss at optimizer step " + std::to_string(optimizer_.step + 1));
  }
  tape.backward(loss);
  std::vector<Tensor<float>> grads;
  std::vector<Tensor<float>*> params;
  auto& store = model_->parameters();
  for (std::size_t i = 0; i < store.size(); ++i) {
    grads.push_back(tape.grad(out.params[i]));
    params.push_back(&store.value(i));
  }
  if (config_.optimizer == OptimizerKind::kAdam) {
    adam_step(params, grads, optimizer_, lr, config_.adam);
  } else {
    nadam_step(params, grads, optimizer_, lr, config_.adam);
  }
  return value;
}

double Trainer::train_epoch(std::size_t epoch, double lr) {
  double total = 0.0;
  std::size_t count = 0;
  const auto batches = epoch_batches(epoch);
  for (std::size_t b = 0; b < batches.size(); ++b) {
    double loss = 0.0;
    try {
      loss = step(batches[b], lr);
    } catch (const Error& e) {
      throw Error("epoch " + std::to_string(epoch) + ", batch " + std::to_string(b + 1) + ": " + e.what());
    }
    total += loss * static_cast<double>(batches[b].size());
    count += batches[b].size();
  }
  return total / static_cast<double>(count);
}

double Trainer::validation_loss() {
  const auto& val = data_->val;
  if (!model_->config().predict_fields) {
    const auto pred = predict_cd(*model_, val, config_.batch_size);
    std::vector<double> truth, ones(pred.size(), 1.0);
    for (const auto& s : val) truth.push_back(s.cd);
    return wmse_cd(pred, truth, ones);
  }
  // Multi-task models are selected on the training objective with unit sample weights.
  double cd_sum = 0.0, field_sum = 0.0;
  std::vector<std::size_t> batch;
  for (std::size_t begin = 0; begin < val.size(); begin += config_.batch_size) {
    batch.clear();
    for (std::size_t i = begin; i < std::min(val.size(), begin + config_.batch_size); ++i) batch.push_back(i);
    Tape<float> tape;
    const auto out = model_->forward(tape, stack_inputs(val, batch));
    const auto& cd = out.cd.value();
    const auto& fields = out.fields.value();
    const auto truth = stack_fields(val, batch);
    const std::size_t per = field_weights_.values.size();
    for (std::size_t b = 0; b < batch.size(); ++b) {
      const double e = cd[b] - val[batch[b]].cd;
      cd_sum += e * e;
      for (std::size_t j = 0; j < per; ++j) {
        const double d = static_cast<double>(fields[b * per + j]) - truth[b * per + j];
        field_sum += field_weights_.values[j] * d * d;
      }
    }
  }
  const double n = static_cast<double>(val.size());
  return cd_sum / n + config_.field_loss_weight * field_sum / n;
}

void Trainer::remember_best() {
  best_params_ = model_->parameters();
  best_stats_ = model_->batch_stats();
  best_optimizer_ = optimizer_;
}

void Trainer::restore_best() {
  if (best_params_.size() == 0) return;
  model_->parameters() = best_params_;
  model_->batch_stats() = best_stats_;
}

Checkpoint Trainer::checkpoint() const { return make_checkpoint(*model_, &optimizer_); }

TrainResult train(unet::UNetModel<float>& model, const Dataset& data, const TrainConfig& config,
                  const EpochCallback& on_epoch) {
  if (config.fit_cd_scaling) {
    if (data.train.size() < 2) throw Error("training split needs at least 2 samples");
    double mean = 0.0;
    for (const auto& s : data.train) mean += s.cd;
    mean /= static_cast<double>(data.train.size());
    double var = 0.0;
    for (const auto& s : data.train) var += (s.cd - mean) * (s.cd - mean);
    const double sd = std::sqrt(var / static_cast<double>(data.train.size()));
    model.config().cd_offset = mean;
    model.config().cd_scale = sd > 0.0 ? sd : 1.0;
  }
  Trainer trainer(model, data, config);
  LoopResult loop = run_epochs(trainer, config, on_epoch);
  TrainResult result;
  result.log = std::move(loop.log);
  result.best_epoch = loop.best_epoch;
  result.best_val = loop.best_val;
  result.best = make_checkpoint(model, &trainer.best_optimizer());
  result.best.set("train.optimizer", optimizer_name(config.optimizer));
  result.best.set("train.learning_rate", std::to_string(config.learning_rate));
  result.best.set("train.batch_size", std::to_string(config.batch_size));
  result.best.set("train.field_loss_weight", std::to_string(config.field_loss_weight));
  result.best.set("train.seed", std::to_string(config.seed));
  result.best.set("epoch", std::to_string(result.best_epoch));
  if (result.best_epoch > 0) result.best.set("lr", std::to_string(result.log[result.best_epoch - 1].lr));
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", result.best_val);
  result.best.set("best_val", buf);
  return result;
}

}  // namespace aerosdf::training

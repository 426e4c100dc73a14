#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "aerosdf/common/binary_io.hpp"
#include "aerosdf/training.hpp"

namespace aerosdf::training {

OptimizerKind parse_optimizer(const std::string& name) {
  if (name == "adam") return OptimizerKind::kAdam;
  if (name == "nadam") return OptimizerKind::kNadam;
  throw Error("unknown optimizer '" + name + "' (expected adam or nadam)");
}

std::string optimizer_name(OptimizerKind kind) { return kind == OptimizerKind::kAdam ? "adam" : "nadam"; }

namespace {

template <typename T, typename Update>
void moment_step(const std::vector<Tensor<T>*>& params, const std::vector<Tensor<T>>& grads, OptimizerState<T>& state,
                 const AdamOptions& o, Update update) {
  if (params.size() != grads.size()) throw Error("optimizer: parameter and gradient counts differ");
  if (state.m.empty()) {
    for (const auto* p : params) {
      state.m.emplace_back(p->shape());
      state.v.emplace_back(p->shape());
    }
  }
  if (state.m.size() != params.size()) throw Error("optimizer: state does not match the parameter list");
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(o.beta1, t);
  const double c2 = 1.0 - std::pow(o.beta2, t);
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor<T>& theta = *params[p];
    const Tensor<T>& g = grads[p];
    if (g.shape() != theta.shape() || state.m[p].shape() != theta.shape()) {
      throw ShapeError("optimizer: gradient " + std::to_string(p) + " has the wrong shape");
    }
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double gi = g[i];
      const double m = o.beta1 * state.m[p][i] + (1.0 - o.beta1) * gi;
      const double v = o.beta2 * state.v[p][i] + (1.0 - o.beta2) * gi * gi;
      state.m[p][i] = static_cast<T>(m);
      state.v[p][i] = static_cast<T>(v);
      theta[i] = static_cast<T>(theta[i] - update(m / c1, v / c2, gi / c1));
    }
  }
}

}  // namespace

template <typename T>
void adam_step(const std::vector<Tensor<T>*>& params, const std::vector<Tensor<T>>& grads, OptimizerState<T>& state,
               double lr, const AdamOptions& options) {
  moment_step(params, grads, state, options,
              [&](double m_hat, double v_hat, double) { return lr * m_hat / (std::sqrt(v_hat) + options.epsilon); });
}

template <typename T>
void nadam_step(const std::vector<Tensor<T>*>& params, const std::vector<Tensor<T>>& grads, OptimizerState<T>& state,
                double lr, const AdamOptions& options) {
  const double b1 = options.beta1;
  moment_step(params, grads, state, options, [&](double m_hat, double v_hat, double g_hat) {
    return lr * (b1 * m_hat + (1.0 - b1) * g_hat) / (std::sqrt(v_hat) + options.epsilon);
  });
}

template void adam_step(const std::vector<Tensor<float>*>&, const std::vector<Tensor<float>>&, OptimizerState<float>&,
                        double, const AdamOptions&);
template void adam_step(const std::vector<Tensor<double>*>&, const std::vector<Tensor<double>>&,
                        OptimizerState<double>&, double, const AdamOptions&);
template void nadam_step(const std::vector<Tensor<float>*>&, const std::vector<Tensor<float>>&,
                         OptimizerState<float>&, double, const AdamOptions&);
template void nadam_step(const std::vector<Tensor<double>*>&, const std::vector<Tensor<double>>&,
                         OptimizerState<double>&, double, const AdamOptions&);

PlateauScheduler::PlateauScheduler(double factor, std::size_t patience, double min_lr)
    : factor_(factor), patience_(patience), min_lr_(min_lr) {
  if (!(factor > 0.0 && factor < 1.0)) throw Error("plateau factor must lie in (0, 1)");
  if (patience < 1) throw Error("plateau patience must be at least 1");
}

double PlateauScheduler::update(double loss, double lr) {
  if (loss < best_) {
    best_ = loss;
    stale_ = 0;
    return lr;
  }
  if (++stale_ >= patience_) {
    stale_ = 0;
    return std::max(lr * factor_, min_lr_);
  }
  return lr;
}

double reduce_lr_on_plateau(std::span<const double> history, double lr, double factor, std::size_t patience,
                            double min_lr) {
  PlateauScheduler s(factor, patience, min_lr);
  for (double loss : history) lr = s.update(loss, lr);
  return lr;
}

EarlyStopping::EarlyStopping(std::size_t patience) : patience_(patience) {
  if (patience < 1) throw Error("early-stop patience must be at least 1");
}

bool EarlyStopping::update(std::size_t epoch, double loss) {
  if (loss < best_) {
    best_ = loss;
    best_epoch_ = epoch;
    stale_ = 0;
    return true;
  }
  ++stale_;
  return false;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw Error("learning rate must be positive");
  if (!(plateau_factor > 0.0 && plateau_factor < 1.0)) throw Error("plateau factor must lie in (0, 1)");
  if (plateau_patience < 1 || early_stop_patience < 1) throw Error("patience values must be at least 1");
  if (!(field_loss_weight >= 0.0)) throw Error("field loss weight must be non-negative");
  if (batch_size < 2) throw Error("batch size must be at least 2");
  if (max_epochs < 1) throw Error("max epochs must be at least 1");
  if (!(min_lr > 0.0)) throw Error("min learning rate must be positive");
}

LoopResult run_epochs(EpochDriver& driver, const TrainConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  PlateauScheduler scheduler(config.plateau_factor, config.plateau_patience, config.min_lr);
  EarlyStopping stopper(config.early_stop_patience);
  LoopResult result;
  double lr = config.learning_rate;
  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr;
    rec.train_loss = driver.train_epoch(epoch, lr);
    rec.val_loss = driver.validation_loss();
    if (!std::isfinite(rec.val_loss)) throw Error("non-finite validation loss at epoch " + std::to_string(epoch));
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.log.push_back(rec);
    if (on_epoch) on_epoch(rec);
    if (stopper.update(epoch, rec.val_loss)) driver.remember_best();
    if (stopper.should_stop()) {
      result.stopped_early = true;
      break;
    }
    lr = scheduler.update(rec.val_loss, lr);
  }
  result.best_epoch = stopper.best_epoch();
  result.best_val = stopper.best();
  driver.restore_best();
  return result;
}

std::string epoch_log_csv(const std::vector<EpochRecord>& log) {
  std::ostringstream os;
  os << "epoch,train_loss,val_loss,lr,seconds\n";
  char line[256];
  for (const auto& r : log) {
    std::snprintf(line, sizeof line, "%zu,%.9g,%.9g,%.9g,%.3f\n", r.epoch, r.train_loss, r.val_loss, r.lr, r.seconds);
    os << line;
  }
  return os.str();
}

void write_epoch_log(const std::vector<EpochRecord>& log, const std::filesystem::path& path) {
  const std::string text = epoch_log_csv(log);
  io::write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

}  // namespace aerosdf::training

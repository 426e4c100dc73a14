#include <algorithm>
#include <cmath>

#include "aerosdf/training.hpp"

namespace aerosdf::training {

void SampleWeighting::validate() const {
  if (!(original > 0.0 && original <= 1.0) || !(augmented > 0.0 && augmented <= 1.0)) {
    throw Error("sample weights must lie in (0, 1]");
  }
  if (augmented > original) throw Error("augmented sample weight exceeds the original weight");
}

FieldWeights compute_field_weights(const std::vector<const Tensor<float>*>& fields) {
  if (fields.size() < 2) throw Error("field weights need at least 2 training samples");
  const Shape& shape = fields[0]->shape();
  if (shape.size() != 4 || shape[0] != 3) throw ShapeError("field targets must be [3, nx, ny, nz]");
  const std::size_t count = fields[0]->size();
  std::vector<double> mean(count, 0.0), var(count, 0.0);
  for (const auto* f : fields) {
    if (f->shape() != shape) throw ShapeError("field targets differ in shape");
    for (std::size_t j = 0; j < count; ++j) mean[j] += (*f)[j];
  }
  const double n = static_cast<double>(fields.size());
  for (auto& m : mean) m /= n;
  for (const auto* f : fields) {
    for (std::size_t j = 0; j < count; ++j) {
      const double d = (*f)[j] - mean[j];
      var[j] += d * d;
    }
  }
  for (auto& v : var) v /= n;
  const auto [lo, hi] = std::minmax_element(var.begin(), var.end());
  const double min = *lo, range = *hi - *lo;
  FieldWeights w;
  w.dims = {shape[1], shape[2], shape[3]};
  w.values.resize(count, FieldWeights::kLow);
  if (range > 0.0) {
    for (std::size_t j = 0; j < count; ++j) {
      w.values[j] = FieldWeights::kLow + (FieldWeights::kHigh - FieldWeights::kLow) * ((var[j] - min) / range);
    }
  }
  return w;
}

FieldWeights training_field_weights(const std::vector<Sample>& samples) {
  std::vector<const Tensor<float>*> fields;
  for (const auto& s : samples) {
    if (s.fields.empty()) throw Error("sample '" + s.id + "' has no field target");
    fields.push_back(&s.fields);
  }
  return compute_field_weights(fields);
}

double wmse_cd(std::span<const double> pred, std::span<const double> truth, std::span<const double> weights) {
  if (pred.size() != truth.size() || pred.size() != weights.size()) {
    throw Error("wmse_cd: length mismatch (" + std::to_string(pred.size()) + " predictions, " +
                std::to_string(truth.size()) + " targets, " + std::to_string(weights.size()) + " weights)");
  }
  if (pred.empty()) throw Error("wmse_cd: no samples");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += weights[i] * (pred[i] - truth[i]) * (pred[i] - truth[i]);
  return s / static_cast<double>(pred.size());
}

double wmse_field(std::span<const double> pred, std::span<const double> truth, std::span<const double> cell_weights,
                  std::span<const double> sample_weights) {
  const std::size_t per = cell_weights.size();
  const std::size_t n = sample_weights.size();
  if (n == 0 || per == 0) throw Error("wmse_field: no samples");
  if (pred.size() != truth.size() || pred.size() != n * per) {
    throw Error("wmse_field: length mismatch (" + std::to_string(pred.size()) + " predictions, " +
                std::to_string(truth.size()) + " targets, expected " + std::to_string(n * per) + ")");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < per; ++j) {
      const double e = pred[i * per + j] - truth[i * per + j];
      s += cell_weights[j] * e * e;
    }
    total += sample_weights[i] * s;
  }
  return total / static_cast<double>(n);
}

template <typename T>
Var<T> wmse_cd_loss(const Var<T>& pred, std::span<const double> truth, std::span<const double> weights) {
  const std::size_t n = truth.size();
  if (pred.shape() != Shape{n, 1} || weights.size() != n) {
    throw ShapeError("wmse_cd: prediction " + ad::shape_string(pred.shape()) + " does not match " + std::to_string(n) +
                     " targets and " + std::to_string(weights.size()) + " weights");
  }
  Tensor<T> target({n, 1}), w({n, 1});
  for (std::size_t i = 0; i < n; ++i) {
    target[i] = static_cast<T>(truth[i]);
    w[i] = static_cast<T>(weights[i] / static_cast<double>(n));
  }
  auto err = ad::sub(pred, pred.tape()->leaf(std::move(target)));
  return ad::weighted_sum(ad::square(err), w);
}

template <typename T>
Var<T> wmse_field_loss(const Var<T>& pred, const Tensor<T>& truth, const FieldWeights& cell_weights,
                       std::span<const double> sample_weights) {
  const std::size_t n = sample_weights.size();
  const std::size_t per = cell_weights.values.size();
  if (pred.shape() != truth.shape() || pred.value().size() != n * per || pred.shape()[0] != n) {
    throw ShapeError("wmse_field: prediction " + ad::shape_string(pred.shape()) + ", target " +
                     ad::shape_string(truth.shape()) + " and weights disagree");
  }
  Tensor<T> w(pred.shape());
  for (std::size_t i = 0; i < n; ++i) {
    const double s = sample_weights[i] / static_cast<double>(n);
    for (std::size_t j = 0; j < per; ++j) w[i * per + j] = static_cast<T>(s * cell_weights.values[j]);
  }
  auto err = ad::sub(pred, pred.tape()->leaf(truth));
  return ad::weighted_sum(ad::square(err), w);
}

#define AEROSDF_INSTANTIATE_LOSSES(T)                                                                  \
  template Var<T> wmse_cd_loss(const Var<T>&, std::span<const double>, std::span<const double>);      \
  template Var<T> wmse_field_loss(const Var<T>&, const Tensor<T>&, const FieldWeights&, std::span<const double>);

AEROSDF_INSTANTIATE_LOSSES(float)
AEROSDF_INSTANTIATE_LOSSES(double)

}  // namespace aerosdf::training

#include "aerosdf/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "aerosdf/common/binary_io.hpp"
#include "aerosdf/common/error.hpp"

namespace aerosdf::evaluation {

namespace {

void check_pair(std::span<const double> truth, std::span<const double> pred) {
  if (truth.size() != pred.size()) {
    throw Error("length mismatch: " + std::to_string(truth.size()) + " true values, " + std::to_string(pred.size()) +
                " predictions");
  }
  if (truth.empty()) throw Error("metrics need at least one sample");
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  io::write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

}  // namespace

double r2_score(std::span<const double> truth, std::span<const double> pred) {
  check_pair(truth, pred);
  if (truth.size() < 2) throw Error("R2 needs at least two samples");
  double mean = 0.0;
  for (double t : truth) mean += t;
  mean /= static_cast<double>(truth.size());
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    ss_res += (truth[i] - pred[i]) * (truth[i] - pred[i]);
    ss_tot += (truth[i] - mean) * (truth[i] - mean);
  }
  if (ss_tot == 0.0) throw Error("R2 is undefined for constant true values");
  return 1.0 - ss_res / ss_tot;
}

double mae(std::span<const double> truth, std::span<const double> pred) {
  check_pair(truth, pred);
  double sum = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) sum += std::abs(truth[i] - pred[i]);
  return sum / static_cast<double>(truth.size());
}

double max_ae(std::span<const double> truth, std::span<const double> pred) {
  check_pair(truth, pred);
  double worst = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) worst = std::max(worst, std::abs(truth[i] - pred[i]));
  return worst;
}

double relative_l2(const std::vector<std::vector<double>>& truth, const std::vector<std::vector<double>>& pred) {
  if (truth.size() != pred.size()) throw Error("relative L2: sample count mismatch");
  if (truth.empty()) throw Error("relative L2 needs at least one sample");
  double sum = 0.0;
  for (std::size_t s = 0; s < truth.size(); ++s) {
    if (truth[s].size() != pred[s].size()) throw Error("relative L2: field size mismatch in sample " + std::to_string(s));
    double num = 0.0, den = 0.0;
    for (std::size_t j = 0; j < truth[s].size(); ++j) {
      num += (truth[s][j] - pred[s][j]) * (truth[s][j] - pred[s][j]);
      den += truth[s][j] * truth[s][j];
    }
    if (den == 0.0) throw Error("relative L2 is undefined for a zero true field (sample " + std::to_string(s) + ")");
    sum += std::sqrt(num) / std::sqrt(den);
  }
  return sum / static_cast<double>(truth.size());
}

double relative_l2(const std::vector<const Tensor<float>*>& truth, const std::vector<Tensor<float>>& pred) {
  std::vector<std::vector<double>> t, p;
  for (const auto* x : truth) t.emplace_back(x->values().begin(), x->values().end());
  for (const auto& x : pred) p.emplace_back(x.values().begin(), x.values().end());
  return relative_l2(t, p);
}

MetricsReport make_report(std::vector<Prediction> predictions) {
  std::vector<double> truth, pred;
  for (const auto& p : predictions) {
    truth.push_back(p.truth);
    pred.push_back(p.pred);
  }
  MetricsReport r;
  r.r2 = r2_score(truth, pred);
  r.mae = mae(truth, pred);
  r.max_ae = max_ae(truth, pred);
  r.n_test = predictions.size();
  r.predictions = std::move(predictions);
  return r;
}

std::vector<Tensor<float>> predict_fields(const unet::UNetModel<float>& model, const std::vector<Sample>& samples,
                                          std::size_t batch_size) {
  if (!model.config().predict_fields) throw Error("the model has no velocity decoders");
  if (batch_size < 1) throw Error("batch size must be >= 1");
  std::vector<Tensor<float>> out;
  std::vector<std::size_t> batch;
  for (std::size_t begin = 0; begin < samples.size(); begin += batch_size) {
    batch.clear();
    for (std::size_t i = begin; i < std::min(samples.size(), begin + batch_size); ++i) batch.push_back(i);
    unet::Tape<float> tape;
    const auto outputs = model.forward(tape, training::stack_inputs(samples, batch));
    const auto& fields = outputs.fields.value();
    Shape one(fields.shape().begin() + 1, fields.shape().end());
    const std::size_t per = fields.size() / batch.size();
    for (std::size_t b = 0; b < batch.size(); ++b) {
      Tensor<float> t(one);
      std::copy_n(fields.values().begin() + static_cast<std::ptrdiff_t>(b * per), per, t.values().begin());
      out.push_back(std::move(t));
    }
  }
  return out;
}

MetricsReport evaluate(const unet::UNetModel<float>& model, const std::vector<Sample>& samples,
                       const std::string& split, std::size_t batch_size) {
  const auto cd = training::predict_cd(model, samples, batch_size);
  std::vector<Prediction> predictions;
  for (std::size_t i = 0; i < samples.size(); ++i) predictions.push_back({samples[i].id, samples[i].cd, cd[i], split});
  MetricsReport report = make_report(std::move(predictions));
  if (model.config().predict_fields) {
    std::vector<const Tensor<float>*> truth;
    for (const auto& s : samples) {
      if (s.fields.empty()) throw Error("sample '" + s.id + "' has no field target");
      truth.push_back(&s.fields);
    }
    report.relative_l2 = relative_l2(truth, predict_fields(model, samples, batch_size));
  }
  return report;
}

std::string report_text(const MetricsReport& report) {
  std::string s = "n_test=" + std::to_string(report.n_test) + "\n";
  s += "r2=" + fmt(report.r2) + "\n";
  s += "mae=" + fmt(report.mae) + "\n";
  s += "max_ae=" + fmt(report.max_ae) + "\n";
  if (report.relative_l2) s += "relative_l2=" + fmt(*report.relative_l2) + "\n";
  s += std::string("wind_tunnel_acceptable=") + (report.wind_tunnel_acceptable() ? "true" : "false") + "\n";
  return s;
}

std::string correlation_csv(const MetricsReport& report) {
  std::string s = "sample_id,true_cd,pred_cd,split\n";
  for (const auto& p : report.predictions) s += p.id + "," + fmt(p.truth) + "," + fmt(p.pred) + "," + p.split + "\n";
  return s;
}

void export_correlation_csv(const MetricsReport& report, const std::filesystem::path& path) {
  write_text(path, correlation_csv(report));
}

// --- occlusion --------------------------------------------------------------

BatchPredictor model_predictor(const unet::UNetModel<float>& model) {
  return [&model](const Tensor<float>& batch) { return model.predict_cd(batch); };
}

std::size_t occlusion_positions(std::size_t n, std::size_t edge, std::size_t stride) {
  if (stride == 0) throw Error("occlusion stride must be >= 1");
  if (edge == 0) throw Error("occlusion edge must be >= 1");
  if (n < edge) {
    throw Error("volume extent " + std::to_string(n) + " is smaller than the occlusion edge " + std::to_string(edge));
  }
  return (n - edge) / stride + 1;
}

std::array<std::size_t, 3> OcclusionMap::position(std::size_t index) const {
  return {index % dims[0], (index / dims[0]) % dims[1], index / (dims[0] * dims[1])};
}

std::vector<double> min_max_normalize(std::span<const double> values) {
  std::vector<double> out(values.size(), 0.0);
  if (values.empty()) return out;
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  const double range = *hi - *lo;
  if (!(range > 0.0)) return out;
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = (values[i] - *lo) / range;
  return out;
}

namespace {

// Originals as one [B, 1, nx, ny, nz] tensor per batch.
struct Batches {
  std::vector<Tensor<float>> inputs;
  std::vector<double> truth;
};

double batches_mae(const BatchPredictor& predict, const std::vector<Tensor<float>>& inputs,
                   const std::vector<double>& truth) {
  std::vector<double> pred;
  for (const auto& batch : inputs) {
    const auto p = predict(batch);
    if (p.size() != batch.dim(0)) throw Error("predictor returned " + std::to_string(p.size()) + " values for a batch of " + std::to_string(batch.dim(0)));
    pred.insert(pred.end(), p.begin(), p.end());
  }
  return mae(truth, pred);
}

}  // namespace

OcclusionMap occlusion_sensitivity(const BatchPredictor& predict, const std::vector<Sample>& samples,
                                   const OcclusionOptions& options) {
  if (options.batch_size < 1) throw Error("batch size must be >= 1");
  std::vector<Sample> originals;
  for (const auto& s : samples) {
    if (!s.augmented) originals.push_back(s);
  }
  if (originals.empty()) throw Error("occlusion needs at least one original sample");
  const auto& shape = originals[0].input.shape();
  if (shape.size() != 4 || shape[0] != 1) throw ShapeError("occlusion inputs must be [1, nx, ny, nz]");

  OcclusionMap map;
  map.input_dims = {shape[1], shape[2], shape[3]};
  for (int a = 0; a < 3; ++a) map.dims[a] = occlusion_positions(map.input_dims[a], options.edge, options.stride);
  map.edge = options.edge;
  map.stride = options.stride;
  map.baseline_relative = options.baseline_relative;

  Batches base;
  std::vector<std::size_t> batch;
  for (std::size_t begin = 0; begin < originals.size(); begin += options.batch_size) {
    batch.clear();
    for (std::size_t i = begin; i < std::min(originals.size(), begin + options.batch_size); ++i) batch.push_back(i);
    base.inputs.push_back(training::stack_inputs(originals, batch));
  }
  for (const auto& s : originals) base.truth.push_back(s.cd);
  map.baseline_mae = batches_mae(predict, base.inputs, base.truth);

  const auto [nx, ny, nz] = map.input_dims;
  map.raw.assign(map.size(), 0.0);
  std::vector<std::string> errors(map.size());
#pragma omp parallel for schedule(dynamic)
  for (std::size_t p = 0; p < map.size(); ++p) {
    try {
      const auto [a, b, c] = map.position(p);
      auto inputs = base.inputs;
      for (auto& t : inputs) {
        for (std::size_t n = 0; n < t.dim(0); ++n) {
          for (std::size_t i = a * map.stride; i < a * map.stride + map.edge; ++i) {
            for (std::size_t j = b * map.stride; j < b * map.stride + map.edge; ++j) {
              const std::size_t row = ((n * nx + i) * ny + j) * nz;
              std::fill_n(t.values().begin() + static_cast<std::ptrdiff_t>(row + c * map.stride), map.edge, 0.0f);
            }
          }
        }
      }
      map.raw[p] = batches_mae(predict, inputs, base.truth);
    } catch (const std::exception& e) {
      errors[p] = e.what();
    }
  }
  for (std::size_t p = 0; p < errors.size(); ++p) {
    if (!errors[p].empty()) throw Error("occlusion position " + std::to_string(p) + ": " + errors[p]);
  }

  if (options.baseline_relative) {
    std::vector<double> increase(map.size());
    for (std::size_t p = 0; p < map.size(); ++p) increase[p] = std::max(0.0, map.raw[p] - map.baseline_mae);
    const double top = *std::max_element(increase.begin(), increase.end());
    map.normalized.assign(map.size(), 0.0);
    if (top > 0.0) {
      for (std::size_t p = 0; p < map.size(); ++p) map.normalized[p] = increase[p] / top;
    }
  } else {
    map.normalized = min_max_normalize(map.raw);
  }
  return map;
}

OcclusionMap occlusion_sensitivity(const unet::UNetModel<float>& model, const std::vector<Sample>& samples,
                                   const OcclusionOptions& options) {
  return occlusion_sensitivity(model_predictor(model), samples, options);
}

ThresholdResult threshold_map(const OcclusionMap& map, double lo, double hi) {
  if (map.normalized.size() != map.size()) throw Error("occlusion map has no normalized values");
  ThresholdResult r;
  r.selected.assign(map.size(), false);
  const auto [nx, ny, nz] = map.input_dims;
  std::vector<bool> covered(nx * ny * nz, false);
  for (std::size_t p = 0; p < map.size(); ++p) {
    if (!(map.normalized[p] >= lo && map.normalized[p] <= hi)) continue;
    r.selected[p] = true;
    ++r.selected_count;
    const auto [a, b, c] = map.position(p);
    for (std::size_t i = a * map.stride; i < a * map.stride + map.edge; ++i) {
      for (std::size_t j = b * map.stride; j < b * map.stride + map.edge; ++j) {
        for (std::size_t k = c * map.stride; k < c * map.stride + map.edge; ++k) covered[(i * ny + j) * nz + k] = true;
      }
    }
  }
  r.covered_fraction =
      static_cast<double>(std::count(covered.begin(), covered.end(), true)) / static_cast<double>(covered.size());
  return r;
}

sdf::Volume occlusion_volume(const OcclusionMap& map, const sdf::GridSpec& input_grid) {
  for (int a = 0; a < 3; ++a) {
    if (input_grid.dims[a] != map.input_dims[a]) throw Error("input grid does not match the occlusion map");
  }
  sdf::Volume v;
  v.grid.dims = {static_cast<std::uint32_t>(map.dims[0]), static_cast<std::uint32_t>(map.dims[1]),
                 static_cast<std::uint32_t>(map.dims[2])};
  v.grid.origin = input_grid.origin;
  v.grid.spacing = input_grid.spacing * static_cast<double>(map.stride);
  v.components = 1;
  v.values = map.normalized;
  return v;
}

void export_occlusion_volume(const OcclusionMap& map, const sdf::GridSpec& input_grid,
                             const std::filesystem::path& path) {
  sdf::write_volume(occlusion_volume(map, input_grid), path);
}

std::string occlusion_csv(const OcclusionMap& map) {
  std::string s = "position,a,b,c,raw_mae,normalized\n";
  for (std::size_t p = 0; p < map.size(); ++p) {
    const auto [a, b, c] = map.position(p);
    s += std::to_string(p) + "," + std::to_string(a) + "," + std::to_string(b) + "," + std::to_string(c) + "," +
         fmt(map.raw[p]) + "," + fmt(map.normalized[p]) + "\n";
  }
  return s;
}

}  // namespace aerosdf::evaluation

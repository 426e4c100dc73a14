#pragma once

#include <array>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "aerosdf/sdf.hpp"
#include "aerosdf/training.hpp"

namespace aerosdf::evaluation {

using training::Sample;
using unet::Shape;
using unet::Tensor;

// --- metrics ----------------------------------------------------------------

/// 1 - SS_res / SS_tot. Throws for fewer than two samples or constant truth.
double r2_score(std::span<const double> truth, std::span<const double> pred);
double mae(std::span<const double> truth, std::span<const double> pred);
double max_ae(std::span<const double> truth, std::span<const double> pred);

/// Mean over samples of ||u - u_hat||_2 / ||u||_2, each norm over the whole
/// field. Throws when a true field has zero norm.
double relative_l2(const std::vector<std::vector<double>>& truth, const std::vector<std::vector<double>>& pred);
/// Same over [3, nx, ny, nz] field tensors.
double relative_l2(const std::vector<const Tensor<float>*>& truth, const std::vector<Tensor<float>>& pred);

inline constexpr double kWindTunnelMae = 0.005;

struct Prediction {
  std::string id;
  double truth = 0.0;
  double pred = 0.0;
  std::string split;
};

struct MetricsReport {
  double r2 = 0.0;
  double mae = 0.0;
  double max_ae = 0.0;
  std::size_t n_test = 0;
  std::optional<double> relative_l2;
  std::vector<Prediction> predictions;

  bool wind_tunnel_acceptable() const { return mae < kWindTunnelMae; }
};

MetricsReport make_report(std::vector<Prediction> predictions);

/// Eval-mode c_d (and, for multi-task models, field) metrics over `samples`.
MetricsReport evaluate(const unet::UNetModel<float>& model, const std::vector<Sample>& samples,
                       const std::string& split, std::size_t batch_size = 16);

/// Eval-mode velocity predictions, one [3, nx, ny, nz] tensor per sample.
std::vector<Tensor<float>> predict_fields(const unet::UNetModel<float>& model, const std::vector<Sample>& samples,
                                          std::size_t batch_size = 16);

/// Flat key=value lines: n_test, r2, mae, max_ae, [relative_l2,] wind_tunnel_acceptable.
std::string report_text(const MetricsReport& report);
/// `sample_id,true_cd,pred_cd,split`, one row per prediction.
std::string correlation_csv(const MetricsReport& report);
void export_correlation_csv(const MetricsReport& report, const std::filesystem::path& path);

// --- occlusion sensitivity --------------------------------------------------

/// c_d for every sample of a [B, 1, nx, ny, nz] batch.
using BatchPredictor = std::function<std::vector<double>(const Tensor<float>& batch)>;
BatchPredictor model_predictor(const unet::UNetModel<float>& model);

/// floor((n - edge) / stride) + 1; throws when n < edge or stride is 0.
std::size_t occlusion_positions(std::size_t n, std::size_t edge, std::size_t stride);

struct OcclusionOptions {
  std::size_t edge = 10;
  std::size_t stride = 5;
  /// Scale by the MAE increase over the unoccluded baseline (clipped at 0)
  /// instead of min-max scaling of the raw MAE.
  bool baseline_relative = false;
  std::size_t batch_size = 16;
};

/// Positions are stored x-fastest; position (a, b, c) zeroes input cells
/// [a s, a s + edge) x [b s, b s + edge) x [c s, c s + edge).
struct OcclusionMap {
  std::array<std::size_t, 3> input_dims{};
  std::array<std::size_t, 3> dims{};
  std::size_t edge = 0;
  std::size_t stride = 0;
  bool baseline_relative = false;
  double baseline_mae = 0.0;
  std::vector<double> raw;         // test MAE with the cube zeroed
  std::vector<double> normalized;  // in [0, 1]

  std::size_t size() const { return dims[0] * dims[1] * dims[2]; }
  std::size_t index(std::size_t a, std::size_t b, std::size_t c) const { return a + dims[0] * (b + dims[1] * c); }
  std::array<std::size_t, 3> position(std::size_t index) const;
};

/// Zeroes each cube position in every sample's normalized input and records
/// the resulting c_d MAE. Augmented samples are ignored. Positions run in parallel.
OcclusionMap occlusion_sensitivity(const BatchPredictor& predict, const std::vector<Sample>& samples,
                                   const OcclusionOptions& options = {});
OcclusionMap occlusion_sensitivity(const unet::UNetModel<float>& model, const std::vector<Sample>& samples,
                                   const OcclusionOptions& options = {});

/// Min-max scaling onto [0, 1]; a constant input maps to all zeros.
std::vector<double> min_max_normalize(std::span<const double> values);

struct ThresholdResult {
  std::vector<bool> selected;      // per position
  std::size_t selected_count = 0;
  double covered_fraction = 0.0;  // of input cells inside a selected cube
};
ThresholdResult threshold_map(const OcclusionMap& map, double lo, double hi);

/// The normalized map as a one-component volume on the position grid:
/// origin = the input origin, spacing = stride x input spacing.
sdf::Volume occlusion_volume(const OcclusionMap& map, const sdf::GridSpec& input_grid);
void export_occlusion_volume(const OcclusionMap& map, const sdf::GridSpec& input_grid,
                             const std::filesystem::path& path);
/// `position,a,b,c,raw_mae,normalized` rows.
std::string occlusion_csv(const OcclusionMap& map);

}  // namespace aerosdf::evaluation

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "aerosdf/augment.hpp"
#include "aerosdf/mesh.hpp"
#include "aerosdf/sdf.hpp"
#include "aerosdf/training.hpp"

namespace aerosdf::datagen {

// --- Sobol sampling ---------------------------------------------------------

inline constexpr std::size_t kSobolMaxDimension = 21;

/// Unscrambled Sobol points (Joe-Kuo direction numbers, Gray-code order),
/// starting at sequence index `skip`. Row-major: n rows of `dimension` values.
std::vector<std::vector<double>> sobol_sample(std::size_t dimension, std::size_t n, std::size_t skip = 1);

/// L2-star discrepancy (Warnock's closed form) of points in [0,1)^d.
double l2_star_discrepancy(const std::vector<std::vector<double>>& points);

// --- parametric bluff body --------------------------------------------------

/// Angles in degrees, lengths in domain units. The body sits on x in
/// [kBodyFront, kBodyFront + length], centred on y = 0, bottom at z = ride_height.
struct ShapeParams {
  double length = 1.6;
  double width = 0.6;
  double height = 0.4;
  double alpha_deg = 0.0;    // front ramp, [0, 40]
  double beta_deg = 0.0;     // rear slant, [0, 40]
  double ride_height = 0.04;  // [0.02, 0.2] x height
  bool spoiler = false;
  double gamma_deg = 0.0;  // spoiler angle, [0, 16]

  void validate() const;
  /// Rear slant reduced by the spoiler: beta - 0.4 gamma (radians).
  double beta_eff() const;
  bool operator==(const ShapeParams&) const = default;
};

inline constexpr double kBodyFront = 0.6;
inline constexpr double kMaxRampDeg = 40.0;
inline constexpr double kMaxSpoilerDeg = 16.0;
inline constexpr std::size_t kSpoilerTriangles = 8;

/// Maps a point of [0,1)^4 onto (alpha, beta, ride height, gamma).
ShapeParams params_from_unit(std::span<const double> u, bool spoiler);

/// Closed box with a ramped front face and a slanted rear face, triangulated on
/// a fixed lattice; the optional spoiler is a separate single-sheet plate on the
/// rear roof edge.
mesh::TriangleMesh build_shape_mesh(const ShapeParams& params);

/// Whether p lies inside the closed body (the spoiler has no interior).
bool inside_body(const ShapeParams& params, const Vec3& p);

/// c_d = 0.18 + 0.10 (1 - sin a) + 0.12 sin^2(2 b_eff) + 0.05 exp(-10 h / H).
double drag_proxy(const ShapeParams& params);

inline constexpr double kFreeStream = 1.0;

/// Three-component velocity on the cell centres of `grid`: free stream minus a
/// tapered Gaussian wake plume that starts at the rear roof edge, zero inside the body.
sdf::Volume wake_field(const ShapeParams& params, const sdf::GridSpec& grid);
/// Whether the wake plume of `params` is nonzero at p.
bool in_plume_support(const ShapeParams& params, const Vec3& p);

/// 64 x 16 x 16 cells of edge 0.0625 covering [0,4] x [-0.5,0.5] x [0,1].
sdf::GridSpec default_grid();

// --- manifests --------------------------------------------------------------

enum class Split { kTrain, kVal, kTest };
std::string split_name(Split split);
Split parse_split(std::string_view name);

struct SampleRecord {
  std::string id;
  std::optional<std::string> parent;
  std::string mesh;    // paths relative to the manifest directory
  std::string sdf;
  std::string fields;  // empty when absent
  double cd = 0.0;
  Split split = Split::kTrain;
  double weight = 1.0;
  bool augmented = false;
  ShapeParams params;

  bool operator==(const SampleRecord&) const = default;
};

inline constexpr int kManifestVersion = 1;

struct DatasetManifest {
  int version = kManifestVersion;
  sdf::GridSpec grid;
  std::vector<SampleRecord> samples;

  std::size_t count(Split split, bool augmented) const;
  bool operator==(const DatasetManifest&) const = default;
};

std::string manifest_to_json(const DatasetManifest& manifest);
DatasetManifest manifest_from_json(std::string_view text);
void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);
DatasetManifest read_manifest(const std::filesystem::path& path);

/// Union of two manifests over the same grid. Records with equal ids must be identical.
DatasetManifest merge_manifests(const DatasetManifest& a, const DatasetManifest& b);

/// Seeded shuffle of n originals into train/val/test of sizes
/// round(0.7 n), round(0.15 n) and the remainder.
std::vector<Split> assign_splits(std::size_t n, std::uint64_t seed);

// --- generation -------------------------------------------------------------

struct DatasetOptions {
  std::size_t n_samples = 40;
  /// Fraction of samples carrying a spoiler, spread evenly over the sequence.
  double spoiler_fraction = 0.0;
  sdf::GridSpec grid = default_grid();
  bool augment = false;
  double augmented_weight = 0.5;
  bool fields = false;
  /// Compute and store SDF volumes; without it records carry no sdf path.
  bool voxelize = true;
  int n_rays = 11;
  /// Seeds the split shuffle and the augmentation jitter.
  std::uint64_t seed = 0;
  /// First Sobol index used for the design.
  std::size_t sobol_skip = 1;
  /// Sample ids are <prefix><index>, zero padded.
  std::string id_prefix = "s";
};

/// A failed sample or augmentation variant; generation carries on without it.
struct GenerationFailure {
  std::string id;
  std::string message;
};

/// Writes meshes/, sdf/ and fields/ under `dir` and returns the manifest (not
/// written; see write_manifest). Augmentation touches train-split originals only.
DatasetManifest generate_dataset(const DatasetOptions& options, const std::filesystem::path& dir,
                                 std::vector<GenerationFailure>* failures = nullptr);

struct AugmentOptions {
  double weight = 0.5;
  std::uint64_t seed = 0;
  bool voxelize = true;
  int n_rays = 11;
};

/// Appends the 23 standard variants of every train-split original to the
/// manifest. Augmented records inherit the parent's target and fields.
std::size_t augment_manifest(DatasetManifest& manifest, const std::filesystem::path& dir,
                             const AugmentOptions& options, std::vector<GenerationFailure>* failures = nullptr);

// --- loading ----------------------------------------------------------------

struct LoadOptions {
  bool fields = false;
  bool include_augmented = true;
};

/// Reads the SDF (normalized with the grid's default normalization) and,
/// optionally, the field target of every record in `split`.
std::vector<training::Sample> load_split(const DatasetManifest& manifest, const std::filesystem::path& dir,
                                         Split split, const LoadOptions& options = {});

/// Train (with augmented records) and validation (originals only) samples.
training::Dataset load_training_data(const DatasetManifest& manifest, const std::filesystem::path& dir,
                                     bool fields);

}  // namespace aerosdf::datagen

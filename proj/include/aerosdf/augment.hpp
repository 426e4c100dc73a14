#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "aerosdf/mesh.hpp"

namespace aerosdf::mesh {

/// Merges vertices closer than `tolerance`, drops the resulting degenerate and
/// duplicate triangles, then makes winding consistent per connected component
/// (closed components are oriented outward).
TriangleMesh weld(const TriangleMesh& mesh, double tolerance);

/// Quadric-error edge-collapse simplification. Stops at the first face count
/// <= target. Vertices on boundary or non-manifold edges are pinned.
/// Throws if the target cannot be reached; the message carries the achieved count.
TriangleMesh decimate(const TriangleMesh& mesh, std::size_t target_face_count);

/// Midpoint (1-to-4) subdivision, `levels` times. Shared edges stay shared.
TriangleMesh subdivide(const TriangleMesh& mesh, int levels);

/// Displaces each vertex along its area-weighted normal by a normal deviate
/// with standard deviation `stddev_fraction * bbox diagonal`.
TriangleMesh jitter(const TriangleMesh& mesh, double stddev_fraction, std::uint64_t seed);

struct WeldStep {
  double tolerance_fraction = 1e-6;  ///< of the bbox diagonal
};
struct DecimateStep {
  std::size_t target_face_count = 0;
};
struct SubdivideStep {
  int levels = 1;
};
struct JitterStep {
  double stddev_fraction = 0.0;
  std::uint64_t seed = 0;
};
using AugmentationStep = std::variant<WeldStep, DecimateStep, SubdivideStep, JitterStep>;

/// One output mesh: the steps are applied in order to the input mesh.
struct VariantSpec {
  std::string name;
  std::vector<AugmentationStep> steps;
  double weight = 0.5;
};

struct AugmentationPlan {
  std::vector<VariantSpec> variants;

  /// Throws if any weight is outside (0, 1].
  void validate() const;
};

struct AugmentedMesh {
  std::size_t variant_index = 0;
  std::string name;
  TriangleMesh mesh;
  double weight = 0.0;
};

struct VariantFailure {
  std::size_t variant_index = 0;
  std::string name;
  std::string message;
};

struct AugmentationResult {
  std::vector<AugmentedMesh> meshes;
  std::vector<VariantFailure> failures;
};

/// Applies every variant; variants are independent and run in parallel.
/// A failing variant is reported and the others are still produced.
AugmentationResult generate_augmentations(const TriangleMesh& mesh, const AugmentationPlan& plan);

/// The 23-variant family used for training-set augmentation:
///
///   0       weld
///   1..5    weld, decimate to {0.25, 0.45, 0.50, 0.55, 0.60} x F
///   6..21   weld, decimate to {0.25, 0.50} x F, subdivide {0, 1},
///           jitter stddev {5e-4, 1e-3, 2e-3, 4e-3} x bbox diagonal
///   22      weld, subdivide 1
///
/// where F is the welded face count of `reference`. Jitter seeds are
/// `seed + variant index`.
AugmentationPlan standard_preset(const TriangleMesh& reference, double weight, std::uint64_t seed);

inline constexpr std::size_t kStandardVariantCount = 23;

}  // namespace aerosdf::mesh

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "aerosdf/common/vec3.hpp"
#include "aerosdf/mesh.hpp"

namespace aerosdf::sdf {

/// Cartesian grid sampled at cell centers: center(i,j,k) = origin + (i*sx, j*sy, k*sz).
struct GridSpec {
  std::array<std::uint32_t, 3> dims{1, 1, 1};
  Vec3 origin;
  Vec3 spacing{1.0, 1.0, 1.0};

  void validate() const;
  std::size_t cell_count() const {
    return static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
  }
  /// x-fastest linear index.
  std::size_t index(std::size_t i, std::size_t j, std::size_t k) const {
    return i + dims[0] * (j + static_cast<std::size_t>(dims[1]) * k);
  }
  Vec3 cell_center(std::size_t i, std::size_t j, std::size_t k) const {
    return {origin.x + static_cast<double>(i) * spacing.x, origin.y + static_cast<double>(j) * spacing.y,
            origin.z + static_cast<double>(k) * spacing.z};
  }
  /// Box spanned by the cell centers.
  Aabb center_bounds() const;
  bool operator==(const GridSpec&) const = default;
};

/// Values on a grid, `components` per cell, component-fastest then x-fastest.
/// One component holds a signed distance field; three hold a velocity field.
struct Volume {
  GridSpec grid;
  std::uint32_t components = 1;
  std::vector<double> values;

  double at(std::size_t i, std::size_t j, std::size_t k, std::size_t c = 0) const {
    return values[grid.index(i, j, k) * components + c];
  }
  double& at(std::size_t i, std::size_t j, std::size_t k, std::size_t c = 0) {
    return values[grid.index(i, j, k) * components + c];
  }
};
using SdfVolume = Volume;

/// Bounding-volume hierarchy over a mesh's triangles (median split on the
/// longest centroid axis, at most `kLeafSize` triangles per leaf).
class DistanceIndex {
 public:
  static constexpr std::size_t kLeafSize = 8;

  struct Node {
    Aabb box;
    std::uint32_t left = 0;   // child index, or first triangle slot for leaves
    std::uint32_t right = 0;  // child index, or triangle count for leaves
    bool leaf = false;
  };

  explicit DistanceIndex(const mesh::TriangleMesh& mesh);

  double unsigned_distance(const Vec3& p) const;
  double squared_distance(const Vec3& p) const;

  /// Number of triangles crossed by the ray origin + t*dir, t > 0. Sets
  /// `ambiguous` when a hit lands on an edge or vertex, or the origin lies on a triangle.
  int ray_crossings(const Vec3& origin, const Vec3& dir, bool& ambiguous) const;

  const std::vector<Node>& nodes() const { return nodes_; }
  /// Triangle ids in leaf order; leaf `n` owns slots [n.left, n.left + n.right).
  const std::vector<std::uint32_t>& leaf_triangles() const { return order_; }
  std::size_t triangle_count() const { return tris_.size(); }
  std::size_t leaf_count() const;
  std::array<Vec3, 3> triangle(std::size_t id) const { return tris_[id]; }

 private:
  std::uint32_t build(std::uint32_t begin, std::uint32_t end, std::vector<Vec3>& centroids);

  std::vector<std::array<Vec3, 3>> tris_;
  std::vector<std::uint32_t> order_;
  std::vector<Node> nodes_;
};

/// Exact squared distance from p to triangle abc (vertex, edge and face regions).
double point_triangle_squared_distance(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c);

struct SignVote {
  int sign = 1;  ///< -1 inside, +1 outside
  int inside_votes = 0;
  int rays = 0;
};

/// Majority vote of ray parity over `n_rays` (odd) pseudo-random directions
/// drawn from `seed`. Rays that graze an edge or vertex are redrawn.
SignVote vote_sign(const DistanceIndex& index, const Vec3& point, int n_rays, std::uint64_t seed);

/// Seeds the ray directions from a hash of the point coordinates.
int estimate_sign(const DistanceIndex& index, const Vec3& point, int n_rays = 11);

std::uint64_t hash_point(const Vec3& p);
std::uint64_t hash_cell(std::size_t i, std::size_t j, std::size_t k);

/// Signed distance (negative inside) at every cell center. Ray seeds come from
/// the cell index, so the result does not depend on the worker count.
SdfVolume generate_sdf(const mesh::TriangleMesh& mesh, const GridSpec& grid, int n_rays = 11);

/// value' = clamp(value, -clamp, clamp) / scale. clamp may be +infinity.
SdfVolume normalize_sdf(const SdfVolume& volume, double clamp, double scale);

struct Normalization {
  double clamp = 1.0;
  double scale = 1.0;
};
/// clamp = 8 x the largest grid spacing, scale = clamp, mapping into [-1, 1].
Normalization default_normalization(const GridSpec& grid);

// SDF3 container: "SDF3", u32 version, u32 nx ny nz, u32 components,
// f64 origin[3], f64 spacing[3], then f32 values (little-endian).
inline constexpr std::uint32_t kVolumeVersion = 1;

std::vector<std::uint8_t> encode_volume(const Volume& volume);
Volume decode_volume(std::span<const std::uint8_t> bytes);
void write_volume(const Volume& volume, const std::filesystem::path& path);
Volume read_volume(const std::filesystem::path& path);

}  // namespace aerosdf::sdf

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <vector>

#include "aerosdf/common/vec3.hpp"

namespace aerosdf::mesh {

using Triangle = std::array<std::uint32_t, 3>;

enum class DegeneratePolicy {
  kDrop,    ///< drop degenerate triangles with a warning
  kStrict,  ///< throw on the first degenerate triangle
};

/// Indexed triangle soup with per-triangle unit normals derived from the
/// winding (right-hand rule). A triangle is degenerate when two of its corners
/// share an index or an identical position.
class TriangleMesh {
 public:
  TriangleMesh() = default;
  TriangleMesh(std::vector<Vec3> vertices, std::vector<Triangle> triangles,
               DegeneratePolicy policy = DegeneratePolicy::kDrop);

  const std::vector<Vec3>& vertices() const { return vertices_; }
  const std::vector<Triangle>& triangles() const { return triangles_; }
  const std::vector<Vec3>& normals() const { return normals_; }

  std::size_t vertex_count() const { return vertices_.size(); }
  std::size_t triangle_count() const { return triangles_.size(); }
  bool empty() const { return triangles_.empty(); }

  /// Number of degenerate triangles removed at construction.
  std::size_t dropped_degenerate() const { return dropped_; }

  std::array<Vec3, 3> corners(std::size_t t) const {
    const auto& tri = triangles_[t];
    return {vertices_[tri[0]], vertices_[tri[1]], vertices_[tri[2]]};
  }

  Aabb bounds() const;

 private:
  std::vector<Vec3> vertices_;
  std::vector<Triangle> triangles_;
  std::vector<Vec3> normals_;
  std::size_t dropped_ = 0;
};

struct MeshStats {
  std::size_t vertex_count = 0;
  std::size_t triangle_count = 0;
  Aabb bounds;
  double surface_area = 0.0;
  bool watertight = false;
  std::size_t boundary_edges = 0;
};

/// Watertight iff every undirected edge is used by exactly two triangles that
/// traverse it in opposite directions.
MeshStats compute_stats(const TriangleMesh& mesh);

double triangle_area(const Vec3& a, const Vec3& b, const Vec3& c);

/// Area-weighted vertex normals; zero for unreferenced vertices.
std::vector<Vec3> vertex_normals(const TriangleMesh& mesh);

/// Applies a rigid translation to every vertex.
TriangleMesh translated(const TriangleMesh& mesh, const Vec3& offset);

/// Geodesic sphere from a subdivided icosahedron: 20 * 4^level faces.
TriangleMesh icosphere(int level, double radius = 1.0, const Vec3& center = {});

/// Axis-aligned box with two triangles per face, outward winding.
TriangleMesh box(const Vec3& lo, const Vec3& hi);

}  // namespace aerosdf::mesh

#include "aerosdf/mesh.hpp"

#include <map>
#include <string>
#include <unordered_map>

#include "aerosdf/common/error.hpp"
#include "aerosdf/common/log.hpp"

namespace aerosdf::mesh {

namespace {

bool is_degenerate(const Triangle& t, const std::vector<Vec3>& v) {
  if (t[0] == t[1] || t[1] == t[2] || t[0] == t[2]) return true;
  return v[t[0]] == v[t[1]] || v[t[1]] == v[t[2]] || v[t[0]] == v[t[2]];
}

}  // namespace

TriangleMesh::TriangleMesh(std::vector<Vec3> vertices, std::vector<Triangle> triangles,
                           DegeneratePolicy policy)
    : vertices_(std::move(vertices)) {
  for (std::size_t i = 0; i < vertices_.size(); ++i) {
    if (!is_finite(vertices_[i])) {
      throw Error("vertex " + std::to_string(i) + " has a non-finite coordinate");
    }
  }
  triangles_.reserve(triangles.size());
  for (std::size_t t = 0; t < triangles.size(); ++t) {
    const auto& tri = triangles[t];
    for (auto idx : tri) {
      if (idx >= vertices_.size()) {
        throw Error("triangle " + std::to_string(t) + " references vertex " + std::to_string(idx) +
                    " but the mesh has " + std::to_string(vertices_.size()) + " vertices");
      }
    }
    if (is_degenerate(tri, vertices_)) {
      if (policy == DegeneratePolicy::kStrict) {
        throw Error("triangle " + std::to_string(t) + " is degenerate");
      }
      ++dropped_;
      continue;
    }
    triangles_.push_back(tri);
  }
  if (dropped_ > 0) log::warn("dropped " + std::to_string(dropped_) + " degenerate triangle(s)");

  normals_.reserve(triangles_.size());
  for (const auto& tri : triangles_) {
    const Vec3& a = vertices_[tri[0]];
    normals_.push_back(normalized(cross(vertices_[tri[1]] - a, vertices_[tri[2]] - a)));
  }
}

Aabb TriangleMesh::bounds() const {
  Aabb box;
  for (const auto& v : vertices_) box.expand(v);
  return box;
}

double triangle_area(const Vec3& a, const Vec3& b, const Vec3& c) {
  return 0.5 * norm(cross(b - a, c - a));
}

MeshStats compute_stats(const TriangleMesh& mesh) {
  MeshStats stats;
  stats.vertex_count = mesh.vertex_count();
  stats.triangle_count = mesh.triangle_count();
  stats.bounds = mesh.bounds();

  // Per undirected edge: number of uses and number of uses in the low->high direction.
  struct EdgeUse {
    std::uint32_t total = 0;
    std::uint32_t forward = 0;
  };
  std::unordered_map<std::uint64_t, EdgeUse> edges;
  edges.reserve(mesh.triangle_count() * 3);
  for (std::size_t t = 0; t < mesh.triangle_count(); ++t) {
    const auto [a, b, c] = mesh.corners(t);
    stats.surface_area += triangle_area(a, b, c);
    const auto& tri = mesh.triangles()[t];
    for (int e = 0; e < 3; ++e) {
      const std::uint32_t u = tri[e];
      const std::uint32_t v = tri[(e + 1) % 3];
      const std::uint64_t key = (static_cast<std::uint64_t>(std::min(u, v)) << 32) | std::max(u, v);
      auto& use = edges[key];
      ++use.total;
      if (u < v) ++use.forward;
    }
  }

  bool manifold = true;
  for (const auto& [key, use] : edges) {
    if (use.total == 1) ++stats.boundary_edges;
    if (use.total != 2 || use.forward != 1) manifold = false;
  }
  stats.watertight = !mesh.empty() && manifold && stats.boundary_edges == 0;
  return stats;
}

std::vector<Vec3> vertex_normals(const TriangleMesh& mesh) {
  std::vector<Vec3> normals(mesh.vertex_count());
  for (std::size_t t = 0; t < mesh.triangle_count(); ++t) {
    const auto& tri = mesh.triangles()[t];
    const auto [a, b, c] = mesh.corners(t);
    // Unnormalized cross product is area-weighted.
    const Vec3 n = cross(b - a, c - a);
    for (auto idx : tri) normals[idx] += n;
  }
  for (auto& n : normals) n = normalized(n);
  return normals;
}

TriangleMesh translated(const TriangleMesh& mesh, const Vec3& offset) {
  std::vector<Vec3> vertices = mesh.vertices();
  for (auto& v : vertices) v += offset;
  return TriangleMesh(std::move(vertices), mesh.triangles());
}

TriangleMesh icosphere(int level, double radius, const Vec3& center) {
  const double phi = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Vec3> v = {{-1, phi, 0}, {1, phi, 0},  {-1, -phi, 0}, {1, -phi, 0},
                         {0, -1, phi}, {0, 1, phi},  {0, -1, -phi}, {0, 1, -phi},
                         {phi, 0, -1}, {phi, 0, 1},  {-phi, 0, -1}, {-phi, 0, 1}};
  for (auto& p : v) p = normalized(p);
  std::vector<Triangle> f = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
                             {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
                             {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
                             {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};
  for (int l = 0; l < level; ++l) {
    std::map<std::pair<std::uint32_t, std::uint32_t>, std::uint32_t> midpoint;
    auto mid = [&](std::uint32_t a, std::uint32_t b) {
      const auto key = std::minmax(a, b);
      auto it = midpoint.find(key);
      if (it != midpoint.end()) return it->second;
      v.push_back(normalized((v[a] + v[b]) * 0.5));
      const auto idx = static_cast<std::uint32_t>(v.size() - 1);
      midpoint.emplace(key, idx);
      return idx;
    };
    std::vector<Triangle> next;
    next.reserve(f.size() * 4);
    for (const auto& t : f) {
      const auto ab = mid(t[0], t[1]);
      const auto bc = mid(t[1], t[2]);
      const auto ca = mid(t[2], t[0]);
      next.push_back({t[0], ab, ca});
      next.push_back({t[1], bc, ab});
      next.push_back({t[2], ca, bc});
      next.push_back({ab, bc, ca});
    }
    f = std::move(next);
  }
  for (auto& p : v) p = center + p * radius;
  return TriangleMesh(std::move(v), std::move(f));
}

TriangleMesh box(const Vec3& lo, const Vec3& hi) {
  std::vector<Vec3> v;
  for (int i = 0; i < 8; ++i) {
    v.push_back({(i & 1) ? hi.x : lo.x, (i & 2) ? hi.y : lo.y, (i & 4) ? hi.z : lo.z});
  }
  std::vector<Triangle> f = {
      {0, 2, 1}, {1, 2, 3},  // z = lo
      {4, 5, 6}, {5, 7, 6},  // z = hi
      {0, 1, 4}, {1, 5, 4},  // y = lo
      {2, 6, 3}, {3, 6, 7},  // y = hi
      {0, 4, 2}, {2, 4, 6},  // x = lo
      {1, 3, 5}, {3, 7, 5},  // x = hi
  };
  return TriangleMesh(std::move(v), std::move(f));
}

}  // namespace aerosdf::mesh

#include <algorithm>
#include <numeric>

#include "aerosdf/common/error.hpp"
#include "aerosdf/sdf.hpp"

namespace aerosdf::sdf {

double point_triangle_squared_distance(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  // Closest point on triangle, Voronoi-region walk, in coordinates relative to the corners.
  const Vec3 ab = b - a;
  const Vec3 ac = c - a;
  const Vec3 ap = p - a;
  const double d1 = dot(ab, ap);
  const double d2 = dot(ac, ap);
  if (d1 <= 0.0 && d2 <= 0.0) return squared_norm(ap);

  const Vec3 bp = p - b;
  const double d3 = dot(ab, bp);
  const double d4 = dot(ac, bp);
  if (d3 >= 0.0 && d4 <= d3) return squared_norm(bp);

  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) {
    const double v = d1 / (d1 - d3);
    return squared_norm(ap - ab * v);
  }

  const Vec3 cp = p - c;
  const double d5 = dot(ab, cp);
  const double d6 = dot(ac, cp);
  if (d6 >= 0.0 && d5 <= d6) return squared_norm(cp);

  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) {
    const double w = d2 / (d2 - d6);
    return squared_norm(ap - ac * w);
  }

  const double va = d3 * d6 - d5 * d4;
  if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {
    const double w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
    return squared_norm(bp - (c - b) * w);
  }

  const double denom = 1.0 / (va + vb + vc);
  const double v = vb * denom;
  const double w = vc * denom;
  return squared_norm(ap - ab * v - ac * w);
}

DistanceIndex::DistanceIndex(const mesh::TriangleMesh& mesh) {
  if (mesh.empty()) throw Error("cannot index an empty mesh");
  tris_.reserve(mesh.triangle_count());
  std::vector<Vec3> centroids;
  centroids.reserve(mesh.triangle_count());
  for (std::size_t t = 0; t < mesh.triangle_count(); ++t) {
    tris_.push_back(mesh.corners(t));
    centroids.push_back((tris_.back()[0] + tris_.back()[1] + tris_.back()[2]) / 3.0);
  }
  order_.resize(tris_.size());
  std::iota(order_.begin(), order_.end(), 0u);
  nodes_.reserve(2 * tris_.size() / kLeafSize + 2);
  build(0, static_cast<std::uint32_t>(tris_.size()), centroids);
}

std::uint32_t DistanceIndex::build(std::uint32_t begin, std::uint32_t end, std::vector<Vec3>& centroids) {
  const auto id = static_cast<std::uint32_t>(nodes_.size());
  nodes_.emplace_back();
  Aabb box;
  Aabb centroid_box;
  for (std::uint32_t i = begin; i < end; ++i) {
    for (const auto& v : tris_[order_[i]]) box.expand(v);
    centroid_box.expand(centroids[order_[i]]);
  }
  nodes_[id].box = box;
  if (end - begin <= kLeafSize) {
    nodes_[id].leaf = true;
    nodes_[id].left = begin;
    nodes_[id].right = end - begin;
    return id;
  }
  const int axis = centroid_box.longest_axis();
  const std::uint32_t mid = begin + (end - begin) / 2;
  // Ties broken by triangle id so the tree is fully deterministic.
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](std::uint32_t a, std::uint32_t b) {
                     const double ca = centroids[a][axis];
                     const double cb = centroids[b][axis];
                     return ca < cb || (ca == cb && a < b);
                   });
  const std::uint32_t left = build(begin, mid, centroids);
  const std::uint32_t right = build(mid, end, centroids);
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

std::size_t DistanceIndex::leaf_count() const {
  return static_cast<std::size_t>(std::count_if(nodes_.begin(), nodes_.end(), [](const Node& n) { return n.leaf; }));
}

double DistanceIndex::squared_distance(const Vec3& p) const {
  double best = std::numeric_limits<double>::infinity();
  std::uint32_t stack[128];
  int top = 0;
  stack[top++] = 0;
  while (top > 0) {
    const Node& node = nodes_[stack[--top]];
    if (node.box.squared_distance(p) >= best) continue;
    if (node.leaf) {
      for (std::uint32_t s = node.left; s < node.left + node.right; ++s) {
        const auto& t = tris_[order_[s]];
        best = std::min(best, point_triangle_squared_distance(p, t[0], t[1], t[2]));
      }
      continue;
    }
    // Visit the nearer child first.
    const double dl = nodes_[node.left].box.squared_distance(p);
    const double dr = nodes_[node.right].box.squared_distance(p);
    if (dl < dr) {
      stack[top++] = node.right;
      stack[top++] = node.left;
    } else {
      stack[top++] = node.left;
      stack[top++] = node.right;
    }
  }
  return best;
}

double DistanceIndex::unsigned_distance(const Vec3& p) const { return std::sqrt(squared_distance(p)); }

namespace {

bool ray_hits_box(const Aabb& box, const Vec3& origin, const Vec3& inv_dir) {
  double t0 = 0.0;
  double t1 = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    double near = (box.lo[a] - origin[a]) * inv_dir[a];
    double far = (box.hi[a] - origin[a]) * inv_dir[a];
    if (std::isnan(near) || std::isnan(far)) {
      // Direction component is zero and the origin sits on the slab plane.
      continue;
    }
    if (near > far) std::swap(near, far);
    t0 = std::max(t0, near);
    t1 = std::min(t1, far);
    if (t0 > t1 * (1.0 + 1e-12) + 1e-300) return false;
  }
  return true;
}

}  // namespace

int DistanceIndex::ray_crossings(const Vec3& origin, const Vec3& dir, bool& ambiguous) const {
  constexpr double kEdgeEps = 1e-9;
  const Vec3 inv{1.0 / dir.x, 1.0 / dir.y, 1.0 / dir.z};
  int crossings = 0;
  std::uint32_t stack[128];
  int top = 0;
  stack[top++] = 0;
  while (top > 0) {
    const Node& node = nodes_[stack[--top]];
    if (!ray_hits_box(node.box, origin, inv)) continue;
    if (!node.leaf) {
      stack[top++] = node.left;
      stack[top++] = node.right;
      continue;
    }
    for (std::uint32_t s = node.left; s < node.left + node.right; ++s) {
      const auto& t = tris_[order_[s]];
      // Moller-Trumbore.
      const Vec3 e1 = t[1] - t[0];
      const Vec3 e2 = t[2] - t[0];
      const Vec3 pv = cross(dir, e2);
      const double det = dot(e1, pv);
      const double scale = norm(e1) * norm(e2);
      const Vec3 tv = origin - t[0];
      if (std::abs(det) <= 1e-12 * scale) {
        // Parallel: only a problem if the ray lies in the triangle's plane.
        const Vec3 n = cross(e1, e2);
        if (std::abs(dot(tv, n)) <= 1e-12 * scale * norm(tv) + 1e-300) ambiguous = true;
        continue;
      }
      const double inv_det = 1.0 / det;
      const double u = dot(tv, pv) * inv_det;
      if (u < -kEdgeEps || u > 1.0 + kEdgeEps) continue;
      const Vec3 qv = cross(tv, e1);
      const double v = dot(dir, qv) * inv_det;
      if (v < -kEdgeEps || u + v > 1.0 + kEdgeEps) continue;
      const double dist = dot(e2, qv) * inv_det;
      const double len = std::sqrt(scale);
      if (dist < -kEdgeEps * len) continue;
      if (dist <= kEdgeEps * len || u <= kEdgeEps || v <= kEdgeEps || u + v >= 1.0 - kEdgeEps) {
        ambiguous = true;
        continue;
      }
      ++crossings;
    }
  }
  return crossings;
}

}  // namespace aerosdf::sdf

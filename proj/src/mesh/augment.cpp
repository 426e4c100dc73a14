#include "aerosdf/augment.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <queue>
#include <random>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "aerosdf/common/error.hpp"

namespace aerosdf::mesh {

namespace {

std::uint64_t edge_key(std::uint32_t a, std::uint32_t b) {
  return (static_cast<std::uint64_t>(std::min(a, b)) << 32) | std::max(a, b);
}

// ---------------------------------------------------------------------------
// weld

struct CellKey {
  std::int64_t x, y, z;
  bool operator==(const CellKey&) const = default;
};
struct CellHash {
  std::size_t operator()(const CellKey& k) const {
    std::uint64_t h = static_cast<std::uint64_t>(k.x) * 73856093ULL;
    h ^= static_cast<std::uint64_t>(k.y) * 19349663ULL;
    h ^= static_cast<std::uint64_t>(k.z) * 83492791ULL;
    return static_cast<std::size_t>(h);
  }
};

// Flips faces so that every manifold edge is traversed in opposite directions
// by its two faces; closed components are then oriented to positive volume.
void repair_winding(const std::vector<Vec3>& vertices, std::vector<Triangle>& faces) {
  std::unordered_map<std::uint64_t, std::vector<std::uint32_t>> edge_faces;
  for (std::uint32_t f = 0; f < faces.size(); ++f) {
    for (int e = 0; e < 3; ++e) edge_faces[edge_key(faces[f][e], faces[f][(e + 1) % 3])].push_back(f);
  }
  auto traverses = [&](const Triangle& t, std::uint32_t a, std::uint32_t b) {
    for (int e = 0; e < 3; ++e) {
      if (t[e] == a && t[(e + 1) % 3] == b) return true;
    }
    return false;
  };

  std::vector<int> component(faces.size(), -1);
  int n_components = 0;
  for (std::uint32_t seed = 0; seed < faces.size(); ++seed) {
    if (component[seed] >= 0) continue;
    const int comp = n_components++;
    component[seed] = comp;
    std::vector<std::uint32_t> queue{seed};
    bool closed = true;
    for (std::size_t head = 0; head < queue.size(); ++head) {
      const std::uint32_t f = queue[head];
      for (int e = 0; e < 3; ++e) {
        const std::uint32_t a = faces[f][e];
        const std::uint32_t b = faces[f][(e + 1) % 3];
        const auto& adjacent = edge_faces[edge_key(a, b)];
        if (adjacent.size() != 2) {
          closed = false;
          continue;
        }
        const std::uint32_t g = adjacent[0] == f ? adjacent[1] : adjacent[0];
        if (component[g] >= 0) continue;
        if (traverses(faces[g], a, b)) std::swap(faces[g][1], faces[g][2]);
        component[g] = comp;
        queue.push_back(g);
      }
    }
    if (!closed) continue;
    double volume = 0.0;
    for (auto f : queue) {
      const auto& t = faces[f];
      volume += dot(vertices[t[0]], cross(vertices[t[1]], vertices[t[2]]));
    }
    if (volume < 0.0) {
      for (auto f : queue) std::swap(faces[f][1], faces[f][2]);
    }
  }
}

// ---------------------------------------------------------------------------
// quadric-error decimation

struct Quadric {
  // Upper triangle of the symmetric 4x4 matrix.
  double a00 = 0, a01 = 0, a02 = 0, a03 = 0, a11 = 0, a12 = 0, a13 = 0, a22 = 0, a23 = 0, a33 = 0;

  static Quadric plane(const Vec3& n, double d, double w) {
    Quadric q;
    q.a00 = w * n.x * n.x; q.a01 = w * n.x * n.y; q.a02 = w * n.x * n.z; q.a03 = w * n.x * d;
    q.a11 = w * n.y * n.y; q.a12 = w * n.y * n.z; q.a13 = w * n.y * d;
    q.a22 = w * n.z * n.z; q.a23 = w * n.z * d;
    q.a33 = w * d * d;
    return q;
  }
  Quadric& operator+=(const Quadric& o) {
    a00 += o.a00; a01 += o.a01; a02 += o.a02; a03 += o.a03; a11 += o.a11;
    a12 += o.a12; a13 += o.a13; a22 += o.a22; a23 += o.a23; a33 += o.a33;
    return *this;
  }
  double error(const Vec3& p) const {
    return a00 * p.x * p.x + 2 * a01 * p.x * p.y + 2 * a02 * p.x * p.z + 2 * a03 * p.x + a11 * p.y * p.y +
           2 * a12 * p.y * p.z + 2 * a13 * p.y + a22 * p.z * p.z + 2 * a23 * p.z + a33;
  }
  // Minimizer of the quadric, if the 3x3 block is well conditioned.
  std::optional<Vec3> minimizer(double scale) const {
    const double det = a00 * (a11 * a22 - a12 * a12) - a01 * (a01 * a22 - a12 * a02) + a02 * (a01 * a12 - a11 * a02);
    if (std::abs(det) < 1e-12 * scale) return std::nullopt;
    const double bx = -a03, by = -a13, bz = -a23;
    const double x = (bx * (a11 * a22 - a12 * a12) - a01 * (by * a22 - a12 * bz) + a02 * (by * a12 - a11 * bz)) / det;
    const double y = (a00 * (by * a22 - a12 * bz) - bx * (a01 * a22 - a12 * a02) + a02 * (a01 * bz - by * a02)) / det;
    const double z = (a00 * (a11 * bz - by * a12) - a01 * (a01 * bz - by * a02) + bx * (a01 * a12 - a11 * a02)) / det;
    const Vec3 p{x, y, z};
    if (!is_finite(p)) return std::nullopt;
    return p;
  }
};

struct Candidate {
  double cost;
  std::uint32_t u, v;
  std::uint32_t version_u, version_v;
  Vec3 target;
  bool operator>(const Candidate& o) const {
    if (cost != o.cost) return cost > o.cost;
    if (u != o.u) return u > o.u;
    return v > o.v;
  }
};

class Decimator {
 public:
  explicit Decimator(const TriangleMesh& mesh)
      : pos_(mesh.vertices()),
        faces_(mesh.triangles()),
        face_alive_(faces_.size(), true),
        vertex_faces_(pos_.size()),
        quadric_(pos_.size()),
        locked_(pos_.size(), false),
        version_(pos_.size(), 0),
        alive_faces_(faces_.size()) {
    const double diag = mesh.bounds().diagonal();
    scale_ = std::pow(std::max(diag, 1e-300), 6);
    std::unordered_map<std::uint64_t, int> edge_uses;
    for (std::uint32_t f = 0; f < faces_.size(); ++f) {
      const auto& t = faces_[f];
      const Vec3 c = cross(pos_[t[1]] - pos_[t[0]], pos_[t[2]] - pos_[t[0]]);
      const double area2 = norm(c);
      if (area2 > 0.0) {
        const Vec3 n = c / area2;
        const Quadric q = Quadric::plane(n, -dot(n, pos_[t[0]]), 0.5 * area2);
        for (auto idx : t) quadric_[idx] += q;
      }
      for (int e = 0; e < 3; ++e) {
        vertex_faces_[t[e]].push_back(f);
        ++edge_uses[edge_key(t[e], t[(e + 1) % 3])];
      }
    }
    for (const auto& [key, uses] : edge_uses) {
      if (uses != 2) {
        locked_[key >> 32] = true;
        locked_[key & 0xffffffffu] = true;
      }
    }
    for (const auto& [key, uses] : edge_uses) {
      push(static_cast<std::uint32_t>(key >> 32), static_cast<std::uint32_t>(key & 0xffffffffu));
    }
  }

  std::size_t run(std::size_t target) {
    while (alive_faces_ > target && !heap_.empty()) {
      const Candidate c = heap_.top();
      heap_.pop();
      if (c.version_u != version_[c.u] || c.version_v != version_[c.v]) continue;
      collapse(c);
    }
    return alive_faces_;
  }

  TriangleMesh result() const {
    std::vector<std::uint32_t> remap(pos_.size(), UINT32_MAX);
    std::vector<Vec3> vertices;
    std::vector<Triangle> triangles;
    for (std::uint32_t f = 0; f < faces_.size(); ++f) {
      if (!face_alive_[f]) continue;
      Triangle t;
      for (int k = 0; k < 3; ++k) {
        auto& r = remap[faces_[f][k]];
        if (r == UINT32_MAX) {
          r = static_cast<std::uint32_t>(vertices.size());
          vertices.push_back(pos_[faces_[f][k]]);
        }
        t[k] = r;
      }
      triangles.push_back(t);
    }
    return TriangleMesh(std::move(vertices), std::move(triangles));
  }

 private:
  std::set<std::uint32_t> neighbours(std::uint32_t v) const {
    std::set<std::uint32_t> out;
    for (auto f : vertex_faces_[v]) {
      for (auto w : faces_[f]) {
        if (w != v) out.insert(w);
      }
    }
    return out;
  }

  void push(std::uint32_t u, std::uint32_t v) {
    if (locked_[u] && locked_[v]) return;
    if (u > v) std::swap(u, v);
    Quadric q = quadric_[u];
    q += quadric_[v];
    Vec3 target;
    if (locked_[u]) {
      target = pos_[u];
    } else if (locked_[v]) {
      target = pos_[v];
    } else if (auto p = q.minimizer(scale_); p && squared_norm(*p - (pos_[u] + pos_[v]) * 0.5) <=
                                                       4.0 * squared_norm(pos_[u] - pos_[v])) {
      target = *p;
    } else {
      target = pos_[u];
      for (const Vec3& c : {pos_[v], (pos_[u] + pos_[v]) * 0.5}) {
        if (q.error(c) < q.error(target)) target = c;
      }
    }
    heap_.push({std::max(0.0, q.error(target)), u, v, version_[u], version_[v], target});
  }

  bool normals_preserved(std::uint32_t moved, std::uint32_t other, const Vec3& target) const {
    for (auto f : vertex_faces_[moved]) {
      const auto& t = faces_[f];
      if (t[0] == other || t[1] == other || t[2] == other) continue;
      std::array<Vec3, 3> p{pos_[t[0]], pos_[t[1]], pos_[t[2]]};
      const Vec3 before = cross(p[1] - p[0], p[2] - p[0]);
      for (int k = 0; k < 3; ++k) {
        if (t[k] == moved) p[k] = target;
      }
      const Vec3 after = cross(p[1] - p[0], p[2] - p[0]);
      const double nb = norm(before);
      const double na = norm(after);
      if (na <= 1e-12 * nb) return false;
      if (dot(before, after) < 0.2 * nb * na) return false;
    }
    return true;
  }

  void collapse(const Candidate& c) {
    const std::uint32_t u = c.u;
    const std::uint32_t v = c.v;
    std::vector<std::uint32_t> shared;
    for (auto f : vertex_faces_[u]) {
      const auto& t = faces_[f];
      if (t[0] == v || t[1] == v || t[2] == v) shared.push_back(f);
    }
    if (shared.empty()) return;

    // Link condition: the common neighbours of u and v are exactly the apexes of the shared faces.
    std::set<std::uint32_t> apexes;
    for (auto f : shared) {
      for (auto w : faces_[f]) {
        if (w != u && w != v) apexes.insert(w);
      }
    }
    const auto nu = neighbours(u);
    const auto nv = neighbours(v);
    std::vector<std::uint32_t> common;
    std::set_intersection(nu.begin(), nu.end(), nv.begin(), nv.end(), std::back_inserter(common));
    if (common.size() != apexes.size()) return;
    // Keep at least a tetrahedron per closed component.
    if (alive_faces_ < shared.size() + 4) return;

    if (!normals_preserved(u, v, c.target) || !normals_preserved(v, u, c.target)) return;

    for (auto f : shared) {
      face_alive_[f] = false;
      --alive_faces_;
      for (auto w : faces_[f]) {
        auto& list = vertex_faces_[w];
        list.erase(std::remove(list.begin(), list.end(), f), list.end());
      }
    }
    for (auto f : vertex_faces_[v]) {
      for (auto& w : faces_[f]) {
        if (w == v) w = u;
      }
      vertex_faces_[u].push_back(f);
    }
    vertex_faces_[v].clear();
    pos_[u] = c.target;
    quadric_[u] += quadric_[v];
    locked_[u] = locked_[u] || locked_[v];
    ++version_[u];
    ++version_[v];
    for (auto w : neighbours(u)) push(u, w);
  }

  std::vector<Vec3> pos_;
  std::vector<Triangle> faces_;
  std::vector<bool> face_alive_;
  std::vector<std::vector<std::uint32_t>> vertex_faces_;
  std::vector<Quadric> quadric_;
  std::vector<bool> locked_;
  std::vector<std::uint32_t> version_;
  std::size_t alive_faces_;
  double scale_ = 1.0;
  std::priority_queue<Candidate, std::vector<Candidate>, std::greater<>> heap_;
};

}  // namespace

TriangleMesh weld(const TriangleMesh& mesh, double tolerance) {
  const auto& in = mesh.vertices();
  std::vector<std::uint32_t> remap(in.size());
  std::vector<Vec3> out;
  const double cell = tolerance > 0.0 ? tolerance : 1.0;
  std::unordered_map<CellKey, std::vector<std::uint32_t>, CellHash> grid;
  auto key_of = [&](const Vec3& p) {
    return CellKey{static_cast<std::int64_t>(std::floor(p.x / cell)), static_cast<std::int64_t>(std::floor(p.y / cell)),
                   static_cast<std::int64_t>(std::floor(p.z / cell))};
  };
  const double tol2 = tolerance * tolerance;
  for (std::uint32_t i = 0; i < in.size(); ++i) {
    const CellKey k = key_of(in[i]);
    std::optional<std::uint32_t> found;
    for (std::int64_t dz = -1; dz <= 1 && !found; ++dz) {
      for (std::int64_t dy = -1; dy <= 1 && !found; ++dy) {
        for (std::int64_t dx = -1; dx <= 1 && !found; ++dx) {
          auto it = grid.find({k.x + dx, k.y + dy, k.z + dz});
          if (it == grid.end()) continue;
          for (auto rep : it->second) {
            const double d2 = squared_norm(out[rep] - in[i]);
            if (tolerance > 0.0 ? d2 <= tol2 : d2 == 0.0) {
              found = rep;
              break;
            }
          }
        }
      }
    }
    if (found) {
      remap[i] = *found;
    } else {
      remap[i] = static_cast<std::uint32_t>(out.size());
      grid[k].push_back(remap[i]);
      out.push_back(in[i]);
    }
  }

  std::vector<Triangle> faces;
  std::set<std::array<std::uint32_t, 3>> seen;
  for (const auto& t : mesh.triangles()) {
    const Triangle r{remap[t[0]], remap[t[1]], remap[t[2]]};
    if (r[0] == r[1] || r[1] == r[2] || r[0] == r[2]) continue;
    auto sorted = r;
    std::sort(sorted.begin(), sorted.end());
    if (!seen.insert(sorted).second) continue;
    faces.push_back(r);
  }
  repair_winding(out, faces);

  // Drop vertices no longer referenced.
  std::vector<std::uint32_t> compact(out.size(), UINT32_MAX);
  std::vector<Vec3> used;
  for (auto& t : faces) {
    for (auto& idx : t) {
      if (compact[idx] == UINT32_MAX) {
        compact[idx] = static_cast<std::uint32_t>(used.size());
        used.push_back(out[idx]);
      }
      idx = compact[idx];
    }
  }
  return TriangleMesh(std::move(used), std::move(faces));
}

TriangleMesh decimate(const TriangleMesh& mesh, std::size_t target_face_count) {
  if (target_face_count < 4) throw Error("decimation target must be at least 4 faces");
  if (mesh.triangle_count() <= target_face_count) return mesh;
  Decimator d(mesh);
  const std::size_t achieved = d.run(target_face_count);
  if (achieved > target_face_count) {
    throw Error("decimation target " + std::to_string(target_face_count) + " unreachable; achieved " +
                std::to_string(achieved) + " faces");
  }
  return d.result();
}

TriangleMesh subdivide(const TriangleMesh& mesh, int levels) {
  if (levels < 0) throw Error("subdivision levels must be non-negative");
  std::vector<Vec3> v = mesh.vertices();
  std::vector<Triangle> f = mesh.triangles();
  for (int l = 0; l < levels; ++l) {
    std::unordered_map<std::uint64_t, std::uint32_t> midpoint;
    auto mid = [&](std::uint32_t a, std::uint32_t b) {
      auto [it, inserted] = midpoint.try_emplace(edge_key(a, b), static_cast<std::uint32_t>(v.size()));
      if (inserted) v.push_back((v[a] + v[b]) * 0.5);
      return it->second;
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
  return TriangleMesh(std::move(v), std::move(f));
}

TriangleMesh jitter(const TriangleMesh& mesh, double stddev_fraction, std::uint64_t seed) {
  if (stddev_fraction < 0.0) throw Error("jitter magnitude must be non-negative");
  if (stddev_fraction == 0.0) return mesh;
  const double sigma = stddev_fraction * mesh.bounds().diagonal();
  const auto normals = vertex_normals(mesh);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<Vec3> v = mesh.vertices();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] += normals[i] * (sigma * gauss(rng));
  return TriangleMesh(std::move(v), mesh.triangles());
}

void AugmentationPlan::validate() const {
  for (const auto& variant : variants) {
    if (!(variant.weight > 0.0 && variant.weight <= 1.0)) {
      throw Error("variant '" + variant.name + "' weight must lie in (0, 1]");
    }
  }
}

namespace {

TriangleMesh apply_step(const TriangleMesh& mesh, const AugmentationStep& step) {
  return std::visit(
      [&](const auto& s) -> TriangleMesh {
        using S = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<S, WeldStep>) {
          return weld(mesh, s.tolerance_fraction * mesh.bounds().diagonal());
        } else if constexpr (std::is_same_v<S, DecimateStep>) {
          return decimate(mesh, s.target_face_count);
        } else if constexpr (std::is_same_v<S, SubdivideStep>) {
          return subdivide(mesh, s.levels);
        } else {
          return jitter(mesh, s.stddev_fraction, s.seed);
        }
      },
      step);
}

}  // namespace

AugmentationResult generate_augmentations(const TriangleMesh& mesh, const AugmentationPlan& plan) {
  plan.validate();
  const std::size_t n = plan.variants.size();
  std::vector<std::optional<TriangleMesh>> outputs(n);
  std::vector<std::string> errors(n);
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < n; ++i) {
    try {
      TriangleMesh current = mesh;
      for (const auto& step : plan.variants[i].steps) current = apply_step(current, step);
      outputs[i] = std::move(current);
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  }
  AugmentationResult result;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& spec = plan.variants[i];
    if (outputs[i]) {
      result.meshes.push_back({i, spec.name, std::move(*outputs[i]), spec.weight});
    } else {
      result.failures.push_back({i, spec.name, errors[i]});
    }
  }
  return result;
}

AugmentationPlan standard_preset(const TriangleMesh& reference, double weight, std::uint64_t seed) {
  const WeldStep weld_step{1e-6};
  const std::size_t faces = weld(reference, weld_step.tolerance_fraction * reference.bounds().diagonal()).triangle_count();
  auto target = [&](double ratio) {
    const auto t = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(faces)));
    return std::max<std::size_t>(t, std::min<std::size_t>(faces, 8));
  };

  AugmentationPlan plan;
  auto add = [&](std::string name, std::vector<AugmentationStep> steps) {
    plan.variants.push_back({std::move(name), std::move(steps), weight});
  };
  add("weld", {weld_step});
  for (double ratio : {0.25, 0.45, 0.50, 0.55, 0.60}) {
    add("decimate-" + std::to_string(ratio).substr(0, 4), {weld_step, DecimateStep{target(ratio)}});
  }
  for (double ratio : {0.25, 0.50}) {
    for (int levels : {0, 1}) {
      for (double sigma : {5e-4, 1e-3, 2e-3, 4e-3}) {
        const std::uint64_t s = seed + plan.variants.size();
        std::vector<AugmentationStep> steps{weld_step, DecimateStep{target(ratio)}};
        if (levels > 0) steps.push_back(SubdivideStep{levels});
        steps.push_back(JitterStep{sigma, s});
        add("remesh-d" + std::to_string(ratio).substr(0, 4) + "-s" + std::to_string(levels) + "-j" +
                std::to_string(sigma).substr(0, 6),
            std::move(steps));
      }
    }
  }
  add("subdivide-1", {weld_step, SubdivideStep{1}});
  return plan;
}

}  // namespace aerosdf::mesh

#include <cmath>
#include <numbers>

#include "aerosdf/common/error.hpp"
#include "aerosdf/datagen.hpp"

namespace aerosdf::datagen {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

// Lattice segments per body axis and spoiler plate proportions.
constexpr int kSegX = 16;
constexpr int kSegY = 6;
constexpr int kSegZ = 4;
constexpr int kSpoilerSegY = 4;
constexpr double kSpoilerSpan = 0.45;    // half-span as a fraction of the width
constexpr double kSpoilerChord = 0.12;   // chord as a fraction of the length

void check_range(const char* name, double value, double lo, double hi) {
  if (!(value >= lo && value <= hi)) {
    throw Error(std::string(name) + " = " + std::to_string(value) + " outside [" + std::to_string(lo) + ", " +
                std::to_string(hi) + "]");
  }
}

struct Body {
  double x_front, x_rear, x_front_top, x_rear_top, z_bottom, z_top, half_width;
};

Body body_of(const ShapeParams& p) {
  const double z0 = p.ride_height;
  return {kBodyFront,
          kBodyFront + p.length,
          kBodyFront + p.height * std::tan(p.alpha_deg * kDeg),
          kBodyFront + p.length - p.height * std::tan(p.beta_deg * kDeg),
          z0,
          z0 + p.height,
          0.5 * p.width};
}

}  // namespace

void ShapeParams::validate() const {
  for (auto [name, value] : {std::pair{"length", length}, {"width", width}, {"height", height}}) {
    if (!(value > 0.0) || !std::isfinite(value)) throw Error(std::string(name) + " must be positive");
  }
  check_range("alpha_deg", alpha_deg, 0.0, kMaxRampDeg);
  check_range("beta_deg", beta_deg, 0.0, kMaxRampDeg);
  check_range("ride_height", ride_height, 0.02 * height, 0.2 * height);
  if (spoiler) {
    check_range("gamma_deg", gamma_deg, 0.0, kMaxSpoilerDeg);
  } else if (gamma_deg != 0.0) {
    throw Error("gamma_deg must be 0 without a spoiler");
  }
  if (height * (std::tan(alpha_deg * kDeg) + std::tan(beta_deg * kDeg)) >= length) {
    throw Error("front ramp and rear slant leave no roof");
  }
}

double ShapeParams::beta_eff() const { return (beta_deg - (spoiler ? 0.4 * gamma_deg : 0.0)) * kDeg; }

ShapeParams params_from_unit(std::span<const double> u, bool spoiler) {
  if (u.size() < 4) throw Error("shape parameters need 4 unit coordinates");
  ShapeParams p;
  p.alpha_deg = kMaxRampDeg * u[0];
  p.beta_deg = kMaxRampDeg * u[1];
  p.ride_height = (0.02 + 0.18 * u[2]) * p.height;
  p.spoiler = spoiler;
  p.gamma_deg = spoiler ? kMaxSpoilerDeg * u[3] : 0.0;
  return p;
}

mesh::TriangleMesh build_shape_mesh(const ShapeParams& params) {
  params.validate();
  const Body b = body_of(params);

  // Trilinear map of the unit cube onto the hexahedron; x varies with (u, w) only.
  auto point = [&](double u, double v, double w) {
    const double bottom = b.x_front + u * (b.x_rear - b.x_front);
    const double top = b.x_front_top + u * (b.x_rear_top - b.x_front_top);
    return Vec3{bottom + w * (top - bottom), -b.half_width + v * 2.0 * b.half_width,
                b.z_bottom + w * (b.z_top - b.z_bottom)};
  };

  std::vector<Vec3> vertices;
  std::vector<std::int64_t> lattice((kSegX + 1) * (kSegY + 1) * (kSegZ + 1), -1);
  auto vertex = [&](int i, int j, int k) {
    auto& slot = lattice[i + (kSegX + 1) * (j + (kSegY + 1) * k)];
    if (slot < 0) {
      slot = static_cast<std::int64_t>(vertices.size());
      vertices.push_back(point(double(i) / kSegX, double(j) / kSegY, double(k) / kSegZ));
    }
    return static_cast<std::uint32_t>(slot);
  };

  const Vec3 center = point(0.5, 0.5, 0.5);
  std::vector<mesh::Triangle> triangles;
  auto add = [&](std::uint32_t a, std::uint32_t b1, std::uint32_t c) {
    const Vec3 &pa = vertices[a], &pb = vertices[b1], &pc = vertices[c];
    const Vec3 n = cross(pb - pa, pc - pa);
    const Vec3 centroid = (pa + pb + pc) / 3.0;
    if (dot(n, centroid - center) < 0.0) {
      triangles.push_back({a, c, b1});
    } else {
      triangles.push_back({a, b1, c});
    }
  };
  // One face of the lattice: `fixed` axis at index `at`, the other two axes swept.
  auto face = [&](int fixed, int at) {
    const int seg[3] = {kSegX, kSegY, kSegZ};
    const int a1 = (fixed + 1) % 3;
    const int a2 = (fixed + 2) % 3;
    for (int s = 0; s < seg[a1]; ++s) {
      for (int t = 0; t < seg[a2]; ++t) {
        auto idx = [&](int ds, int dt) {
          int ijk[3];
          ijk[fixed] = at;
          ijk[a1] = s + ds;
          ijk[a2] = t + dt;
          return vertex(ijk[0], ijk[1], ijk[2]);
        };
        const auto v00 = idx(0, 0), v10 = idx(1, 0), v11 = idx(1, 1), v01 = idx(0, 1);
        add(v00, v10, v11);
        add(v00, v11, v01);
      }
    }
  };
  face(0, 0);
  face(0, kSegX);
  face(1, 0);
  face(1, kSegY);
  face(2, 0);
  face(2, kSegZ);

  if (params.spoiler) {
    const double gamma = params.gamma_deg * kDeg;
    const double chord = kSpoilerChord * params.length;
    const Vec3 dir{std::cos(gamma), 0.0, std::sin(gamma)};
    const auto base = static_cast<std::uint32_t>(vertices.size());
    for (int row = 0; row < 2; ++row) {
      for (int j = 0; j <= kSpoilerSegY; ++j) {
        const double y = kSpoilerSpan * params.width * (2.0 * j / kSpoilerSegY - 1.0);
        vertices.push_back(Vec3{b.x_rear_top, y, b.z_top} + dir * (row * chord));
      }
    }
    const std::uint32_t stride = kSpoilerSegY + 1;
    for (std::uint32_t j = 0; j < kSpoilerSegY; ++j) {
      const std::uint32_t a = base + j, c = base + j + 1, d = base + stride + j, e = base + stride + j + 1;
      // Upward facing: x along the chord, y across the span.
      triangles.push_back({a, d, e});
      triangles.push_back({a, e, c});
    }
  }
  return mesh::TriangleMesh(std::move(vertices), std::move(triangles), mesh::DegeneratePolicy::kStrict);
}

bool inside_body(const ShapeParams& params, const Vec3& p) {
  const Body b = body_of(params);
  if (p.z < b.z_bottom || p.z > b.z_top || std::abs(p.y) > b.half_width) return false;
  const double rise = p.z - b.z_bottom;
  return p.x >= b.x_front + rise * std::tan(params.alpha_deg * kDeg) &&
         p.x <= b.x_rear - rise * std::tan(params.beta_deg * kDeg);
}

double drag_proxy(const ShapeParams& params) {
  params.validate();
  const double s = std::sin(2.0 * params.beta_eff());
  return 0.18 + 0.10 * (1.0 - std::sin(params.alpha_deg * kDeg)) + 0.12 * s * s +
         0.05 * std::exp(-10.0 * params.ride_height / params.height);
}

namespace {

struct Plume {
  double gain;    // A * G
  double dy, dz;  // offsets scaled by the plume widths
};

Plume plume_at(const ShapeParams& params, const Body& b, const Vec3& p) {
  const double xi = p.x - b.x_rear_top;
  if (xi <= 0.0) return {0.0, 0.0, 0.0};
  const double spread = 1.0 + xi / params.length;
  const double sy = 0.5 * params.width * spread;
  const double sz = 0.5 * params.height * spread;
  const double z_c = params.ride_height + 0.5 * params.height;
  const double dy = p.y / sy;
  const double dz = (p.z - z_c) / sz;
  const double r2 = dy * dy + dz * dz;
  const double taper = std::max(0.0, 1.0 - r2 / 9.0);
  if (taper == 0.0) return {0.0, dy, dz};
  const double g = (1.0 - std::exp(-xi / (0.1 * params.length))) * std::exp(-xi / (2.0 * params.length)) *
                   std::exp(-0.5 * r2) * taper * taper;
  const double amplitude = 0.35 + 0.4 * std::sin(params.beta_eff());
  return {amplitude * g, dy, dz};
}

}  // namespace

bool in_plume_support(const ShapeParams& params, const Vec3& p) {
  return plume_at(params, body_of(params), p).gain != 0.0;
}

sdf::Volume wake_field(const ShapeParams& params, const sdf::GridSpec& grid) {
  params.validate();
  grid.validate();
  const Body b = body_of(params);
  sdf::Volume v;
  v.grid = grid;
  v.components = 3;
  v.values.assign(grid.cell_count() * 3, 0.0);
  for (std::size_t k = 0; k < grid.dims[2]; ++k) {
    for (std::size_t j = 0; j < grid.dims[1]; ++j) {
      for (std::size_t i = 0; i < grid.dims[0]; ++i) {
        const Vec3 p = grid.cell_center(i, j, k);
        if (inside_body(params, p)) continue;
        const Plume w = plume_at(params, b, p);
        v.at(i, j, k, 0) = kFreeStream * (1.0 - w.gain);
        v.at(i, j, k, 1) = -0.1 * kFreeStream * w.gain * w.dz;
        v.at(i, j, k, 2) = 0.1 * kFreeStream * w.gain * w.dy;
      }
    }
  }
  return v;
}

sdf::GridSpec default_grid() {
  sdf::GridSpec g;
  g.dims = {64, 16, 16};
  g.spacing = {0.0625, 0.0625, 0.0625};
  g.origin = {0.03125, -0.46875, 0.03125};
  return g;
}

}  // namespace aerosdf::datagen

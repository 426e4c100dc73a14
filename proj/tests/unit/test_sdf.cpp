#include <cmath>
#include <cstring>
#include <limits>
#include <random>

#include "aerosdf/common/error.hpp"
#include "aerosdf/common/parallel.hpp"
#include "aerosdf/mesh.hpp"
#include "aerosdf/sdf.hpp"
#include "doctest.h"
#include "test_support.hpp"

using namespace aerosdf;
using namespace aerosdf::sdf;

namespace {

double brute_force_distance(const mesh::TriangleMesh& m, const Vec3& p) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t t = 0; t < m.triangle_count(); ++t) {
    const auto c = m.corners(t);
    best = std::min(best, point_triangle_squared_distance(p, c[0], c[1], c[2]));
  }
  return std::sqrt(best);
}

// Exact signed distance to the axis-aligned box [lo, hi].
double box_sdf(const Vec3& p, const Vec3& lo, const Vec3& hi) {
  const Vec3 c = (lo + hi) * 0.5, h = (hi - lo) * 0.5;
  const Vec3 q{std::abs(p.x - c.x) - h.x, std::abs(p.y - c.y) - h.y, std::abs(p.z - c.z) - h.z};
  const Vec3 qp{std::max(q.x, 0.0), std::max(q.y, 0.0), std::max(q.z, 0.0)};
  return norm(qp) + std::min(std::max(q.x, std::max(q.y, q.z)), 0.0);
}

GridSpec grid(std::uint32_t nx, std::uint32_t ny, std::uint32_t nz, Vec3 origin, double h) {
  GridSpec g;
  g.dims = {nx, ny, nz};
  g.origin = origin;
  g.spacing = {h, h, h};
  return g;
}

}  // namespace

TEST_CASE("point-triangle distance in every Voronoi region") {
  const Vec3 a{0, 0, 0}, b{1, 0, 0}, c{0, 1, 0};
  CHECK(point_triangle_squared_distance({0.2, 0.2, 3}, a, b, c) == doctest::Approx(9.0));
  CHECK(point_triangle_squared_distance({-1, -1, 0}, a, b, c) == doctest::Approx(2.0));
  CHECK(point_triangle_squared_distance({2, 0, 0}, a, b, c) == doctest::Approx(1.0));
  CHECK(point_triangle_squared_distance({0.5, -2, 0}, a, b, c) == doctest::Approx(4.0));
  CHECK(point_triangle_squared_distance({1, 1, 0}, a, b, c) == doctest::Approx(0.5));
  CHECK(point_triangle_squared_distance({-3, 0.5, 0}, a, b, c) == doctest::Approx(9.0));
}

TEST_CASE("index structure") {
  const mesh::TriangleMesh tri({{0, 0, 0}, {1, 0, 0}, {0, 1, 0}}, {{0, 1, 2}});
  CHECK(DistanceIndex(tri).leaf_count() == 1);
  CHECK_THROWS_AS(DistanceIndex(mesh::TriangleMesh{}), Error);

  for (const auto& m : {mesh::box({0, 0, 0}, {1, 1, 1}), mesh::icosphere(3)}) {
    const DistanceIndex index(m);
    std::vector<int> seen(m.triangle_count(), 0);
    for (const auto& node : index.nodes()) {
      if (node.leaf) {
        CHECK(node.right <= DistanceIndex::kLeafSize);
        for (std::uint32_t s = node.left; s < node.left + node.right; ++s) {
          const auto id = index.leaf_triangles()[s];
          ++seen[id];
          for (const auto& v : index.triangle(id)) CHECK(node.box.squared_distance(v) == 0.0);
        }
      } else {
        const auto& l = index.nodes()[node.left];
        const auto& r = index.nodes()[node.right];
        CHECK(node.box.contains(l.box));
        CHECK(node.box.contains(r.box));
      }
    }
    for (int s : seen) CHECK(s == 1);
  }
}

TEST_CASE("accelerated distance equals brute force on an icosphere") {
  const auto m = mesh::icosphere(3, 1.0);
  const DistanceIndex index(m);
  std::mt19937_64 rng(42);
  Aabb box{{-2, -2, -2}, {2, 2, 2}};
  for (int i = 0; i < 1000; ++i) {
    const auto p = test::random_point(rng, box);
    const double bf = brute_force_distance(m, p);
    CHECK(std::abs(index.unsigned_distance(p) - bf) <= 1e-9 * std::max(bf, 1e-300));
  }
}

TEST_CASE("unit cube distances") {
  const auto cube = mesh::box({0, 0, 0}, {1, 1, 1});
  const DistanceIndex index(cube);
  CHECK(index.unsigned_distance({0.5, 0.5, 0.5}) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(index.unsigned_distance({2, 0.5, 0.5}) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(index.unsigned_distance({2, 2, 2}) == doctest::Approx(std::sqrt(3.0)).epsilon(1e-15));
}

TEST_CASE("sign estimation on closed and holed cubes") {
  const auto cube = mesh::box({0, 0, 0}, {1, 1, 1});
  const DistanceIndex index(cube);
  CHECK(estimate_sign(index, {0.5, 0.5, 0.5}) == -1);
  CHECK(estimate_sign(index, {5, 5, 5}) == 1);

  const auto holed = test::remove_face(cube, 0);
  const DistanceIndex hidx(holed);
  const auto vote = vote_sign(hidx, {0.5, 0.5, 0.5}, 11, hash_point({0.5, 0.5, 0.5}));
  CHECK(vote.sign == -1);
  CHECK(vote.inside_votes >= 6);
  CHECK(vote.rays == 11);
}

TEST_CASE("voting agrees with exact parity on a watertight mesh") {
  const auto sphere = mesh::icosphere(2, 1.0);
  const DistanceIndex index(sphere);
  std::mt19937_64 rng(3);
  const Aabb box{{-1.5, -1.5, -1.5}, {1.5, 1.5, 1.5}};
  for (int i = 0; i < 300; ++i) {
    const auto p = test::random_point(rng, box);
    if (index.unsigned_distance(p) < 1e-6) continue;
    // Single ray along a generic direction, recast if it grazes an edge.
    bool ambiguous = true;
    int crossings = 0;
    for (Vec3 d{0.5772, 0.3141, 0.7071}; ambiguous; d = d + Vec3{0.013, -0.021, 0.007}) {
      ambiguous = false;
      crossings = index.ray_crossings(p, normalized(d), ambiguous);
    }
    CHECK(estimate_sign(index, p) == (crossings % 2 ? -1 : 1));
  }
}

TEST_CASE("cube SDF on a 4x4x4 grid matches the analytic box distance") {
  const auto cube = mesh::box({0, 0, 0}, {1, 1, 1});
  const auto g = grid(4, 4, 4, {-0.625, -0.625, -0.625}, 0.75);
  const auto vol = generate_sdf(cube, g);
  for (std::size_t k = 0; k < 4; ++k)
    for (std::size_t j = 0; j < 4; ++j)
      for (std::size_t i = 0; i < 4; ++i) {
        const Vec3 p = g.cell_center(i, j, k);
        CHECK(vol.at(i, j, k) == doctest::Approx(box_sdf(p, {0, 0, 0}, {1, 1, 1})).epsilon(1e-9));
      }
  CHECK(vol.at(1, 1, 1) < 0.0);
  CHECK(vol.at(0, 0, 0) > 0.0);
}

TEST_CASE("sphere SDF tracks the analytic sphere") {
  const double r = 1.0;
  const auto sphere = mesh::icosphere(5, r);
  const auto g = grid(12, 12, 12, {-1.65, -1.65, -1.65}, 0.3);
  const auto vol = generate_sdf(sphere, g);
  for (std::size_t k = 0; k < 12; ++k)
    for (std::size_t j = 0; j < 12; ++j)
      for (std::size_t i = 0; i < 12; ++i) {
        const double exact = norm(g.cell_center(i, j, k)) - r;
        CHECK(std::abs(std::abs(vol.at(i, j, k)) - std::abs(exact)) < 1e-3 * r);
        CHECK((vol.at(i, j, k) < 0) == (exact < 0));
      }
}

TEST_CASE("single-cell grid at a far exterior point") {
  const auto vol = generate_sdf(mesh::box({0, 0, 0}, {1, 1, 1}), grid(1, 1, 1, {10, 10, 10}, 1.0));
  REQUIRE(vol.values.size() == 1);
  CHECK(vol.values[0] > 0.0);
}

TEST_CASE("points on the surface have zero distance") {
  const auto sphere = mesh::icosphere(2, 1.0);
  const DistanceIndex index(sphere);
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t t = 0; t < sphere.triangle_count(); t += 7) {
    const auto c = sphere.corners(t);
    double a = u(rng), b = u(rng);
    if (a + b > 1) {
      a = 1 - a;
      b = 1 - b;
    }
    const Vec3 p = c[0] + (c[1] - c[0]) * a + (c[2] - c[0]) * b;
    CHECK(index.unsigned_distance(p) < 1e-9);
  }
}

TEST_CASE("generation is deterministic, worker-independent and translation equivariant") {
  const auto m = test::remove_face(mesh::box({0.125, 0.25, 0.375}, {0.875, 0.75, 0.8125}), 3);
  const auto g = grid(16, 12, 10, {-0.25, -0.25, -0.25}, 0.125);
  const auto a = generate_sdf(m, g);
  const auto b = generate_sdf(m, g);
  CHECK(a.values == b.values);
  {
    parallel::WorkerScope one(1);
    CHECK(generate_sdf(m, g).values == a.values);
  }
  // Dyadic coordinates keep every difference exact, so the values match bitwise.
  const Vec3 shift{2.0, -1.0, 0.5};
  auto g2 = g;
  g2.origin = g.origin + shift;
  CHECK(generate_sdf(mesh::translated(m, shift), g2).values == a.values);
}

TEST_CASE("normalization clamps and scales") {
  Volume v;
  v.grid = grid(3, 1, 1, {0, 0, 0}, 1.0);
  v.values = {3.7, -0.4, -9.0};
  const auto n = normalize_sdf(v, 1.0, 1.0);
  CHECK(n.values[0] == 1.0);
  CHECK(n.values[1] == -0.4);
  CHECK(n.values[2] == -1.0);
  const auto s = normalize_sdf(v, std::numeric_limits<double>::infinity(), 2.0);
  CHECK(s.values[0] == 1.85);
  CHECK(s.values[2] == -4.5);
  CHECK_THROWS_AS(normalize_sdf(v, 0.0, 1.0), Error);
  const auto dn = default_normalization(grid(2, 2, 2, {}, 0.5));
  CHECK(dn.clamp == 4.0);
  CHECK(dn.scale == 4.0);
}

TEST_CASE("volume files round-trip bitwise") {
  Volume v;
  v.grid = grid(5, 4, 3, {-1.5, 0.25, 3.0}, 0.1);
  v.components = 3;
  std::mt19937_64 rng(1);
  std::normal_distribution<float> nd;
  for (std::size_t i = 0; i < v.grid.cell_count() * 3; ++i) v.values.push_back(nd(rng));
  const auto path = test::temp_path("v.sdf3");
  write_volume(v, path);
  const auto back = read_volume(path);
  CHECK(back.grid == v.grid);
  CHECK(back.components == 3);
  CHECK(back.values == v.values);
  CHECK(encode_volume(back) == encode_volume(v));
}

TEST_CASE("volume decoding errors") {
  Volume v;
  v.grid = grid(2, 2, 2, {}, 1.0);
  v.values.assign(8, 0.5);
  auto bytes = encode_volume(v);

  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  try {
    decode_volume(bad_magic);
    FAIL("expected an error");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("SDF3") != std::string::npos);
  }

  auto truncated = bytes;
  truncated.resize(bytes.size() - 4);
  CHECK_THROWS_AS(decode_volume(truncated), ParseError);

  auto inflated = bytes;
  const std::uint32_t big = 3;
  std::memcpy(inflated.data() + 8, &big, 4);
  CHECK_THROWS_AS(decode_volume(inflated), ParseError);

  auto overflow = bytes;
  const std::uint32_t huge = 0xffffffffu;
  for (int a = 0; a < 3; ++a) std::memcpy(overflow.data() + 8 + 4 * a, &huge, 4);
  CHECK_THROWS_AS(decode_volume(overflow), ParseError);
}

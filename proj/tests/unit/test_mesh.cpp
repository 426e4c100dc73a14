#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "aerosdf/augment.hpp"
#include "aerosdf/common/error.hpp"
#include "aerosdf/mesh.hpp"
#include "aerosdf/mesh_io.hpp"
#include "doctest.h"
#include "test_support.hpp"

using namespace aerosdf;
using namespace aerosdf::mesh;

namespace {

std::vector<std::uint8_t> bytes_of(const std::string& s) { return {s.begin(), s.end()}; }

TriangleMesh unit_cube() { return box({0, 0, 0}, {1, 1, 1}); }

// Unit cube OBJ written by hand: 8 vertices, 12 outward triangles.
const char* kCubeObj = R"(# unit cube
v 0 0 0
v 1 0 0
v 1 1 0
v 0 1 0
v 0 0 1
v 1 0 1
v 1 1 1
v 0 1 1
f 1 3 2
f 1 4 3
f 5 6 7
f 5 7 8
f 1 2 6
f 1 6 5
f 2 3 7
f 2 7 6
f 3 4 8
f 3 8 7
f 4 1 5
f 4 5 8
)";

// Compares corresponding triangle corners, so vertex renumbering does not matter.
double max_corner_deviation(const TriangleMesh& a, const TriangleMesh& b) {
  REQUIRE(a.triangle_count() == b.triangle_count());
  double worst = 0.0;
  for (std::size_t t = 0; t < a.triangle_count(); ++t) {
    const auto ca = a.corners(t), cb = b.corners(t);
    for (int k = 0; k < 3; ++k) worst = std::max(worst, norm(ca[k] - cb[k]));
  }
  return worst;
}

}  // namespace

TEST_CASE("single-triangle ASCII STL gives one triangle with +z normal") {
  const std::string text =
      "solid t\n facet normal 0 0 1\n  outer loop\n   vertex 0 0 0\n   vertex 1 0 0\n   vertex 0 1 0\n"
      "  endloop\n endfacet\nendsolid t\n";
  const auto m = parse_stl_ascii(bytes_of(text), DegeneratePolicy::kDrop);
  CHECK(m.vertex_count() == 3);
  CHECK(m.triangle_count() == 1);
  CHECK(m.normals()[0].x == 0.0);
  CHECK(m.normals()[0].y == 0.0);
  CHECK(m.normals()[0].z == 1.0);
}

TEST_CASE("truncated binary STL reports the truncation offset") {
  std::vector<std::uint8_t> bytes(84 + 50 + 20, 0);
  const std::uint32_t count = 2;
  std::memcpy(bytes.data() + 80, &count, 4);
  try {
    parse_stl_binary(bytes, DegeneratePolicy::kDrop);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.location() == bytes.size());
    CHECK(e.unit() == ParseError::Unit::kByte);
  }
}

TEST_CASE("hand-built OBJ cube is watertight with area 6") {
  const auto m = parse_obj(bytes_of(kCubeObj), DegeneratePolicy::kDrop);
  const auto s = compute_stats(m);
  CHECK(s.vertex_count == 8);
  CHECK(s.triangle_count == 12);
  CHECK(s.watertight);
  CHECK(s.boundary_edges == 0);
  CHECK(s.surface_area == doctest::Approx(6.0).epsilon(1e-15));
  CHECK(s.bounds.lo.x == 0.0);
  CHECK(s.bounds.hi.z == 1.0);
}

TEST_CASE("OBJ parser accepts slash forms and negative indices") {
  const std::string text = "v 0 0 0\nv 1 0 0\nv 0 1 0\nvt 0 0\nvn 0 0 1\nf -3/1/1 -2/1/1 -1/1/1\n";
  const auto m = parse_obj(bytes_of(text), DegeneratePolicy::kDrop);
  CHECK(m.triangle_count() == 1);
  CHECK(m.normals()[0].z == doctest::Approx(1.0));
}

TEST_CASE("OBJ quads are fan triangulated") {
  const std::string text = "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n";
  CHECK(parse_obj(bytes_of(text), DegeneratePolicy::kDrop).triangle_count() == 2);
}

TEST_CASE("parse errors carry line numbers") {
  try {
    parse_obj(bytes_of("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 9\n"), DegeneratePolicy::kDrop);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.location() == 4);
    CHECK(e.unit() == ParseError::Unit::kLine);
  }
}

TEST_CASE("empty and non-finite meshes are rejected") {
  CHECK_THROWS_AS(parse_obj(bytes_of("v 0 0 0\n"), DegeneratePolicy::kDrop), Error);
  CHECK_THROWS_AS(parse_obj(bytes_of("v 0 0 nan\nv 1 0 0\nv 0 1 0\nf 1 2 3\n"), DegeneratePolicy::kDrop), Error);
}

TEST_CASE("degenerate triangles are dropped or rejected per policy") {
  std::vector<Vec3> v{{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {1, 0, 0}};
  std::vector<Triangle> t{{0, 1, 2}, {0, 1, 1}, {0, 1, 3}};
  TriangleMesh dropped(v, t, DegeneratePolicy::kDrop);
  CHECK(dropped.triangle_count() == 1);
  CHECK(dropped.dropped_degenerate() == 2);
  CHECK_THROWS_AS(TriangleMesh(v, t, DegeneratePolicy::kStrict), Error);
  CHECK_THROWS_AS(TriangleMesh(v, {{0, 1, 7}}), Error);
}

TEST_CASE("stats of a cube, a holed cube and a single triangle") {
  const auto cube = unit_cube();
  auto s = compute_stats(cube);
  CHECK(s.watertight);
  CHECK(s.bounds.lo.x == 0.0);
  CHECK(s.bounds.hi.y == 1.0);
  CHECK(s.surface_area == doctest::Approx(6.0));

  const auto holed = test::remove_face(cube, 0);
  s = compute_stats(holed);
  CHECK_FALSE(s.watertight);
  CHECK(s.boundary_edges == 4);

  TriangleMesh tri({{0, 0, 0}, {1, 0, 0}, {0, 1, 0}}, {{0, 1, 2}});
  s = compute_stats(tri);
  CHECK_FALSE(s.watertight);
  CHECK(s.boundary_edges == 3);
}

TEST_CASE("inconsistent winding is not watertight") {
  auto tris = unit_cube().triangles();
  std::swap(tris[0][1], tris[0][2]);
  TriangleMesh flipped(unit_cube().vertices(), tris);
  CHECK_FALSE(compute_stats(flipped).watertight);
}

TEST_CASE("icosphere face counts and closure") {
  for (int level = 0; level <= 3; ++level) {
    const auto m = icosphere(level);
    CHECK(m.triangle_count() == 20u * (1u << (2 * level)));
    CHECK(compute_stats(m).watertight);
  }
}

TEST_CASE("decimate an icosphere to 320 faces") {
  const auto sphere = icosphere(3);
  REQUIRE(sphere.triangle_count() == 1280);
  const auto out = decimate(sphere, 320);
  CHECK(out.triangle_count() <= 320);
  CHECK(out.triangle_count() >= 310);
  const auto a = sphere.bounds(), b = out.bounds();
  for (int axis = 0; axis < 3; ++axis) {
    const double extent = a.extent()[axis];
    CHECK(std::abs(a.lo[axis] - b.lo[axis]) < 0.05 * extent);
    CHECK(std::abs(a.hi[axis] - b.hi[axis]) < 0.05 * extent);
  }
}

TEST_CASE("decimate below current count is a no-op") {
  const auto cube = unit_cube();
  const auto out = decimate(cube, 20);
  CHECK(out.vertices() == cube.vertices());
  CHECK(out.triangles() == cube.triangles());
}

TEST_CASE("decimate a cube to 4 faces reaches the target or reports the achieved count") {
  try {
    const auto out = decimate(unit_cube(), 4);
    CHECK(out.triangle_count() <= 4);
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("achieved") != std::string::npos);
  }
  CHECK_THROWS_AS(decimate(unit_cube(), 3), Error);
}

TEST_CASE("decimation never increases the face count") {
  const auto sphere = icosphere(2);
  for (std::size_t target : {300u, 200u, 100u, 50u, 20u}) {
    try {
      CHECK(decimate(sphere, target).triangle_count() <= sphere.triangle_count());
    } catch (const Error&) {
    }
  }
}

TEST_CASE("subdivide quadruples faces and keeps a closed mesh closed") {
  const auto cube = unit_cube();
  const auto s1 = subdivide(cube, 1);
  CHECK(s1.triangle_count() == 48);
  CHECK(compute_stats(s1).watertight);
  CHECK(compute_stats(s1).surface_area == doctest::Approx(6.0));
}

TEST_CASE("weld merges near-coincident corners and repairs winding") {
  auto cube = unit_cube();
  // Split each triangle into its own vertices, nudged below the tolerance.
  std::vector<Vec3> v;
  std::vector<Triangle> t;
  for (std::size_t f = 0; f < cube.triangle_count(); ++f) {
    auto c = cube.corners(f);
    const auto base = static_cast<std::uint32_t>(v.size());
    for (int k = 0; k < 3; ++k) v.push_back(c[k] + Vec3{1e-9 * f, 0, 0});
    if (f == 3) t.push_back({base, base + 2, base + 1});
    else t.push_back({base, base + 1, base + 2});
  }
  const auto soup = TriangleMesh(v, t);
  CHECK_FALSE(compute_stats(soup).watertight);
  const auto welded = weld(soup, 1e-6);
  CHECK(welded.vertex_count() == 8);
  CHECK(welded.triangle_count() == 12);
  CHECK(compute_stats(welded).watertight);
  // Outward orientation: the +z face normal points up.
  bool found_top = false;
  for (std::size_t f = 0; f < welded.triangle_count(); ++f) {
    const auto c = welded.corners(f);
    if (c[0].z > 0.5 && c[1].z > 0.5 && c[2].z > 0.5) {
      found_top = true;
      CHECK(welded.normals()[f].z > 0.99);
    }
  }
  CHECK(found_top);
}

TEST_CASE("zero jitter leaves the mesh identical and jitter is seeded") {
  const auto sphere = icosphere(2);
  const auto same = jitter(sphere, 0.0, 7);
  CHECK(same.vertices() == sphere.vertices());
  CHECK(jitter(sphere, 1e-3, 7).vertices() == jitter(sphere, 1e-3, 7).vertices());
  CHECK(jitter(sphere, 1e-3, 7).vertices() != jitter(sphere, 1e-3, 8).vertices());

  AugmentationPlan plan{{VariantSpec{"still", {JitterStep{0.0, 3}}, 0.5}}};
  const auto result = generate_augmentations(sphere, plan);
  REQUIRE(result.meshes.size() == 1);
  CHECK(result.meshes[0].mesh.vertices() == sphere.vertices());
}

TEST_CASE("empty plan gives no meshes") {
  const auto result = generate_augmentations(unit_cube(), AugmentationPlan{});
  CHECK(result.meshes.empty());
  CHECK(result.failures.empty());
}

TEST_CASE("plan weights must lie in (0, 1]") {
  AugmentationPlan plan{{VariantSpec{"w", {WeldStep{}}, 0.0}}};
  CHECK_THROWS_AS(plan.validate(), Error);
  plan.variants[0].weight = 1.5;
  CHECK_THROWS_AS(plan.validate(), Error);
  plan.variants[0].weight = 1.0;
  CHECK_NOTHROW(plan.validate());
}

TEST_CASE("failing variants are reported while the others are produced") {
  AugmentationPlan plan{{VariantSpec{"ok", {WeldStep{}}, 0.5}, VariantSpec{"bad", {DecimateStep{2}}, 0.5}}};
  const auto result = generate_augmentations(icosphere(1), plan);
  CHECK(result.meshes.size() == 1);
  REQUIRE(result.failures.size() == 1);
  CHECK(result.failures[0].name == "bad");
}

TEST_CASE("standard preset on a cube gives 23 weighted meshes") {
  const auto cube = unit_cube();
  const auto plan = standard_preset(cube, 0.5, 11);
  CHECK(plan.variants.size() == kStandardVariantCount);
  const auto result = generate_augmentations(cube, plan);
  CHECK(result.failures.empty());
  REQUIRE(result.meshes.size() == 23);
  for (const auto& m : result.meshes) {
    CHECK(m.weight == 0.5);
    CHECK_FALSE(m.mesh.empty());
  }
}

TEST_CASE("standard preset is deterministic") {
  const auto sphere = icosphere(3);
  const auto plan = standard_preset(sphere, 0.5, 5);
  const auto a = generate_augmentations(sphere, plan);
  const auto b = generate_augmentations(sphere, plan);
  REQUIRE(a.meshes.size() == b.meshes.size());
  for (std::size_t i = 0; i < a.meshes.size(); ++i) {
    CHECK(a.meshes[i].mesh.vertices() == b.meshes[i].mesh.vertices());
    CHECK(a.meshes[i].mesh.triangles() == b.meshes[i].mesh.triangles());
  }
}

TEST_CASE("binary STL round trip of a cube keeps stats") {
  const auto path = test::temp_path("cube.stl");
  const auto cube = unit_cube();
  write_mesh(cube, path, MeshFormat::kStlBinary);
  const auto back = load_mesh(path);
  CHECK(back.triangle_count() == cube.triangle_count());
  const auto a = compute_stats(cube), b = compute_stats(back);
  CHECK(b.vertex_count == a.vertex_count);
  CHECK(b.watertight == a.watertight);
  CHECK(b.surface_area == a.surface_area);
}

TEST_CASE("every format round-trips within its precision") {
  const auto mesh = jitter(icosphere(2, 1.7, {0.3, -0.2, 5.0}), 2e-3, 99);
  const double diag = mesh.bounds().diagonal();
  for (auto [format, name] : {std::pair{MeshFormat::kStlBinary, "m.stl"}, std::pair{MeshFormat::kStlAscii, "a.stl"},
                              std::pair{MeshFormat::kObj, "m.obj"}}) {
    const auto path = test::temp_path(name);
    write_mesh(mesh, path, format);
    const auto back = load_mesh(path);
    CHECK(back.triangle_count() == mesh.triangle_count());
    const double tol = format == MeshFormat::kObj ? 1e-12 : 1e-6;
    CHECK(max_corner_deviation(mesh, back) < tol * diag);
  }
}

TEST_CASE("format detection") {
  CHECK(detect_format("x.obj", {}) == MeshFormat::kObj);
  const auto ascii = bytes_of("solid x\nendsolid x\n");
  CHECK(detect_format("x.stl", ascii) == MeshFormat::kStlAscii);
  std::vector<std::uint8_t> binary(84, 0);
  std::memcpy(binary.data(), "solid binary header", 19);
  CHECK(detect_format("x.stl", binary) == MeshFormat::kStlBinary);
}

TEST_CASE("STL count field limit") {
  CHECK(stl_triangle_count_field(12) == 12u);
  CHECK_THROWS_AS(stl_triangle_count_field(std::size_t{1} << 32), Error);
}

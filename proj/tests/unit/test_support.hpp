#pragma once

#include <filesystem>
#include <random>
#include <string>
#include <unistd.h>

#include "aerosdf/mesh.hpp"

namespace aerosdf::test {

/// Fresh path under a per-process scratch directory.
inline std::filesystem::path temp_path(const std::string& name) {
  static const auto dir = [] {
    auto d = std::filesystem::temp_directory_path() / ("aerosdf_test_" + std::to_string(::getpid()));
    std::filesystem::create_directories(d);
    return d;
  }();
  return dir / name;
}

/// Drops the two triangles of one box face (box() emits faces as consecutive pairs).
inline mesh::TriangleMesh remove_face(const mesh::TriangleMesh& m, std::size_t face) {
  std::vector<mesh::Triangle> kept;
  for (std::size_t t = 0; t < m.triangle_count(); ++t)
    if (t / 2 != face) kept.push_back(m.triangles()[t]);
  return mesh::TriangleMesh(m.vertices(), kept);
}

inline Vec3 random_point(std::mt19937_64& rng, const Aabb& box) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const Vec3 e = box.extent();
  return {box.lo.x + u(rng) * e.x, box.lo.y + u(rng) * e.y, box.lo.z + u(rng) * e.z};
}

}  // namespace aerosdf::test

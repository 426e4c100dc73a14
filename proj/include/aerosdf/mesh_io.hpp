#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>

#include "aerosdf/mesh.hpp"

namespace aerosdf::mesh {

enum class MeshFormat { kStlBinary, kStlAscii, kObj };

/// Guesses the format from the extension and, for `.stl`, from the header.
MeshFormat detect_format(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

/// Loads a mesh. STL corners with bit-identical positions share one vertex;
/// no tolerance welding is applied.
TriangleMesh load_mesh(const std::filesystem::path& path, std::optional<MeshFormat> format = std::nullopt,
                       DegeneratePolicy policy = DegeneratePolicy::kDrop);

TriangleMesh parse_stl_binary(std::span<const std::uint8_t> bytes, DegeneratePolicy policy);
TriangleMesh parse_stl_ascii(std::span<const std::uint8_t> bytes, DegeneratePolicy policy);
TriangleMesh parse_obj(std::span<const std::uint8_t> bytes, DegeneratePolicy policy);

void write_mesh(const TriangleMesh& mesh, const std::filesystem::path& path, MeshFormat format);

/// Value of the binary STL triangle-count field; throws when the count does not fit in u32.
std::uint32_t stl_triangle_count_field(std::size_t triangle_count);

}  // namespace aerosdf::mesh

#include "aerosdf/mesh_io.hpp"

#include <algorithm>
#include <charconv>
#include <cstring>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <string_view>

#include "aerosdf/common/binary_io.hpp"
#include "aerosdf/common/error.hpp"

namespace aerosdf::mesh {

namespace {

constexpr std::size_t kStlHeaderBytes = 80;
constexpr std::size_t kStlRecordBytes = 50;

std::string lower_extension(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext;
}

// Collapses bit-identical corner positions onto shared vertices (STL stores
// corners per triangle).
class VertexPool {
 public:
  std::uint32_t add(const Vec3& p) {
    auto [it, inserted] = index_.try_emplace({p.x, p.y, p.z}, static_cast<std::uint32_t>(vertices_.size()));
    if (inserted) vertices_.push_back(p);
    return it->second;
  }
  std::vector<Vec3> take() { return std::move(vertices_); }

 private:
  std::map<std::array<double, 3>, std::uint32_t> index_;
  std::vector<Vec3> vertices_;
};

void check_finite(const Vec3& p, std::uint64_t location, ParseError::Unit unit) {
  if (!is_finite(p)) throw ParseError("non-finite coordinate", location, unit);
}

std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> tokens;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    std::size_t j = i;
    while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
    if (j > i) tokens.push_back(line.substr(i, j - i));
    i = j;
  }
  return tokens;
}

double parse_double(std::string_view token, std::uint64_t line) {
  double value = 0.0;
  // from_chars for double is not available in every libstdc++; strtod on a copy is.
  const std::string copy(token);
  char* end = nullptr;
  value = std::strtod(copy.c_str(), &end);
  if (end != copy.c_str() + copy.size()) {
    throw ParseError("invalid number '" + copy + "'", line, ParseError::Unit::kLine);
  }
  return value;
}

long long parse_int(std::string_view token, std::uint64_t line) {
  long long value = 0;
  const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
  if (ec != std::errc() || ptr != token.data() + token.size()) {
    throw ParseError("invalid index '" + std::string(token) + "'", line, ParseError::Unit::kLine);
  }
  return value;
}

template <typename Fn>
void for_each_line(std::span<const std::uint8_t> bytes, Fn&& fn) {
  const std::string_view text(reinterpret_cast<const char*>(bytes.data()), bytes.size());
  std::size_t start = 0;
  std::uint64_t line_no = 1;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    fn(line, line_no);
    if (end == text.size()) break;
    start = end + 1;
    ++line_no;
  }
}

}  // namespace

std::uint32_t stl_triangle_count_field(std::size_t triangle_count) {
  if (triangle_count > std::numeric_limits<std::uint32_t>::max()) {
    throw Error("binary STL cannot store " + std::to_string(triangle_count) +
                " triangles (u32 count field)");
  }
  return static_cast<std::uint32_t>(triangle_count);
}

MeshFormat detect_format(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  const std::string ext = lower_extension(path);
  if (ext == ".obj") return MeshFormat::kObj;
  if (bytes.size() >= kStlHeaderBytes + 4) {
    std::uint32_t count = 0;
    std::memcpy(&count, bytes.data() + kStlHeaderBytes, 4);
    if (bytes.size() == kStlHeaderBytes + 4 + static_cast<std::size_t>(count) * kStlRecordBytes) {
      return MeshFormat::kStlBinary;
    }
  }
  const std::string_view head(reinterpret_cast<const char*>(bytes.data()), std::min<std::size_t>(bytes.size(), 5));
  if (head == "solid") return MeshFormat::kStlAscii;
  return MeshFormat::kStlBinary;
}

TriangleMesh parse_stl_binary(std::span<const std::uint8_t> bytes, DegeneratePolicy policy) {
  io::Reader in(bytes);
  in.get_bytes(kStlHeaderBytes, "STL header");
  const auto count = in.get<std::uint32_t>("STL triangle count");
  if (count == 0) throw ParseError("empty mesh", in.offset(), ParseError::Unit::kByte);
  VertexPool pool;
  std::vector<Triangle> triangles;
  triangles.reserve(count);
  for (std::uint32_t t = 0; t < count; ++t) {
    const std::size_t record_start = in.offset();
    if (in.remaining() < kStlRecordBytes) {
      throw ParseError("truncated STL record " + std::to_string(t) + " of " + std::to_string(count),
                       bytes.size(), ParseError::Unit::kByte);
    }
    float values[12];
    in.get_array(std::span<float>(values, 12), "STL record");
    in.get<std::uint16_t>("STL attribute");
    Triangle tri;
    for (int c = 0; c < 3; ++c) {
      const Vec3 p{values[3 + 3 * c], values[4 + 3 * c], values[5 + 3 * c]};
      check_finite(p, record_start + 12 + 12 * c, ParseError::Unit::kByte);
      tri[c] = pool.add(p);
    }
    triangles.push_back(tri);
  }
  return TriangleMesh(pool.take(), std::move(triangles), policy);
}

TriangleMesh parse_stl_ascii(std::span<const std::uint8_t> bytes, DegeneratePolicy policy) {
  VertexPool pool;
  std::vector<Triangle> triangles;
  Triangle current{};
  int corner = -1;  // -1: outside a facet loop
  bool saw_solid = false;
  for_each_line(bytes, [&](std::string_view line, std::uint64_t n) {
    const auto tokens = split_ws(line);
    if (tokens.empty()) return;
    const auto& key = tokens[0];
    if (key == "solid") {
      saw_solid = true;
    } else if (key == "facet" || key == "endsolid" || key == "endfacet") {
      // normals are recomputed from winding
    } else if (key == "outer") {
      if (corner != -1) throw ParseError("nested 'outer loop'", n, ParseError::Unit::kLine);
      corner = 0;
    } else if (key == "vertex") {
      if (corner < 0 || corner > 2) throw ParseError("unexpected 'vertex'", n, ParseError::Unit::kLine);
      if (tokens.size() != 4) throw ParseError("vertex needs 3 coordinates", n, ParseError::Unit::kLine);
      const Vec3 p{parse_double(tokens[1], n), parse_double(tokens[2], n), parse_double(tokens[3], n)};
      check_finite(p, n, ParseError::Unit::kLine);
      current[corner++] = pool.add(p);
    } else if (key == "endloop") {
      if (corner != 3) throw ParseError("facet loop must have exactly 3 vertices", n, ParseError::Unit::kLine);
      triangles.push_back(current);
      corner = -1;
    } else {
      throw ParseError("unknown keyword '" + std::string(key) + "'", n, ParseError::Unit::kLine);
    }
  });
  if (!saw_solid) throw ParseError("missing 'solid' header", 1, ParseError::Unit::kLine);
  if (corner != -1) throw ParseError("unterminated facet loop", 0, ParseError::Unit::kLine);
  if (triangles.empty()) throw ParseError("empty mesh", 1, ParseError::Unit::kLine);
  return TriangleMesh(pool.take(), std::move(triangles), policy);
}

TriangleMesh parse_obj(std::span<const std::uint8_t> bytes, DegeneratePolicy policy) {
  std::vector<Vec3> vertices;
  std::vector<Triangle> triangles;
  for_each_line(bytes, [&](std::string_view line, std::uint64_t n) {
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    const auto tokens = split_ws(line);
    if (tokens.empty()) return;
    if (tokens[0] == "v") {
      if (tokens.size() < 4) throw ParseError("vertex needs 3 coordinates", n, ParseError::Unit::kLine);
      const Vec3 p{parse_double(tokens[1], n), parse_double(tokens[2], n), parse_double(tokens[3], n)};
      check_finite(p, n, ParseError::Unit::kLine);
      vertices.push_back(p);
    } else if (tokens[0] == "f") {
      if (tokens.size() < 4) throw ParseError("face needs at least 3 vertices", n, ParseError::Unit::kLine);
      std::vector<std::uint32_t> polygon;
      for (std::size_t i = 1; i < tokens.size(); ++i) {
        // v, v/vt, v//vn or v/vt/vn; only the position index matters.
        const auto slash = tokens[i].find('/');
        const long long raw = parse_int(tokens[i].substr(0, slash), n);
        const long long count = static_cast<long long>(vertices.size());
        const long long idx = raw > 0 ? raw - 1 : count + raw;
        if (raw == 0 || idx < 0 || idx >= count) {
          throw ParseError("face index " + std::to_string(raw) + " out of range", n, ParseError::Unit::kLine);
        }
        polygon.push_back(static_cast<std::uint32_t>(idx));
      }
      for (std::size_t i = 1; i + 1 < polygon.size(); ++i) {
        triangles.push_back({polygon[0], polygon[i], polygon[i + 1]});
      }
    }
    // vn, vt, g, o, s, usemtl, mtllib: ignored
  });
  if (triangles.empty()) throw ParseError("empty mesh", 1, ParseError::Unit::kLine);
  return TriangleMesh(std::move(vertices), std::move(triangles), policy);
}

TriangleMesh load_mesh(const std::filesystem::path& path, std::optional<MeshFormat> format,
                       DegeneratePolicy policy) {
  const auto bytes = io::read_file(path);
  switch (format.value_or(detect_format(path, bytes))) {
    case MeshFormat::kStlBinary:
      return parse_stl_binary(bytes, policy);
    case MeshFormat::kStlAscii:
      return parse_stl_ascii(bytes, policy);
    case MeshFormat::kObj:
      return parse_obj(bytes, policy);
  }
  throw Error("unknown mesh format");
}

void write_mesh(const TriangleMesh& mesh, const std::filesystem::path& path, MeshFormat format) {
  if (format == MeshFormat::kStlBinary) {
    io::Writer out;
    std::string header = "binary STL";
    header.resize(kStlHeaderBytes, ' ');
    out.put_bytes(header);
    out.put(stl_triangle_count_field(mesh.triangle_count()));
    for (std::size_t t = 0; t < mesh.triangle_count(); ++t) {
      const Vec3& n = mesh.normals()[t];
      for (double c : {n.x, n.y, n.z}) out.put(static_cast<float>(c));
      for (const Vec3& p : mesh.corners(t)) {
        for (double c : {p.x, p.y, p.z}) out.put(static_cast<float>(c));
      }
      out.put(std::uint16_t{0});
    }
    io::write_file(path, out.bytes());
    return;
  }

  std::ostringstream text;
  text << std::setprecision(17);
  if (format == MeshFormat::kStlAscii) {
    text << "solid mesh\n";
    for (std::size_t t = 0; t < mesh.triangle_count(); ++t) {
      const Vec3& n = mesh.normals()[t];
      text << "facet normal " << n.x << ' ' << n.y << ' ' << n.z << "\n outer loop\n";
      for (const Vec3& p : mesh.corners(t)) text << "  vertex " << p.x << ' ' << p.y << ' ' << p.z << '\n';
      text << " endloop\nendfacet\n";
    }
    text << "endsolid mesh\n";
  } else {
    for (const auto& p : mesh.vertices()) text << "v " << p.x << ' ' << p.y << ' ' << p.z << '\n';
    for (const auto& t : mesh.triangles()) text << "f " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << '\n';
  }
  const std::string s = text.str();
  io::write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(s.data()), s.size()));
}

}  // namespace aerosdf::mesh

#include "aerosdf/sdf.hpp"

#include <bit>
#include <cmath>
#include <limits>
#include <numbers>

#include "aerosdf/common/binary_io.hpp"
#include "aerosdf/common/error.hpp"

namespace aerosdf::sdf {

namespace {

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

double unit_uniform(std::uint64_t& state) { return static_cast<double>(splitmix64(state) >> 11) * 0x1.0p-53; }

Vec3 random_direction(std::uint64_t& state) {
  const double z = 2.0 * unit_uniform(state) - 1.0;
  const double phi = 2.0 * std::numbers::pi * unit_uniform(state);
  const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
  return {r * std::cos(phi), r * std::sin(phi), z};
}

constexpr int kMaxRecasts = 16;

}  // namespace

void GridSpec::validate() const {
  for (int a = 0; a < 3; ++a) {
    if (dims[a] < 1) throw Error("grid dims must be >= 1");
    if (!(spacing[a] > 0.0) || !std::isfinite(spacing[a])) throw Error("grid spacing must be positive and finite");
  }
  if (!is_finite(origin)) throw Error("grid origin must be finite");
}

Aabb GridSpec::center_bounds() const {
  Aabb box;
  box.expand(cell_center(0, 0, 0));
  box.expand(cell_center(dims[0] - 1, dims[1] - 1, dims[2] - 1));
  return box;
}

std::uint64_t hash_point(const Vec3& p) {
  std::uint64_t state = 0x5df3a0c4e1b27a91ULL;
  for (double c : {p.x, p.y, p.z}) {
    state ^= std::bit_cast<std::uint64_t>(c + 0.0);  // fold -0.0 into +0.0
    splitmix64(state);
  }
  return state;
}

std::uint64_t hash_cell(std::size_t i, std::size_t j, std::size_t k) {
  std::uint64_t state = 0x2545f4914f6cdd1dULL;
  for (std::size_t c : {i, j, k}) {
    state ^= static_cast<std::uint64_t>(c);
    splitmix64(state);
  }
  return state;
}

SignVote vote_sign(const DistanceIndex& index, const Vec3& point, int n_rays, std::uint64_t seed) {
  if (n_rays < 1 || n_rays % 2 == 0) throw Error("n_rays must be odd and >= 1");
  SignVote vote;
  vote.rays = n_rays;
  std::uint64_t state = seed;
  for (int r = 0; r < n_rays; ++r) {
    int crossings = 0;
    for (int attempt = 0; attempt < kMaxRecasts; ++attempt) {
      bool ambiguous = false;
      crossings = index.ray_crossings(point, random_direction(state), ambiguous);
      if (!ambiguous) break;
    }
    if (crossings % 2 == 1) ++vote.inside_votes;
  }
  vote.sign = 2 * vote.inside_votes > n_rays ? -1 : 1;
  return vote;
}

int estimate_sign(const DistanceIndex& index, const Vec3& point, int n_rays) {
  return vote_sign(index, point, n_rays, hash_point(point)).sign;
}

SdfVolume generate_sdf(const mesh::TriangleMesh& mesh, const GridSpec& grid, int n_rays) {
  grid.validate();
  if (n_rays < 1 || n_rays % 2 == 0) throw Error("n_rays must be odd and >= 1");
  const DistanceIndex index(mesh);
  SdfVolume volume{grid, 1, std::vector<double>(grid.cell_count())};
  const auto nx = static_cast<std::int64_t>(grid.dims[0]);
  const auto ny = static_cast<std::int64_t>(grid.dims[1]);
  const auto nz = static_cast<std::int64_t>(grid.dims[2]);
#pragma omp parallel for collapse(2) schedule(dynamic)
  for (std::int64_t k = 0; k < nz; ++k) {
    for (std::int64_t j = 0; j < ny; ++j) {
      for (std::int64_t i = 0; i < nx; ++i) {
        const Vec3 p = grid.cell_center(i, j, k);
        const double d = index.unsigned_distance(p);
        const int s = vote_sign(index, p, n_rays, hash_cell(i, j, k)).sign;
        volume.values[grid.index(i, j, k)] = s * d;
      }
    }
  }
  return volume;
}

SdfVolume normalize_sdf(const SdfVolume& volume, double clamp, double scale) {
  if (!(clamp > 0.0)) throw Error("clamp must be positive");
  if (!(scale > 0.0) || !std::isfinite(scale)) throw Error("scale must be positive and finite");
  SdfVolume out = volume;
  for (auto& v : out.values) v = std::max(-clamp, std::min(clamp, v)) / scale;
  return out;
}

Normalization default_normalization(const GridSpec& grid) {
  const double h = std::max({grid.spacing.x, grid.spacing.y, grid.spacing.z});
  return {8.0 * h, 8.0 * h};
}

std::vector<std::uint8_t> encode_volume(const Volume& volume) {
  volume.grid.validate();
  const std::size_t count = volume.grid.cell_count() * volume.components;
  if (volume.components < 1 || volume.values.size() != count) {
    throw Error("volume holds " + std::to_string(volume.values.size()) + " values, expected " + std::to_string(count));
  }
  io::Writer out;
  out.put_bytes("SDF3");
  out.put(kVolumeVersion);
  for (auto d : volume.grid.dims) out.put(d);
  out.put(volume.components);
  for (int a = 0; a < 3; ++a) out.put(volume.grid.origin[a]);
  for (int a = 0; a < 3; ++a) out.put(volume.grid.spacing[a]);
  std::vector<float> payload(volume.values.begin(), volume.values.end());
  out.put_array(std::span<const float>(payload));
  return out.take();
}

Volume decode_volume(std::span<const std::uint8_t> bytes) {
  io::Reader in(bytes);
  const std::string magic = in.get_bytes(4, "magic");
  if (magic != "SDF3") throw ParseError("bad magic, expected 'SDF3'", 0, ParseError::Unit::kByte);
  const auto version = in.get<std::uint32_t>("version");
  if (version != kVolumeVersion) {
    throw ParseError("unsupported SDF3 version " + std::to_string(version), 4, ParseError::Unit::kByte);
  }
  Volume v;
  for (auto& d : v.grid.dims) d = in.get<std::uint32_t>("dims");
  v.components = in.get<std::uint32_t>("component count");
  for (int a = 0; a < 3; ++a) v.grid.origin[a] = in.get<double>("origin");
  for (int a = 0; a < 3; ++a) v.grid.spacing[a] = in.get<double>("spacing");
  if (v.components == 0) throw ParseError("component count must be >= 1", 20, ParseError::Unit::kByte);

  unsigned __int128 count = v.components;
  for (auto d : v.grid.dims) count *= d;
  if (count == 0 || count > (std::numeric_limits<std::size_t>::max() / sizeof(float))) {
    throw ParseError("volume dims overflow", 8, ParseError::Unit::kByte);
  }
  const auto n = static_cast<std::size_t>(count);
  if (in.remaining() < n * sizeof(float)) {
    throw ParseError("truncated payload: header declares " + std::to_string(n) + " values but only " +
                         std::to_string(in.remaining() / sizeof(float)) + " present",
                     bytes.size(), ParseError::Unit::kByte);
  }
  if (in.remaining() > n * sizeof(float)) {
    throw ParseError("payload longer than header dims declare", in.offset() + n * sizeof(float),
                     ParseError::Unit::kByte);
  }
  v.grid.validate();
  std::vector<float> payload(n);
  in.get_array(std::span<float>(payload), "values");
  v.values.assign(payload.begin(), payload.end());
  return v;
}

void write_volume(const Volume& volume, const std::filesystem::path& path) {
  io::write_file(path, encode_volume(volume));
}

Volume read_volume(const std::filesystem::path& path) { return decode_volume(io::read_file(path)); }

}  // namespace aerosdf::sdf

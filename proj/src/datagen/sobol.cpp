#include <bit>
#include <cmath>

#include "aerosdf/common/error.hpp"
#include "aerosdf/datagen.hpp"

namespace aerosdf::datagen {

namespace {

constexpr int kBits = 32;

struct Direction {
  std::uint32_t poly;
  std::vector<std::uint32_t> init;
};

// Joe-Kuo "new-joe-kuo-6.21201" primitive polynomials (leading and trailing
// coefficients included) and initial direction numbers. The first row is the
// van der Corput dimension.
const std::vector<Direction>& directions() {
  static const std::vector<Direction> table{
      {1, {1}},
      {3, {1}},
      {7, {1, 3}},
      {11, {1, 3, 1}},
      {13, {1, 1, 1}},
      {19, {1, 1, 3, 3}},
      {25, {1, 3, 5, 13}},
      {37, {1, 1, 5, 5, 17}},
      {41, {1, 1, 5, 5, 5}},
      {47, {1, 1, 7, 11, 19}},
      {55, {1, 1, 5, 1, 1}},
      {59, {1, 1, 1, 3, 11}},
      {61, {1, 3, 5, 5, 31}},
      {67, {1, 3, 3, 9, 7, 49}},
      {91, {1, 1, 1, 15, 21, 21}},
      {97, {1, 3, 1, 13, 27, 49}},
      {103, {1, 1, 1, 15, 7, 5}},
      {109, {1, 3, 1, 15, 13, 25}},
      {115, {1, 1, 5, 5, 19, 61}},
      {131, {1, 3, 7, 11, 23, 15, 103}},
      {137, {1, 3, 7, 13, 13, 15, 69}},
  };
  return table;
}

std::vector<std::uint32_t> direction_numbers(std::size_t dim) {
  std::vector<std::uint32_t> v(kBits);
  if (dim == 0) {
    for (int k = 0; k < kBits; ++k) v[k] = 1u << (kBits - 1 - k);
    return v;
  }
  const Direction& d = directions()[dim];
  const int s = std::bit_width(d.poly) - 1;
  const std::uint32_t a = (d.poly >> 1) & ((1u << (s - 1)) - 1);
  for (int k = 0; k < s; ++k) v[k] = d.init[k] << (kBits - 1 - k);
  for (int k = s; k < kBits; ++k) {
    std::uint32_t x = v[k - s] ^ (v[k - s] >> s);
    for (int i = 1; i < s; ++i) {
      if ((a >> (s - 1 - i)) & 1u) x ^= v[k - i];
    }
    v[k] = x;
  }
  return v;
}

}  // namespace

std::vector<std::vector<double>> sobol_sample(std::size_t dimension, std::size_t n, std::size_t skip) {
  if (dimension < 1 || dimension > kSobolMaxDimension) {
    throw Error("Sobol dimension must be in [1, " + std::to_string(kSobolMaxDimension) + "], got " +
                std::to_string(dimension));
  }
  if (skip + n > (std::size_t{1} << kBits)) throw Error("Sobol index range exceeds 2^32 points");

  std::vector<std::vector<std::uint32_t>> v(dimension);
  for (std::size_t d = 0; d < dimension; ++d) v[d] = direction_numbers(d);

  std::vector<std::uint32_t> x(dimension, 0);
  const std::uint64_t gray = skip ^ (skip >> 1);
  for (int k = 0; k < kBits; ++k) {
    if ((gray >> k) & 1u) {
      for (std::size_t d = 0; d < dimension; ++d) x[d] ^= v[d][k];
    }
  }

  std::vector<std::vector<double>> points(n, std::vector<double>(dimension));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t d = 0; d < dimension; ++d) points[i][d] = std::ldexp(static_cast<double>(x[d]), -kBits);
    if (i + 1 == n) break;
    const std::uint64_t index = skip + i;
    const int c = std::countr_one(index);
    for (std::size_t d = 0; d < dimension; ++d) x[d] ^= v[d][c];
  }
  return points;
}

double l2_star_discrepancy(const std::vector<std::vector<double>>& points) {
  if (points.empty()) throw Error("discrepancy of an empty point set");
  const std::size_t n = points.size();
  const std::size_t d = points[0].size();
  for (const auto& p : points) {
    if (p.size() != d) throw Error("points differ in dimension");
    for (double c : p) {
      if (!(c >= 0.0 && c <= 1.0)) throw Error("point coordinate outside [0, 1]");
    }
  }
  double single = 0.0;
  for (const auto& p : points) {
    double prod = 1.0;
    for (double c : p) prod *= 1.0 - c * c;
    single += prod;
  }
  double pairs = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double prod = 1.0;
      for (std::size_t k = 0; k < d; ++k) prod *= 1.0 - std::max(points[i][k], points[j][k]);
      pairs += prod;
    }
  }
  const double nd = static_cast<double>(n);
  const double dd = static_cast<double>(d);
  const double d2 = std::pow(3.0, -dd) - std::pow(2.0, 1.0 - dd) / nd * single + pairs / (nd * nd);
  return std::sqrt(std::max(0.0, d2));
}

}  // namespace aerosdf::datagen

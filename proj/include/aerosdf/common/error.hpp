#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace aerosdf {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file. `location` is a byte offset for binary formats and a
/// 1-based line number for text formats.
class ParseError : public Error {
 public:
  enum class Unit { kByte, kLine };

  ParseError(const std::string& what, std::uint64_t location, Unit unit)
      : Error(what + (unit == Unit::kByte ? " (at byte " : " (at line ") + std::to_string(location) +
              ")"),
        location_(location),
        unit_(unit) {}

  std::uint64_t location() const { return location_; }
  Unit unit() const { return unit_; }

 private:
  std::uint64_t location_;
  Unit unit_;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace aerosdf

#pragma once

#include <string>
#include <vector>

#include "aerosdf/autodiff/gradcheck.hpp"

namespace aerosdf::ad {

enum class CheckKind { kPrimitive, kComposition };

inline constexpr double kPrimitiveTolerance = 1e-4;
inline constexpr double kCompositionTolerance = 1e-3;

struct SuiteRow {
  std::string name;
  CheckKind kind = CheckKind::kPrimitive;
  double tolerance = 0.0;
  GradCheckResult result;
  double seconds = 0.0;

  bool passed() const { return result.max_rel_error < tolerance; }
};

/// Central-difference checks in 64-bit of every autodiff primitive, a few
/// compositions and the tiny U-Net (16 x 8 x 8, depth 2, with field decoders).
std::vector<SuiteRow> run_gradient_suite(bool include_model = true);

/// One row per check: name, kind, max error, tolerance, PASS/FAIL.
std::string suite_table(const std::vector<SuiteRow>& rows);

}  // namespace aerosdf::ad

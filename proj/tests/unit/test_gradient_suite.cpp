#include <algorithm>

#include "aerosdf/gradient_suite.hpp"
#include "doctest.h"

using namespace aerosdf;

TEST_CASE("every primitive and composition of the suite passes its tolerance") {
  const auto rows = ad::run_gradient_suite(false);
  CHECK(rows.size() >= 25);
  for (const auto& r : rows) {
    INFO(r.name << ": " << r.result.worst);
    CHECK(r.result.entries > 0);
    CHECK(r.passed());
    CHECK(r.tolerance == (r.kind == ad::CheckKind::kPrimitive ? 1e-4 : 1e-3));
  }
  const auto table = ad::suite_table(rows);
  CHECK(table.find("conv3d_transpose") != std::string::npos);
  CHECK(table.find("FAIL") == std::string::npos);
  CHECK(std::count(table.begin(), table.end(), '\n') == static_cast<long>(rows.size() + 1));
}

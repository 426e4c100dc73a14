#pragma once

#include <iostream>
#include <string_view>

namespace aerosdf::log {

enum class Level { kQuiet = 0, kWarning = 1, kInfo = 2 };

Level level();
void set_level(Level level);

// Progress and diagnostics go to stderr; data never does.
inline void warn(std::string_view message) {
  if (level() >= Level::kWarning) std::cerr << "warning: " << message << '\n';
}
inline void info(std::string_view message) {
  if (level() >= Level::kInfo) std::cerr << message << '\n';
}

}  // namespace aerosdf::log

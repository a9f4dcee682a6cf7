#pragma once

#include <iostream>
#include <string>

namespace fdmo {

inline bool& log_enabled() {
  static bool enabled = true;
  return enabled;
}

inline void log_warn(const std::string& msg) {
  if (log_enabled()) std::cerr << "[fdmo] warning: " << msg << "\n";
}

inline void log_info(const std::string& msg) {
  if (log_enabled()) std::cerr << "[fdmo] " << msg << "\n";
}

}  // namespace fdmo

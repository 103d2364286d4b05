#pragma once

#include <cstdio>
#include <string>

namespace nomatail {

/// Shortest round-trippable decimal form; %.17g keeps doubles exact.
inline std::string csv_num(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline std::string csv_int(long long x) { return std::to_string(x); }

}  // namespace nomatail

#pragma once

// Shared number/string formatting helpers. All floating-point output in the
// project goes through these so serialized documents are byte-stable.

#include <cstdio>
#include <string>

namespace taomdv {

// Fixed 6-significant-digit formatting used by reports and tables.
inline std::string fmt6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

// Shortest exact round-trip formatting used by the scenario serializer.
inline std::string fmt_exact(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  // prefer a shorter form when it round-trips exactly
  for (int prec = 1; prec < 17; ++prec) {
    char shorter[64];
    std::snprintf(shorter, sizeof(shorter), "%.*g", prec, v);
    double back = 0.0;
    std::sscanf(shorter, "%lf", &back);
    if (back == v) return shorter;
  }
  return buf;
}

// Trace timestamp formatting.
inline std::string fmt9(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

// Round a double to 6 significant digits (value-level, for report payloads).
inline double round6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  double back = 0.0;
  std::sscanf(buf, "%lf", &back);
  return back;
}

}  // namespace taomdv

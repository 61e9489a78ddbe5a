#pragma once

// Shared error types and small utilities used across the toolkit.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <vector>

namespace fractdim {

inline constexpr const char* kVersion = "0.1.0";

/// Invalid mathematical input (bad IFS, bad kernel parameters, ...).
struct ValidationError : std::runtime_error {
  explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Malformed or inconsistent experiment configuration.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// A resource cap (leaf count, point budget, matrix size) was exceeded.
struct ResourceCapError : std::runtime_error {
  explicit ResourceCapError(const std::string& msg) : std::runtime_error(msg) {}
};

/// A numeric routine failed beyond recovery (factorization, overflow).
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Round-trippable float formatting: 17 significant digits.
inline std::string format_float17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

/// Floor division for possibly negative numerators (cell indexing).
inline std::int64_t floor_div(std::int64_t a, std::int64_t b) {
  std::int64_t q = a / b;
  if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
  return q;
}

/// log(sum exp(v_i)) with the usual max shift; -inf for an empty list.
inline double log_sum_exp(const std::vector<double>& v) {
  if (v.empty()) return -std::numeric_limits<double>::infinity();
  double m = v[0];
  for (double x : v)
    if (x > m) m = x;
  if (!std::isfinite(m)) return m;
  double acc = 0.0;
  for (double x : v) acc += std::exp(x - m);
  return m + std::log(acc);
}

}  // namespace fractdim

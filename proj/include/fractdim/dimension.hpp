#pragma once

// Dimension estimation from families of log-capacity / log-cover-sum curves.
// The estimators here are agnostic to where the curves come from: a builder
// callback maps a candidate exponent s to the curve values over a fixed grid
// of scales, and the crossing of the windowed regression slope is located by
// bisection.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "fractdim/common.hpp"

namespace fractdim {

// Grid of scales r, sorted strictly decreasing (coarse to fine), all in (0,1).
struct RGrid {
  std::vector<double> r;

  static RGrid geometric(double r_max, double r_min, int count) {
    if (!(0.0 < r_min && r_min < r_max && r_max < 1.0))
      throw ValidationError("scale grid requires 0 < r_min < r_max < 1");
    if (count < 2) throw ValidationError("scale grid needs at least 2 scales");
    RGrid g;
    const double lmax = std::log(r_max), lmin = std::log(r_min);
    for (int i = 0; i < count; ++i) {
      const double t = static_cast<double>(i) / (count - 1);
      g.r.push_back(std::exp(lmax + t * (lmin - lmax)));
    }
    g.r.front() = r_max;
    g.r.back() = r_min;
    return g;
  }

  // Dyadic ladder r = 2^-k for k in [k_min, k_max].
  static RGrid dyadic(int k_min, int k_max) {
    if (k_min < 1 || k_max < k_min)
      throw ValidationError("dyadic grid requires 1 <= k_min <= k_max");
    RGrid g;
    for (int k = k_min; k <= k_max; ++k) g.r.push_back(std::pow(2.0, -k));
    return g;
  }

  void validate() const {
    if (r.size() < 2) throw ValidationError("scale grid needs >= 2 scales");
    for (std::size_t i = 0; i < r.size(); ++i) {
      if (!(r[i] > 0.0 && r[i] < 1.0))
        throw ValidationError("scales must lie in (0, 1)");
      if (i > 0 && !(r[i] < r[i - 1]))
        throw ValidationError("scales must be strictly decreasing");
    }
  }
};

// Whether the windowed slope statistic takes the minimum (lower estimate,
// conservative for lower bounds) or maximum (upper estimate) over windows.
enum class SlopeMode { lower, upper };

inline const char* slope_mode_name(SlopeMode m) {
  return m == SlopeMode::lower ? "lower" : "upper";
}

struct DimensionConfig {
  SlopeMode mode = SlopeMode::lower;
  double tol_s = 1e-3;   // bisection width on the exponent
  int window = 4;        // regression window length (in grid points)
  double bracket_lo = 0.0;
  double bracket_hi = 1.0;
};

struct DimensionEstimate {
  double s_star = 0.0;
  SlopeMode mode = SlopeMode::lower;
  bool bracketed = false;        // true if the slope changed sign inside
  std::string flag;              // empty, or which endpoint was hit
  int iterations = 0;            // bisection steps taken
  double g_at_s_star = 0.0;      // slope statistic at the returned exponent
  std::vector<double> r_grid;
  std::vector<double> curve_at_s_star;
  std::vector<double> window_slopes;  // windows over the fine half, at s_star
};

namespace detail {

inline double ols_slope(const std::vector<double>& x,
                        const std::vector<double>& y, std::size_t begin,
                        std::size_t len) {
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < len; ++i) {
    mx += x[begin + i];
    my += y[begin + i];
  }
  mx /= len;
  my /= len;
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < len; ++i) {
    const double dx = x[begin + i] - mx;
    sxy += dx * (y[begin + i] - my);
    sxx += dx * dx;
  }
  if (!(sxx > 0.0)) throw ValidationError("degenerate regression window");
  return sxy / sxx;
}

}  // namespace detail

// Windowed regression slopes of the curve against -log r, restricted to the
// finest half of the grid. Returns one slope per window position.
inline std::vector<double> window_slopes(const RGrid& grid,
                                         const std::vector<double>& curve,
                                         int window) {
  grid.validate();
  const std::size_t n = grid.r.size();
  if (curve.size() != n)
    throw ValidationError("curve length must match the scale grid");
  if (window < 2) throw ValidationError("regression window must be >= 2");
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = -std::log(grid.r[i]);
  const std::size_t half = (n + 1) / 2;       // size of the fine half
  const std::size_t start = n - half;
  const std::size_t w = std::min<std::size_t>(window, half);
  std::vector<double> slopes;
  for (std::size_t b = start; b + w <= n; ++b)
    slopes.push_back(detail::ols_slope(x, curve, b, w));
  return slopes;
}

inline double slope_statistic(const std::vector<double>& slopes,
                              SlopeMode mode) {
  if (slopes.empty()) throw ValidationError("no regression windows");
  double g = slopes.front();
  for (double v : slopes)
    g = mode == SlopeMode::lower ? std::min(g, v) : std::max(g, v);
  return g;
}

// Locate the exponent where the slope statistic of the curve family crosses
// zero. `builder(s)` must return the curve over `grid` (same order). The
// statistic is decreasing in s for the curve families used here, so plain
// bisection applies; endpoints that never change sign are flagged.
inline DimensionEstimate dimension_from_curves(
    const std::function<std::vector<double>(double)>& builder,
    const RGrid& grid, const DimensionConfig& cfg) {
  grid.validate();
  if (grid.r.size() < 6)
    throw ValidationError("dimension estimation needs >= 6 scales");
  if (!(cfg.bracket_lo < cfg.bracket_hi))
    throw ValidationError("empty exponent bracket");
  if (!(cfg.tol_s > 0.0)) throw ValidationError("tol_s must be positive");

  const auto eval = [&](double s) {
    return slope_statistic(window_slopes(grid, builder(s), cfg.window),
                           cfg.mode);
  };

  DimensionEstimate est;
  est.mode = cfg.mode;
  est.r_grid = grid.r;

  double lo = cfg.bracket_lo, hi = cfg.bracket_hi;
  const double g_lo = eval(lo);
  if (g_lo <= 0.0) {
    est.s_star = lo;
    est.flag = "no_sign_change_at_lower";
  } else {
    const double g_hi = eval(hi);
    if (g_hi >= 0.0) {
      est.s_star = hi;
      est.flag = "no_sign_change_at_upper";
    } else {
      est.bracketed = true;
      while (hi - lo > cfg.tol_s) {
        const double mid = 0.5 * (lo + hi);
        if (eval(mid) > 0.0)
          lo = mid;
        else
          hi = mid;
        ++est.iterations;
      }
      est.s_star = 0.5 * (lo + hi);
    }
  }
  est.curve_at_s_star = builder(est.s_star);
  est.window_slopes = window_slopes(grid, est.curve_at_s_star, cfg.window);
  est.g_at_s_star = slope_statistic(est.window_slopes, cfg.mode);
  return est;
}

}  // namespace fractdim

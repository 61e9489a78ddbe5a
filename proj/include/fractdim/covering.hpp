#pragma once

// Constrained-diameter cover sums for point clouds: minimize sum(delta_i^s)
// over covers whose cell diameters lie in [phi(r), r]. Covers are drawn from
// a dyadic ladder of grid-aligned cells, nested exactly by integer index
// arithmetic, so the minimum over all ladder covers is computed by one exact
// bottom-up pass over the occupied-cell forest.
//
// The dual lower bound comes from the truncated kernel: any probability
// vector w on the cloud certifies min-cover-sum >= 1 / gamma(w), where
// gamma(w) is the largest w-potential over the cloud.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <vector>

#include "fractdim/capacity.hpp"
#include "fractdim/cloud.hpp"
#include "fractdim/common.hpp"
#include "fractdim/dimension.hpp"
#include "fractdim/kernels.hpp"

namespace fractdim {

struct CoveringOptions {
  long max_total_cells = 20000000;  // across all ladder levels
};

// Number of grid-aligned cells of diameter `delta` (cube side delta/sqrt(d))
// needed to cover the cloud.
inline long box_count(const PointCloud& cloud, double delta) {
  cloud.validate();
  if (!(delta > 0.0)) throw ValidationError("box size must be positive");
  const int d = cloud.dim();
  const double side = delta / std::sqrt(static_cast<double>(d));
  std::set<std::vector<long>> cells;
  std::vector<long> idx(d);
  for (long i = 0; i < cloud.size(); ++i) {
    for (int j = 0; j < d; ++j) {
      const double q = std::floor(cloud.pts(i, j) / side);
      if (!(std::abs(q) < 9.0e15))
        throw ValidationError("coordinates too large for this box size");
      idx[j] = static_cast<long>(q);
    }
    cells.insert(idx);
  }
  return static_cast<long>(cells.size());
}

struct CoverScale {
  double delta = 0.0;
  long count = 0;
};

struct CoverSumResult {
  double value = 0.0;
  double log_value = 0.0;
  double single_scale_floor = 0.0;       // best all-one-scale cover sum
  std::vector<CoverScale> histogram;     // chosen cells per scale (count > 0)
  std::vector<double> deltas;            // full ladder, ascending
  std::vector<long> level_cell_counts;   // occupied cells per ladder level
};

namespace detail {

// Occupied-cell forest over the dyadic ladder. Cells are indexed per level;
// nesting is exact because the finest integer indices are divided (floor) by
// successive powers of two.
struct CoverLadder {
  std::vector<double> deltas;                       // ascending
  std::vector<long> level_cells;                    // occupied per level
  std::vector<std::vector<std::vector<long>>> kids; // kids[j][cell] -> level j-1
};

inline CoverLadder build_cover_ladder(const PointCloud& cloud, double r,
                                      const AdmissibleFn& phi,
                                      const CoveringOptions& opts) {
  cloud.validate();
  if (!(r > 0.0 && r < 1.0)) throw ValidationError("scale r must be in (0,1)");
  const int d = cloud.dim();
  const double phi_r = phi(r);
  const double side0 = phi_r / std::sqrt(static_cast<double>(d));

  CoverLadder ladder;
  for (double delta = phi_r; delta <= r * (1 + 1e-12); delta *= 2.0)
    ladder.deltas.push_back(delta);

  // Finest-level integer indices, deduplicated in lexicographic order.
  std::map<std::vector<long>, long> finest;
  std::vector<long> idx(d);
  for (long i = 0; i < cloud.size(); ++i) {
    for (int j = 0; j < d; ++j) {
      const double q = std::floor(cloud.pts(i, j) / side0);
      if (!(std::abs(q) < 9.0e15))
        throw ValidationError("coordinates too large for this scale grid");
      idx[j] = static_cast<long>(q);
    }
    finest.emplace(idx, 0);
  }
  std::vector<std::vector<long>> tuples;
  for (auto& kv : finest) {
    kv.second = static_cast<long>(tuples.size());
    tuples.push_back(kv.first);
  }

  long total_cells = static_cast<long>(tuples.size());
  ladder.level_cells.push_back(total_cells);
  ladder.kids.emplace_back();  // finest level has no children lists

  for (std::size_t lvl = 1; lvl < ladder.deltas.size(); ++lvl) {
    std::map<std::vector<long>, long> parents;
    std::vector<std::vector<long>> parent_tuples;
    std::vector<std::vector<long>> kid_lists;
    std::vector<long> key(d);
    for (std::size_t c = 0; c < tuples.size(); ++c) {
      for (int j = 0; j < d; ++j) key[j] = floor_div(tuples[c][j], 2);
      auto [it, inserted] = parents.emplace(key, parent_tuples.size());
      if (inserted) {
        parent_tuples.push_back(key);
        kid_lists.emplace_back();
      }
      kid_lists[it->second].push_back(static_cast<long>(c));
    }
    tuples = std::move(parent_tuples);
    total_cells += static_cast<long>(tuples.size());
    if (total_cells > opts.max_total_cells)
      throw ResourceCapError("cover ladder exceeds the cell budget");
    ladder.level_cells.push_back(static_cast<long>(tuples.size()));
    ladder.kids.push_back(std::move(kid_lists));
  }
  return ladder;
}

inline CoverSumResult cover_sum_on_ladder(const CoverLadder& ladder,
                                          double s) {
  if (!(s >= 0.0)) throw ValidationError("exponent s must be non-negative");
  const std::size_t levels = ladder.deltas.size();
  CoverSumResult res;
  res.deltas = ladder.deltas;
  res.level_cell_counts = ladder.level_cells;

  // Bottom-up: a cell either pays its own delta^s or delegates to children.
  std::vector<std::vector<double>> cost(levels);
  std::vector<std::vector<char>> self(levels);
  const double cost0 = std::pow(ladder.deltas[0], s);
  cost[0].assign(ladder.level_cells[0], cost0);
  self[0].assign(ladder.level_cells[0], 1);
  for (std::size_t lvl = 1; lvl < levels; ++lvl) {
    const double own = std::pow(ladder.deltas[lvl], s);
    const long ncell = ladder.level_cells[lvl];
    cost[lvl].resize(ncell);
    self[lvl].resize(ncell);
    for (long c = 0; c < ncell; ++c) {
      double sum = 0.0;
      for (long kid : ladder.kids[lvl][c]) sum += cost[lvl - 1][kid];
      const bool take_self = own <= sum;
      cost[lvl][c] = take_self ? own : sum;
      self[lvl][c] = take_self ? 1 : 0;
    }
  }

  const std::size_t top = levels - 1;
  res.value = 0.0;
  for (double v : cost[top]) res.value += v;
  res.log_value = std::log(res.value);

  // Descend to count the chosen cells per scale.
  std::vector<long> chosen(levels, 0);
  std::vector<std::pair<std::size_t, long>> stack;
  for (long c = 0; c < ladder.level_cells[top]; ++c) stack.push_back({top, c});
  while (!stack.empty()) {
    const auto [lvl, c] = stack.back();
    stack.pop_back();
    if (self[lvl][c]) {
      ++chosen[lvl];
      continue;
    }
    for (long kid : ladder.kids[lvl][c]) stack.push_back({lvl - 1, kid});
  }
  for (std::size_t lvl = 0; lvl < levels; ++lvl)
    if (chosen[lvl] > 0)
      res.histogram.push_back({ladder.deltas[lvl], chosen[lvl]});

  res.single_scale_floor = std::numeric_limits<double>::infinity();
  for (std::size_t lvl = 0; lvl < levels; ++lvl)
    res.single_scale_floor =
        std::min(res.single_scale_floor,
                 ladder.level_cells[lvl] * std::pow(ladder.deltas[lvl], s));
  return res;
}

}  // namespace detail

inline CoverSumResult cover_sum(const PointCloud& cloud, double r, double s,
                                const AdmissibleFn& phi,
                                const CoveringOptions& opts = {}) {
  if (!(s >= 0.0)) throw ValidationError("exponent s must be non-negative");
  return detail::cover_sum_on_ladder(
      detail::build_cover_ladder(cloud, r, phi, opts), s);
}

// Re-price a fixed cover (its per-scale histogram) at another exponent.
inline double price_cover(const std::vector<CoverScale>& histogram, double s) {
  double total = 0.0;
  for (const auto& h : histogram) total += h.count * std::pow(h.delta, s);
  return total;
}

struct CoverCertificate {
  double lower = 0.0;   // certified lower bound on the minimal cover sum
  double gamma = 0.0;   // largest potential of the certifying weights
};

// Truncated-kernel potential bound: for any probability weights w on the
// cloud, every admissible cover satisfies sum(delta_i^s) >= 1 / gamma where
// gamma = max_i sum_j w_j psi(|x_i - x_j|).
inline CoverCertificate cover_lower_certificate(const PointCloud& cloud,
                                                const ProbabilityVector& w,
                                                double r, double s,
                                                const AdmissibleFn& phi) {
  cloud.validate();
  const long n = cloud.size();
  if (w.w.size() != n)
    throw ValidationError("weight vector size must match the cloud");
  double gamma = 0.0;
  for (long i = 0; i < n; ++i) {
    double pot = 0.0;
    for (long j = 0; j < n; ++j) {
      const double dist = (cloud.pts.row(i) - cloud.pts.row(j)).norm();
      pot += w.w(j) * ker_psi(dist, r, s, phi);
    }
    gamma = std::max(gamma, pot);
  }
  CoverCertificate cert;
  cert.gamma = gamma;
  cert.lower = 1.0 / gamma;
  return cert;
}

// ---------------------------------------------------------------------------
// Cover-sum dimension.

struct CoverRow {
  double r = 0.0;
  double s = 0.0;
  double value = 0.0;
  double log_value = 0.0;
  double single_scale_floor = 0.0;
  long levels = 0;
};

struct PhiDimensionResult {
  DimensionEstimate estimate;
  std::vector<CoverRow> rows;
};

// Dimension from cover sums: the zero of the windowed slope of log S_r(s)
// against -log r. Ladders are built once per scale and re-priced across the
// bisection in s. Scale grids must stay above the cloud's resolution tag.
inline PhiDimensionResult phi_dimension(const PointCloud& cloud,
                                        const AdmissibleFn& phi,
                                        const RGrid& grid,
                                        const DimensionConfig& dim_cfg,
                                        const CoveringOptions& opts = {}) {
  grid.validate();
  cloud.validate();
  if (cloud.resolution > 0.0 &&
      phi(grid.r.back()) < cloud.resolution * (1.0 - 1e-12))
    throw ValidationError(
        "scale grid dips below the cloud resolution; coarsen the grid");
  std::vector<detail::CoverLadder> ladders;
  for (double r : grid.r)
    ladders.push_back(detail::build_cover_ladder(cloud, r, phi, opts));
  PhiDimensionResult result;
  const auto builder = [&](double s) {
    std::vector<double> curve;
    for (std::size_t i = 0; i < grid.r.size(); ++i) {
      const auto sum = detail::cover_sum_on_ladder(ladders[i], s);
      CoverRow row;
      row.r = grid.r[i];
      row.s = s;
      row.value = sum.value;
      row.log_value = sum.log_value;
      row.single_scale_floor = sum.single_scale_floor;
      row.levels = static_cast<long>(sum.deltas.size());
      result.rows.push_back(row);
      curve.push_back(sum.log_value);
    }
    return curve;
  };
  result.estimate = dimension_from_curves(builder, grid, dim_cfg);
  return result;
}

// Finest scale r with phi(r) >= safety * resolution, then a geometric grid
// from r_max down to it.
inline RGrid suggest_cloud_rgrid(const PointCloud& cloud,
                                 const AdmissibleFn& phi, int count,
                                 double r_max, double safety = 4.0) {
  cloud.validate();
  if (!(safety >= 1.0)) throw ValidationError("safety factor must be >= 1");
  const double res = cloud.resolution > 0.0 ? cloud.resolution
                                            : estimate_resolution(cloud);
  const double target = std::log(res * safety);
  if (!(r_max > 0.0 && r_max < phi.domain_sup()))
    throw ValidationError("r_max outside the domain of phi");
  if (phi.log_value(std::log(r_max)) < target)
    throw ValidationError("r_max is already below the finest usable scale");
  double lo = std::max(std::log(1e-300),
                       phi.trusted_inf() > 0.0
                           ? std::log(phi.trusted_inf())
                           : std::log(1e-300));
  double hi = std::log(r_max);
  if (phi.log_value(lo) >= target) {
    // Even the smallest trusted scale clears the target; use it as r_min.
  } else {
    for (int i = 0; i < 200; ++i) {
      const double mid = 0.5 * (lo + hi);
      if (phi.log_value(mid) >= target)
        hi = mid;
      else
        lo = mid;
    }
  }
  const double r_min = std::exp(hi);
  if (!(r_min < r_max))
    throw ValidationError("no usable scale range above the resolution");
  return RGrid::geometric(r_max, r_min, count);
}

}  // namespace fractdim

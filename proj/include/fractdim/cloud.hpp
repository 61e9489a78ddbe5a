#pragma once

// Finite point clouds in R^d with an optional resolution tag: the smallest
// scale down to which the cloud faithfully represents the underlying set.
// Scale grids for cover sums and profile capacities must stay above it.

#include <Eigen/Dense>
#include <cmath>
#include <limits>

#include "fractdim/common.hpp"

namespace fractdim {

struct PointCloud {
  Eigen::MatrixXd pts;       // one point per row
  double resolution = 0.0;   // 0 means "not tagged"

  long size() const { return static_cast<long>(pts.rows()); }
  int dim() const { return static_cast<int>(pts.cols()); }

  void validate() const {
    if (pts.rows() < 1 || pts.cols() < 1)
      throw ValidationError("point cloud must be non-empty");
    if (!pts.allFinite())
      throw ValidationError("point cloud has non-finite coordinates");
    if (resolution < 0.0)
      throw ValidationError("resolution must be non-negative");
  }
};

// Smallest positive inter-point distance; exact for clouds up to `exact_cap`
// points, computed on an evenly strided subsample beyond that (an upper
// bound on the true minimum, adequate for choosing safe scale grids).
inline double estimate_resolution(const PointCloud& cloud,
                                  long exact_cap = 4000) {
  cloud.validate();
  const long n = cloud.size();
  const long stride = n <= exact_cap ? 1 : (n + exact_cap - 1) / exact_cap;
  double best = std::numeric_limits<double>::infinity();
  for (long i = 0; i < n; i += stride)
    for (long j = i + stride; j < n; j += stride) {
      const double d = (cloud.pts.row(i) - cloud.pts.row(j)).norm();
      if (d > 0.0 && d < best) best = d;
    }
  if (!std::isfinite(best))
    throw ValidationError("cloud has no two distinct points");
  return best;
}

}  // namespace fractdim

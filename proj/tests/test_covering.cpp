#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <vector>

#include "fractdim/covering.hpp"
#include "fractdim/rng.hpp"

using namespace fractdim;

namespace {

PointCloud segment_cloud(int n) {
  PointCloud c;
  c.pts = Eigen::MatrixXd(n, 1);
  for (int i = 0; i < n; ++i) c.pts(i, 0) = static_cast<double>(i) / (n - 1);
  c.resolution = 1.0 / (n - 1);
  return c;
}

PointCloud dust_cloud(int depth) {
  PointCloud c;
  const int n = 1 << depth;
  c.pts = Eigen::MatrixXd(n, 1);
  for (int i = 0; i < n; ++i) {
    double x = 0.0, w = 1.0;
    for (int b = 0; b < depth; ++b) {
      w /= 3.0;
      if (i & (1 << b)) x += 2.0 * w;
    }
    c.pts(i, 0) = x;
  }
  c.resolution = std::pow(3.0, -depth);
  return c;
}

PointCloud random_cloud(RngStream& rng, int n, int d) {
  PointCloud c;
  c.pts = Eigen::MatrixXd(n, d);
  // Two separated blobs of very different widths force multi-scale structure.
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j)
      c.pts(i, j) = (i % 2 == 0) ? rng.uniform(0.0, 1.0)
                                 : 2.0 + rng.uniform(0.0, 0.01);
  return c;
}

double price(const std::vector<CoverScale>& hist, double s) {
  double total = 0.0;
  for (const auto& h : hist) total += h.count * std::pow(h.delta, s);
  return total;
}

}  // namespace

TEST_CASE("box counts of simple configurations", "[covering]") {
  // 1000 equispaced points on [0,1] at delta = 0.1: cells floor(x/0.1),
  // indices 0..10 up to boundary rounding.
  const PointCloud seg = segment_cloud(1000);
  const long n = box_count(seg, 0.1);
  REQUIRE(n >= 10);
  REQUIRE(n <= 11);

  // Four unit-square corners in the plane, delta = 0.5: side 0.5/sqrt(2),
  // all corners land in distinct cells.
  PointCloud corners;
  corners.pts = Eigen::MatrixXd(4, 2);
  corners.pts << 0, 0, 0, 1, 1, 0, 1, 1;
  REQUIRE(box_count(corners, 0.5) == 4);
  REQUIRE(box_count(corners, 0.99) == 4);

  REQUIRE_THROWS_AS(box_count(seg, 0.0), ValidationError);
  REQUIRE_THROWS_AS(box_count(seg, -0.5), ValidationError);
}

TEST_CASE("cover sums on the segment match segment geometry", "[covering]") {
  const PointCloud seg = segment_cloud(1000);
  const AdmissibleFn phi = AdmissibleFn::power(0.5);
  const double r = 0.125;  // phi(r) = 2^-6, well above the 1e-3 resolution

  // At s = 1 the minimal cover sum is the covered length, about 1.
  const auto s1 = cover_sum(seg, r, 1.0, phi);
  REQUIRE(std::abs(s1.value - 1.0) < 0.1);

  // At s = 0 every cell costs 1, so the optimum is the coarsest level alone.
  const auto s0 = cover_sum(seg, r, 0.0, phi);
  REQUIRE(s0.level_cell_counts.size() >= 2);
  const long coarsest = s0.level_cell_counts.back();
  REQUIRE(s0.value == static_cast<double>(coarsest));
  REQUIRE(s0.histogram.size() == 1);
  REQUIRE(s0.histogram.front().count == coarsest);

  // Non-increasing in s.
  double prev = std::numeric_limits<double>::infinity();
  for (double s : {0.0, 0.3, 0.6, 0.9, 1.2, 1.5}) {
    const double v = cover_sum(seg, r, s, phi).value;
    REQUIRE(v <= prev * (1 + 1e-12));
    prev = v;
  }
}

TEST_CASE("ladder structure invariants", "[covering]") {
  RngStream rng(808, 0);
  const AdmissibleFn phi = AdmissibleFn::power(0.5);
  for (int trial = 0; trial < 12; ++trial) {
    const int d = 1 + trial % 3;
    const int n = 50 + static_cast<int>(rng.uniform() * 350);
    const PointCloud cloud = random_cloud(rng, n, d);
    const double r = rng.uniform(0.05, 0.4);
    const double s = rng.uniform(0.0, static_cast<double>(d));
    const auto res = cover_sum(cloud, r, s, phi);

    // Dyadic ladder from phi(r) up to at most r.
    REQUIRE(res.deltas.front() == Catch::Approx(phi(r)).epsilon(1e-14));
    REQUIRE(res.deltas.back() <= r * (1 + 1e-12));
    REQUIRE(res.deltas.back() * 2.0 > r * (1 - 1e-12));
    for (std::size_t j = 1; j < res.deltas.size(); ++j)
      REQUIRE(res.deltas[j] == 2.0 * res.deltas[j - 1]);  // exact doubling

    // Box counts decrease toward coarse scales; every count is positive.
    REQUIRE(res.level_cell_counts.size() == res.deltas.size());
    for (std::size_t j = 0; j < res.level_cell_counts.size(); ++j) {
      REQUIRE(res.level_cell_counts[j] >= 1);
      if (j > 0)
        REQUIRE(res.level_cell_counts[j] <= res.level_cell_counts[j - 1]);
    }

    // The optimum never beats its own reconstruction and never loses to a
    // single-scale cover.
    REQUIRE(res.value > 0.0);
    REQUIRE(res.value <= res.single_scale_floor * (1 + 1e-12));
    REQUIRE(res.value == Catch::Approx(price(res.histogram, s)).epsilon(1e-12));
    double floor_check = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < res.deltas.size(); ++j)
      floor_check = std::min(floor_check, res.level_cell_counts[j] *
                                              std::pow(res.deltas[j], s));
    REQUIRE(res.single_scale_floor ==
            Catch::Approx(floor_check).epsilon(1e-12));
  }
}

TEST_CASE("re-pricing a fixed cover gives exact exponent comparisons",
          "[covering]") {
  RngStream rng(809, 0);
  const AdmissibleFn phi = AdmissibleFn::power(0.4);
  for (int trial = 0; trial < 10; ++trial) {
    const int d = 1 + trial % 2;
    const PointCloud cloud = random_cloud(rng, 200, d);
    const double r = rng.uniform(0.05, 0.3);
    double t = rng.uniform(0.0, static_cast<double>(d));
    double s = rng.uniform(0.0, static_cast<double>(d));
    if (t > s) std::swap(t, s);
    const auto at_s = cover_sum(cloud, r, s, phi);
    const auto at_t = cover_sum(cloud, r, t, phi);

    // The t-optimal cover re-priced at s is admissible for s, and vice versa.
    REQUIRE(at_s.value <= price(at_t.histogram, s) * (1 + 1e-12));
    REQUIRE(at_t.value <= price(at_s.histogram, t) * (1 + 1e-12));

    // Derived two-sided comparison between exponents.
    const double lf = std::log(phi(r));
    REQUIRE(std::log(at_s.value) >=
            std::log(at_t.value) + (s - t) * lf - 1e-9);
    REQUIRE(std::log(at_s.value) <=
            std::log(at_t.value) + (s - t) * std::log(at_s.deltas.back()) +
                1e-9);
  }
}

TEST_CASE("potential-theoretic lower certificate", "[covering]") {
  RngStream rng(810, 0);
  const AdmissibleFn phi = AdmissibleFn::power(0.5);
  for (int trial = 0; trial < 10; ++trial) {
    const int d = 1 + trial % 2;
    const int n = 80 + static_cast<int>(rng.uniform() * 120);
    const PointCloud cloud = random_cloud(rng, n, d);
    const double r = rng.uniform(0.05, 0.3);
    const double s = rng.uniform(0.1, static_cast<double>(d));
    const auto sum = cover_sum(cloud, r, s, phi);

    // Any probability vector certifies a lower bound below the optimum.
    Eigen::VectorXd u = Eigen::VectorXd::Constant(n, 1.0 / n);
    const auto cert_u = cover_lower_certificate(cloud, ProbabilityVector(u), r,
                                                s, phi);
    REQUIRE(cert_u.lower <= sum.value * (1 + 1e-12));
    REQUIRE(cert_u.gamma >= std::pow(phi(r), -s) / n);

    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) v(i) = -std::log(1.0 - rng.uniform());
    v /= v.sum();
    const auto cert_v = cover_lower_certificate(cloud, ProbabilityVector(v), r,
                                                s, phi);
    REQUIRE(cert_v.lower <= sum.value * (1 + 1e-12));
  }
}

TEST_CASE("cover dimension of Cantor dust at two profiles", "[covering]") {
  const PointCloud dust = dust_cloud(10);
  const double truth = std::log(2.0) / std::log(3.0);
  DimensionConfig cfg;
  cfg.bracket_hi = 1.0;

  {
    const AdmissibleFn phi = AdmissibleFn::power(1.0);
    const RGrid grid = RGrid::dyadic(3, 12);
    const auto res = phi_dimension(dust, phi, grid, cfg);
    REQUIRE(res.estimate.bracketed);
    REQUIRE(std::abs(res.estimate.s_star - truth) < 0.08);
    REQUIRE_FALSE(res.rows.empty());
  }
  {
    const AdmissibleFn phi = AdmissibleFn::power(0.5);
    const RGrid grid = RGrid::geometric(0.125, 0.0085, 7);
    const auto res = phi_dimension(dust, phi, grid, cfg);
    REQUIRE(std::abs(res.estimate.s_star - truth) < 0.08);
  }
}

TEST_CASE("scale grids are planned above the cloud resolution", "[covering]") {
  const PointCloud dust = dust_cloud(8);  // resolution 3^-8
  const AdmissibleFn phi = AdmissibleFn::power(0.5);
  const RGrid grid = suggest_cloud_rgrid(dust, phi, 7, 0.25, 4.0);
  REQUIRE(grid.r.size() == 7);
  REQUIRE(grid.r.front() == 0.25);
  REQUIRE(phi(grid.r.back()) >= dust.resolution * 4.0 * (1 - 1e-9));
  // A slightly finer scale would dip below the safety margin.
  REQUIRE(phi(grid.r.back() * 0.98) < dust.resolution * 4.0);

  REQUIRE_THROWS_AS(suggest_cloud_rgrid(dust, phi, 7, 1e-5, 4.0),
                    ValidationError);

  // The dimension driver refuses grids below the tagged resolution.
  DimensionConfig cfg;
  const RGrid bad = RGrid::geometric(0.125, std::pow(3.0, -10), 8);
  REQUIRE_THROWS_AS(phi_dimension(dust, phi, bad, cfg), ValidationError);
}

TEST_CASE("covering input validation", "[covering]") {
  const PointCloud seg = segment_cloud(100);
  const AdmissibleFn phi = AdmissibleFn::power(0.5);
  REQUIRE_THROWS_AS(cover_sum(seg, 0.125, -0.1, phi), ValidationError);
  REQUIRE_THROWS_AS(cover_sum(seg, 1.5, 1.0, phi), ValidationError);
  Eigen::VectorXd w = Eigen::VectorXd::Constant(99, 1.0 / 99);
  REQUIRE_THROWS_AS(
      cover_lower_certificate(seg, ProbabilityVector(w), 0.125, 1.0, phi),
      ValidationError);
}

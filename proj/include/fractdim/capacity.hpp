#pragma once

// Capacities via equilibrium measures: build the kernel matrix of a finite
// configuration (symbolic cylinders or point clouds), minimize the quadratic
// energy over the probability simplex, and report 1 / energy together with
// optimality certificates.
//
// Matrices are stored normalized so the diagonal is exactly 1; the true
// kernel is exp(log_scale) times the stored one. This keeps the solver in a
// well-scaled regime even when phi(r)^-s overflows a double.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "fractdim/cloud.hpp"
#include "fractdim/common.hpp"
#include "fractdim/dimension.hpp"
#include "fractdim/kernels.hpp"
#include "fractdim/rng.hpp"
#include "fractdim/symbolic.hpp"

namespace fractdim {

inline constexpr long kDefaultMatrixCap = 6000;  // dense n x n memory guard

struct KernelSpec {
  enum class Family { symbolic_phi, profile };
  Family family = Family::profile;
  double r = 0.0;
  double s = 0.0;
  double tau = 0.0;          // profile kernels only
  std::string phi_name;

  const char* family_name() const {
    return family == Family::symbolic_phi ? "symbolic_phi" : "profile";
  }
};

// Normalized kernel matrix: entries in (0, 1], unit diagonal; the true
// matrix is exp(log_scale) * k.
struct KernelMatrix {
  Eigen::MatrixXd k;
  double log_scale = 0.0;
  KernelSpec spec;

  void validate() const {
    const long n = k.rows();
    if (n < 1 || k.cols() != n)
      throw ValidationError("kernel matrix must be square and non-empty");
    if (!k.allFinite())
      throw ValidationError("kernel matrix has non-finite entries");
    for (long i = 0; i < n; ++i)
      for (long j = 0; j <= i; ++j) {
        if (!(k(i, j) > 0.0))
          throw ValidationError("kernel matrix entries must be positive");
        if (std::abs(k(i, j) - k(j, i)) >
            1e-12 * std::max(1.0, std::abs(k(i, j))))
          throw ValidationError("kernel matrix must be symmetric");
      }
    if (!std::isfinite(log_scale))
      throw ValidationError("kernel matrix log_scale must be finite");
  }
};

struct ProbabilityVector {
  Eigen::VectorXd w;

  explicit ProbabilityVector(Eigen::VectorXd v) : w(std::move(v)) {
    if (w.size() < 1) throw ValidationError("empty probability vector");
    if (!w.allFinite() || w.minCoeff() < 0.0)
      throw ValidationError("probability weights must be non-negative");
    if (std::abs(w.sum() - 1.0) > 1e-9)
      throw ValidationError("probability weights must sum to 1");
  }
};

struct SolverConfig {
  double tol = 1e-7;          // relative duality-gap target
  long max_iter = 500000;     // for the primary start
  int extra_starts = 2;       // random restarts beyond the deterministic ones
  // Iteration budget for the non-primary starts. They exist only to detect a
  // lower-energy basin; a probe that neither converges nor undercuts the
  // incumbent within this budget is discarded, one that undercuts it is run
  // to completion. Certificates always refer to the returned point.
  long probe_iter = 4000;
  std::uint64_t seed = 0x0f1e2d3c4b5a6978ull;
};

// Minimizer of w^T K w over the simplex, with the optimality certificates
// evaluated at the returned point: for an exact equilibrium the potential
// (Kw)_i equals the energy on the support and is >= it everywhere.
struct EquilibriumResult {
  Eigen::VectorXd w;
  double energy = 0.0;               // in the normalized units of the matrix
  double gap = 0.0;                  // max of the two relative-gap halves
  double potential_min = 0.0;
  double potential_support_max = 0.0;
  long iterations = 0;               // summed over all starts
  bool converged = false;
};

namespace detail {

struct FwRun {
  Eigen::VectorXd w;
  double energy = 0.0;
  long iterations = 0;
  bool converged = false;
};

// One active-set step toward the equilibrium: take the current support plus
// every atom whose potential lies inside the optimality band (exactly the
// atoms an exchange step would otherwise shuffle in one at a time), solve
// K_S x = 1 on that face, dropping negative atoms and re-solving, and adopt
// the point only when it strictly lowers the energy. Correctness never
// depends on these steps: convergence certificates come from exact
// potentials either way.
inline bool face_equilibrium_step(const Eigen::MatrixXd& k, Eigen::VectorXd& w,
                                  Eigen::VectorXd& p, double& energy) {
  const long n = k.rows();
  const double band = 2.0 * energy - p.minCoeff();
  std::vector<long> act;
  act.reserve(n);
  for (long i = 0; i < n; ++i)
    if (w(i) > 0.0 || p(i) <= band) act.push_back(i);
  if (act.size() < 2 || act.size() > 3000)
    return false;  // cubic solves; keep attempts bounded

  // The face matrix can contain exactly singular blocks (atoms with pairwise
  // kernel value 1 are interchangeable), so try a ladder of ridge weights and
  // keep the best exactly-evaluated energy among the candidates.
  const auto candidate = [&](double ridge, std::vector<long> face,
                             Eigen::VectorXd& wj) -> double {
    Eigen::VectorXd x;
    for (int round = 0; round < 8; ++round) {
      const long m = static_cast<long>(face.size());
      Eigen::MatrixXd ks(m, m);
      for (long a = 0; a < m; ++a)
        for (long b = 0; b < m; ++b) ks(a, b) = k(face[a], face[b]);
      if (ridge > 0.0) ks.diagonal().array() += ridge;
      const Eigen::LDLT<Eigen::MatrixXd> ldlt(ks);
      if (ldlt.info() != Eigen::Success)
        return std::numeric_limits<double>::infinity();
      x = ldlt.solve(Eigen::VectorXd::Ones(m));
      if (!x.allFinite()) return std::numeric_limits<double>::infinity();
      if (x.minCoeff() >= 0.0) break;
      std::vector<long> kept;
      kept.reserve(face.size());
      for (long a = 0; a < m; ++a)
        if (x(a) > 0.0) kept.push_back(face[a]);
      if (kept.size() < 2 || kept.size() == face.size()) break;
      face = std::move(kept);
    }
    x = x.cwiseMax(0.0);
    const double sum = x.sum();
    if (!(sum > 0.0)) return std::numeric_limits<double>::infinity();
    wj = Eigen::VectorXd::Zero(n);
    for (std::size_t a = 0; a < face.size(); ++a) wj(face[a]) = x(a) / sum;
    const double ej = wj.dot(k * wj);
    return std::isfinite(ej) ? ej : std::numeric_limits<double>::infinity();
  };

  Eigen::VectorXd best_w;
  double best_e = std::numeric_limits<double>::infinity();
  for (const double ridge : {0.0, 1e-12, 1e-9, 1e-6}) {
    Eigen::VectorXd wj;
    const double ej = candidate(ridge, act, wj);
    if (ej < best_e) {
      best_e = ej;
      best_w = std::move(wj);
    }
  }
  if (!(best_e < energy)) return false;
  w = std::move(best_w);
  p = k * w;
  energy = best_e;
  return true;
}

// Iterated active-set descent: re-solve on the (re-derived) active face until
// the duality gap certifies or a step stops improving. Near-degenerate
// problems whose support drifts slowly under pairwise exchanges are finished
// here in a handful of small linear solves.
inline void face_equilibrium_descent(const Eigen::MatrixXd& k,
                                     Eigen::VectorXd& w, Eigen::VectorXd& p,
                                     double& energy, double tol) {
  for (int round = 0; round < 25; ++round) {
    if (!face_equilibrium_step(k, w, p, energy)) return;
    double pmin = p.minCoeff();
    double psup = -std::numeric_limits<double>::infinity();
    const long n = k.rows();
    for (long i = 0; i < n; ++i)
      if (w(i) > 0.0) psup = std::max(psup, p(i));
    if (2.0 * (energy - pmin) <= tol * energy &&
        2.0 * (psup - energy) <= tol * energy)
      return;
  }
}

// Pairwise Frank-Wolfe with exact line search. Each step moves weight from
// the worst support atom to the globally best atom; the potential vector is
// updated incrementally (two matrix columns per step) and refreshed exactly
// before convergence is declared.
inline FwRun pairwise_frank_wolfe(const Eigen::MatrixXd& k, Eigen::VectorXd w,
                                  const SolverConfig& cfg) {
  const long n = k.rows();
  Eigen::VectorXd p = k * w;
  double energy = w.dot(p);
  FwRun run;
  constexpr long kRefresh = 8192;
  long next_jump = 2 * kRefresh;

  while (run.iterations < cfg.max_iter) {
    long is = 0, ia = -1;
    double ps = p(0), pa = -std::numeric_limits<double>::infinity();
    for (long i = 0; i < n; ++i) {
      if (p(i) < ps) {
        ps = p(i);
        is = i;
      }
      if (w(i) > 0.0 && p(i) > pa) {
        pa = p(i);
        ia = i;
      }
    }
    if (2.0 * (energy - ps) <= cfg.tol * energy &&
        2.0 * (pa - energy) <= cfg.tol * energy) {
      // Candidate optimum: re-verify against drift-free quantities.
      p = k * w;
      energy = w.dot(p);
      double eps = p.minCoeff(), epa = -std::numeric_limits<double>::infinity();
      for (long i = 0; i < n; ++i)
        if (w(i) > 0.0) epa = std::max(epa, p(i));
      if (2.0 * (energy - eps) <= cfg.tol * energy &&
          2.0 * (epa - energy) <= cfg.tol * energy) {
        run.converged = true;
        break;
      }
      continue;  // drift masked a real gap; resume with the fresh state
    }

    const double q = k(is, is) + k(ia, ia) - 2.0 * k(is, ia);
    const double t_max = w(ia);
    double t = t_max;
    if (q > 0.0) t = std::min(t_max, (pa - ps) / q);
    energy += 2.0 * t * (ps - pa) + t * t * q;
    if (t == t_max) {
      w(is) += w(ia);
      w(ia) = 0.0;
    } else {
      w(is) += t;
      w(ia) -= t;
    }
    p += t * (k.col(is) - k.col(ia));
    ++run.iterations;
    if (run.iterations % kRefresh == 0) {
      p = k * w;
      energy = w.dot(p);
      if (run.iterations >= next_jump) {
        next_jump *= 4;
        face_equilibrium_descent(k, w, p, energy, cfg.tol);
      }
    }
  }
  run.w = std::move(w);
  run.energy = run.w.dot(k * run.w);
  return run;
}

}  // namespace detail

inline EquilibriumResult equilibrium_measure(
    const KernelMatrix& km, const SolverConfig& cfg,
    const Eigen::VectorXd* warm = nullptr) {
  km.validate();
  if (!(cfg.tol > 0.0)) throw ValidationError("solver tolerance must be > 0");
  if (cfg.max_iter < 1) throw ValidationError("max_iter must be >= 1");
  if (cfg.probe_iter < 1) throw ValidationError("probe_iter must be >= 1");
  const long n = km.k.rows();

  EquilibriumResult res;
  if (n == 1) {
    res.w = Eigen::VectorXd::Ones(1);
    res.energy = km.k(0, 0);
    res.potential_min = res.potential_support_max = res.energy;
    res.converged = true;
    return res;
  }

  // The energy need not be convex for a general positive kernel matrix, so
  // the minimum over several starts guards against interior saddle points
  // (the uniform vector can be exactly stationary without being optimal).
  // An advisory warm start, when usable, becomes the primary start.
  std::vector<Eigen::VectorXd> starts;
  if (warm && warm->size() == n) {
    Eigen::VectorXd v = warm->cwiseMax(0.0);
    const double sum = v.sum();
    if (sum > 0.0 && v.allFinite()) starts.push_back(v / sum);
  }
  starts.push_back(Eigen::VectorXd::Constant(n, 1.0 / n));
  {
    long best_row = 0;
    double best_sum = km.k.row(0).sum();
    for (long i = 1; i < n; ++i) {
      const double rs = km.k.row(i).sum();
      if (rs < best_sum) {
        best_sum = rs;
        best_row = i;
      }
    }
    Eigen::VectorXd v = Eigen::VectorXd::Zero(n);
    v(best_row) = 1.0;
    starts.push_back(std::move(v));
  }
  RngStream rng(cfg.seed, 17);
  for (int e = 0; e < cfg.extra_starts; ++e) {
    Eigen::VectorXd v(n);
    for (long i = 0; i < n; ++i) v(i) = -std::log(1.0 - rng.uniform());
    starts.push_back(v / v.sum());
  }

  detail::FwRun best;
  best.energy = std::numeric_limits<double>::infinity();
  for (std::size_t si = 0; si < starts.size(); ++si) {
    detail::FwRun run;
    bool consider = true;
    if (si == 0) {
      run = detail::pairwise_frank_wolfe(km.k, starts[si], cfg);
    } else {
      SolverConfig probe = cfg;
      probe.max_iter = std::min(cfg.max_iter, cfg.probe_iter);
      run = detail::pairwise_frank_wolfe(km.k, starts[si], probe);
      if (!run.converged) {
        if (run.energy < best.energy * (1.0 - cfg.tol)) {
          // The probe undercut the incumbent: finish its descent.
          const long left = cfg.max_iter - run.iterations;
          if (left >= 1) {
            SolverConfig rest = cfg;
            rest.max_iter = left;
            detail::FwRun cont =
                detail::pairwise_frank_wolfe(km.k, run.w, rest);
            cont.iterations += run.iterations;
            run = std::move(cont);
          }
        } else {
          consider = false;  // stuck at or above the incumbent basin
        }
      }
    }
    res.iterations += run.iterations;
    if (consider && run.energy < best.energy) {
      best.w = run.w;
      best.energy = run.energy;
      best.converged = run.converged;
    }
  }

  res.w = best.w;
  res.converged = best.converged;
  const Eigen::VectorXd p = km.k * res.w;
  res.energy = res.w.dot(p);
  res.potential_min = p.minCoeff();
  res.potential_support_max = -std::numeric_limits<double>::infinity();
  for (long i = 0; i < n; ++i)
    if (res.w(i) > 0.0)
      res.potential_support_max = std::max(res.potential_support_max, p(i));
  res.gap = std::max(2.0 * (res.energy - res.potential_min),
                     2.0 * (res.potential_support_max - res.energy));
  return res;
}

// ---------------------------------------------------------------------------
// Kernel matrix assembly.

// Symbolic kernel matrix over the leaves of a prefix tree. Every pair of
// leaves below the same internal node shares that node's kernel value, so the
// matrix is filled blockwise: one kernel evaluation per internal node, one
// block write per ordered child pair. Requires every leaf to be refined below
// phi(r) (the constrained-diameter regime).
inline KernelMatrix assemble_symbolic_kernel(const PrefixTree& tree, double r,
                                             double s, const AdmissibleFn& phi,
                                             long max_n = kDefaultMatrixCap) {
  if (tree.nodes.empty()) throw ValidationError("empty prefix tree");
  const long n = static_cast<long>(tree.leaf_words.size());
  if (n > max_n)
    throw ResourceCapError("kernel matrix would exceed the size cap (" +
                           std::to_string(n) + " > " + std::to_string(max_n) +
                           " leaves)");
  const double log_phi_r = phi.log_value(std::log(r));
  const double phi_r_tol = std::exp(log_phi_r) * (1.0 + 1e-12);
  for (const auto& node : tree.nodes)
    if (node.is_leaf && node.sv[0] > phi_r_tol)
      throw ValidationError(
          "prefix tree has a leaf wider than phi(r); refine further");

  KernelMatrix km;
  km.log_scale = -s * log_phi_r;
  km.spec.family = KernelSpec::Family::symbolic_phi;
  km.spec.r = r;
  km.spec.s = s;
  km.spec.phi_name = phi.name();
  km.k = Eigen::MatrixXd::Zero(n, n);
  for (long i = 0; i < n; ++i) km.k(i, i) = 1.0;

  for (const auto& node : tree.nodes) {
    if (node.children.size() < 2) continue;
    const double v =
        std::exp(log_ker_symbolic_phi(node.sv, r, s, phi) - km.log_scale);
    for (std::size_t a = 0; a < node.children.size(); ++a) {
      const auto& ca = tree.nodes[node.children[a]];
      for (std::size_t b = a + 1; b < node.children.size(); ++b) {
        const auto& cb = tree.nodes[node.children[b]];
        km.k.block(ca.first_leaf, cb.first_leaf, ca.leaf_count, cb.leaf_count)
            .setConstant(v);
        km.k.block(cb.first_leaf, ca.first_leaf, cb.leaf_count, ca.leaf_count)
            .setConstant(v);
      }
    }
  }
  return km;
}

namespace detail {

inline KernelMatrix assemble_profile_from_distances(
    const Eigen::MatrixXd& dist, double r, double s, double tau,
    const AdmissibleFn& phi) {
  const long n = dist.rows();
  KernelMatrix km;
  km.log_scale = -s * phi.log_value(std::log(r));
  km.spec.family = KernelSpec::Family::profile;
  km.spec.r = r;
  km.spec.s = s;
  km.spec.tau = tau;
  km.spec.phi_name = phi.name();
  km.k = Eigen::MatrixXd(n, n);
  for (long i = 0; i < n; ++i) {
    km.k(i, i) = 1.0;
    for (long j = 0; j < i; ++j) {
      const double v =
          std::exp(log_ker_profile(dist(i, j), r, s, tau, phi) - km.log_scale);
      km.k(i, j) = km.k(j, i) = v;
    }
  }
  return km;
}

inline Eigen::MatrixXd pairwise_distances(const PointCloud& cloud) {
  const long n = cloud.size();
  Eigen::MatrixXd dist(n, n);
  for (long i = 0; i < n; ++i) {
    dist(i, i) = 0.0;
    for (long j = 0; j < i; ++j)
      dist(i, j) = dist(j, i) = (cloud.pts.row(i) - cloud.pts.row(j)).norm();
  }
  return dist;
}

}  // namespace detail

// Profile kernel matrix of a point cloud (tau-profile at scale r).
inline KernelMatrix assemble_profile_kernel(const PointCloud& cloud, double r,
                                            double s, double tau,
                                            const AdmissibleFn& phi,
                                            long max_n = kDefaultMatrixCap) {
  cloud.validate();
  if (cloud.size() > max_n)
    throw ResourceCapError("kernel matrix would exceed the size cap (" +
                           std::to_string(cloud.size()) + " > " +
                           std::to_string(max_n) + " points)");
  return detail::assemble_profile_from_distances(
      detail::pairwise_distances(cloud), r, s, tau, phi);
}

// ---------------------------------------------------------------------------
// Capacities.

struct CapacityOptions {
  SolverConfig solver;
  long leaf_cap = kDefaultLeafCap;
  long max_matrix_n = kDefaultMatrixCap;
};

struct CapacityValue {
  double log_capacity = 0.0;  // -log energy, in true (unnormalized) units
  double capacity = 0.0;      // exp(log_capacity); may over/underflow to 0/inf
  double energy = 0.0;        // exp(-log_capacity)
  EquilibriumResult eq;       // certificates of the solver's own measure
  KernelSpec spec;
};

inline CapacityValue capacity_from_matrix(
    const KernelMatrix& km, const SolverConfig& cfg,
    const Eigen::VectorXd* warm = nullptr) {
  CapacityValue out;
  out.eq = equilibrium_measure(km, cfg, warm);
  out.log_capacity = -(km.log_scale + std::log(out.eq.energy));
  out.capacity = std::exp(out.log_capacity);
  out.energy = std::exp(-out.log_capacity);
  out.spec = km.spec;
  return out;
}

inline CapacityValue capacity_symbolic(const AffineIfs& ifs,
                                       const SymbolicSet& set, double r,
                                       double s, const AdmissibleFn& phi,
                                       const CapacityOptions& opts = {}) {
  const auto refined =
      refine_to_depth(ifs, set, RefineStop::threshold(phi(r)), opts.leaf_cap);
  const PrefixTree tree = build_prefix_tree(ifs, refined);
  return capacity_from_matrix(
      assemble_symbolic_kernel(tree, r, s, phi, opts.max_matrix_n),
      opts.solver);
}

inline CapacityValue capacity_profile(const PointCloud& cloud, double r,
                                      double s, double tau,
                                      const AdmissibleFn& phi,
                                      const CapacityOptions& opts = {}) {
  return capacity_from_matrix(
      assemble_profile_kernel(cloud, r, s, tau, phi, opts.max_matrix_n),
      opts.solver);
}

// ---------------------------------------------------------------------------
// Cross-priced sweeps.
//
// When capacities at several exponents s share a scale r, every equilibrium
// measure found at one exponent is also admissible at the others. Re-pricing
// the whole candidate pool at each exponent and keeping the cheapest energy
// tightens every capacity estimate simultaneously, which makes the algebraic
// comparison laws between exponents hold to floating-point precision instead
// of solver precision.

struct CapacitySweep {
  std::vector<double> r_grid;
  std::vector<double> s_grid;
  std::vector<std::vector<CapacityValue>> cells;  // [r index][s index]
};

inline CapacitySweep capacity_sweep(
    const std::function<KernelMatrix(double r, double s)>& build_matrix,
    const std::vector<double>& r_grid, const std::vector<double>& s_grid,
    const CapacityOptions& opts = {}, bool cross_price = true) {
  if (r_grid.empty() || s_grid.empty())
    throw ValidationError("sweep grids must be non-empty");
  CapacitySweep sweep;
  sweep.r_grid = r_grid;
  sweep.s_grid = s_grid;
  for (double r : r_grid) {
    std::vector<CapacityValue> row;
    std::vector<Eigen::VectorXd> pool;
    const Eigen::VectorXd* prev = nullptr;  // warm-chain along the s axis
    for (double s : s_grid) {
      const KernelMatrix km = build_matrix(r, s);
      CapacityValue cv = capacity_from_matrix(km, opts.solver, prev);
      pool.push_back(cv.eq.w);
      prev = &pool.back();
      row.push_back(std::move(cv));
    }
    if (cross_price && s_grid.size() > 1) {
      for (std::size_t si = 0; si < s_grid.size(); ++si) {
        const KernelMatrix km = build_matrix(r, s_grid[si]);
        double best = row[si].eq.energy;
        for (const auto& w : pool)
          best = std::min(best, w.dot(km.k * w));
        row[si].log_capacity = -(km.log_scale + std::log(best));
        row[si].capacity = std::exp(row[si].log_capacity);
        row[si].energy = std::exp(-row[si].log_capacity);
      }
    }
    sweep.cells.push_back(std::move(row));
  }
  return sweep;
}

// ---------------------------------------------------------------------------
// Capacity dimensions.

struct CapacityRow {
  double r = 0.0;
  double s = 0.0;
  double log_capacity = 0.0;
  double capacity = 0.0;
  double energy = 0.0;
  double gap = 0.0;
  long iterations = 0;
  bool converged = false;
};

struct CapacityDimensionResult {
  DimensionEstimate estimate;
  std::vector<CapacityRow> rows;  // every (r, s) cell the bisection touched
  std::string kernel_family;
};

namespace detail {

inline CapacityRow make_row(double r, double s, const CapacityValue& cv) {
  CapacityRow row;
  row.r = r;
  row.s = s;
  row.log_capacity = cv.log_capacity;
  row.capacity = cv.capacity;
  row.energy = cv.energy;
  row.gap = cv.eq.gap;
  row.iterations = cv.eq.iterations;
  row.converged = cv.eq.converged;
  return row;
}

}  // namespace detail

// Dimension from symbolic capacities: the zero of the windowed slope of
// log C_r(s) against -log r. Prefix trees are refined once per scale and
// reused across the bisection in s.
inline CapacityDimensionResult capacity_dimension_symbolic(
    const AffineIfs& ifs, const SymbolicSet& set, const AdmissibleFn& phi,
    const RGrid& grid, const DimensionConfig& dim_cfg,
    const CapacityOptions& opts = {}) {
  grid.validate();
  if (dim_cfg.bracket_hi > static_cast<double>(ifs.d))
    throw ValidationError("exponent bracket exceeds the ambient dimension");
  std::vector<PrefixTree> trees;
  for (double r : grid.r)
    trees.push_back(build_prefix_tree(
        ifs, refine_to_depth(ifs, set, RefineStop::threshold(phi(r)),
                             opts.leaf_cap)));
  CapacityDimensionResult result;
  result.kernel_family = "symbolic_phi";
  // Warm chain: per scale the measure from the previous exponent, falling
  // back to the neighbouring scale at the current exponent on a cold cell.
  std::vector<Eigen::VectorXd> warm(grid.r.size());
  const auto builder = [&](double s) {
    std::vector<double> curve;
    const Eigen::VectorXd* prev = nullptr;
    for (std::size_t i = 0; i < grid.r.size(); ++i) {
      const Eigen::VectorXd* w0 = warm[i].size() > 0 ? &warm[i] : prev;
      const auto cv = capacity_from_matrix(
          assemble_symbolic_kernel(trees[i], grid.r[i], s, phi,
                                   opts.max_matrix_n),
          opts.solver, w0);
      warm[i] = cv.eq.w;
      prev = &warm[i];
      result.rows.push_back(detail::make_row(grid.r[i], s, cv));
      curve.push_back(cv.log_capacity);
    }
    return curve;
  };
  result.estimate = dimension_from_curves(builder, grid, dim_cfg);
  return result;
}

// Dimension from profile capacities of a point cloud. Pairwise distances are
// computed once; each curve evaluation reuses them. If the cloud carries a
// resolution tag, the scale grid must not dip below it.
inline CapacityDimensionResult capacity_dimension_profile(
    const PointCloud& cloud, double tau, const AdmissibleFn& phi,
    const RGrid& grid, const DimensionConfig& dim_cfg,
    const CapacityOptions& opts = {}) {
  grid.validate();
  cloud.validate();
  if (!(tau > 0.0)) throw ValidationError("profile exponent must be positive");
  if (dim_cfg.bracket_hi > tau)
    throw ValidationError("exponent bracket exceeds the profile exponent");
  if (cloud.resolution > 0.0 &&
      phi(grid.r.back()) < cloud.resolution * (1.0 - 1e-12))
    throw ValidationError(
        "scale grid dips below the cloud resolution; coarsen the grid");
  if (cloud.size() > opts.max_matrix_n)
    throw ResourceCapError("cloud exceeds the kernel matrix size cap");
  const Eigen::MatrixXd dist = detail::pairwise_distances(cloud);
  CapacityDimensionResult result;
  result.kernel_family = "profile";
  // Warm chain: per scale the measure from the previous exponent, falling
  // back to the neighbouring scale at the current exponent on a cold cell.
  std::vector<Eigen::VectorXd> warm(grid.r.size());
  const auto builder = [&](double s) {
    std::vector<double> curve;
    const Eigen::VectorXd* prev = nullptr;
    for (std::size_t i = 0; i < grid.r.size(); ++i) {
      const auto cv = capacity_from_matrix(
          detail::assemble_profile_from_distances(dist, grid.r[i], s, tau,
                                                  phi),
          opts.solver, warm[i].size() > 0 ? &warm[i] : prev);
      warm[i] = cv.eq.w;
      prev = &warm[i];
      result.rows.push_back(detail::make_row(grid.r[i], s, cv));
      curve.push_back(cv.log_capacity);
    }
    return curve;
  };
  result.estimate = dimension_from_curves(builder, grid, dim_cfg);
  return result;
}

// ---------------------------------------------------------------------------
// Scale-grid planning.

// Finest scale whose refinement stays within the leaf budget, assuming the
// worst case (full shift, all contraction ratios at the maximum): depth
// n(r) = ceil(log phi(r) / log alpha_max) and at most m^n leaves.
inline double finest_symbolic_scale(const AffineIfs& ifs,
                                    const AdmissibleFn& phi, long max_leaves) {
  if (max_leaves < static_cast<long>(ifs.maps.size()))
    throw ValidationError("leaf budget below the alphabet size");
  const double log_m = std::log(static_cast<double>(ifs.maps.size()));
  const long max_depth =
      static_cast<long>(std::floor(std::log(static_cast<double>(max_leaves)) /
                                   log_m * (1.0 + 1e-12)));
  const double target = max_depth * std::log(ifs.norm_max);
  // phi is non-decreasing: bisect for the smallest r with log phi(r) >= target.
  double lo = std::log(1e-60);
  double hi = std::log(std::min(0.5, 0.9 * phi.domain_sup()));
  if (phi.log_value(hi) < target)
    throw ValidationError("leaf budget too small for any usable scale");
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (phi.log_value(mid) >= target)
      hi = mid;
    else
      lo = mid;
  }
  return std::exp(hi);
}

inline RGrid suggest_symbolic_rgrid(const AffineIfs& ifs,
                                    const AdmissibleFn& phi, int count,
                                    double r_max, long max_leaves) {
  const double r_min = finest_symbolic_scale(ifs, phi, max_leaves);
  if (!(r_min < r_max))
    throw ValidationError("requested r_max is below the finest usable scale");
  return RGrid::geometric(r_max, r_min, count);
}

}  // namespace fractdim

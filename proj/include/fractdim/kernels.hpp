#pragma once

// Admissible scale-window functions and the kernel family built from them.
//
// An admissible function phi pins the cover-diameter window [phi(r), r].
// Kernels are evaluated exactly: each objective is piecewise u^c in u, so a
// maximum over the window is attained at a window endpoint or an interior
// breakpoint, and we enumerate those instead of grid searching. All cores
// work in log space so extreme windows cannot overflow.

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "fractdim/common.hpp"
#include "fractdim/symbolic.hpp"

namespace fractdim {

class AdmissibleFn {
 public:
  enum class Kind { power, boxlike, loglike, custom };

  /// phi(r) = r^(1/theta), theta in (0, 1]. theta = 1 gives the identity
  /// window [r, r]; it is usable everywhere but reported as not admissible.
  static AdmissibleFn power(double theta) {
    if (!(theta > 0.0 && theta <= 1.0))
      throw ValidationError("power exponent theta must be in (0, 1]");
    AdmissibleFn f;
    f.kind_ = Kind::power;
    f.theta_ = theta;
    f.admissible_ = theta < 1.0;
    return f;
  }

  /// phi(r) = -r / log r on (0, 1/e).
  static AdmissibleFn boxlike() {
    AdmissibleFn f;
    f.kind_ = Kind::boxlike;
    f.admissible_ = true;
    return f;
  }

  /// phi(r) = r^{-log r} = exp(-(log r)^2) on (0, 1/e).
  static AdmissibleFn loglike() {
    AdmissibleFn f;
    f.kind_ = Kind::loglike;
    f.admissible_ = true;
    return f;
  }

  /// Tabulated (r, phi(r)) pairs, ascending in r, interpolated linearly in
  /// log-log coordinates and extrapolated below the smallest node from the
  /// first segment. Monotonicity and 0 < phi(r) <= r are hard requirements;
  /// the vanishing-ratio condition phi(r)/r -> 0 is checked numerically and
  /// recorded in is_admissible().
  static AdmissibleFn custom(
      const std::vector<std::pair<double, double>>& table) {
    if (table.size() < 2)
      throw ValidationError("custom admissible table needs >= 2 nodes");
    AdmissibleFn f;
    f.kind_ = Kind::custom;
    f.table_.reserve(table.size());
    for (const auto& [r, p] : table) {
      if (!(r > 0.0 && r < 1.0))
        throw ValidationError("custom table abscissae must lie in (0, 1)");
      if (!(p > 0.0 && p <= r * (1.0 + 1e-12)))
        throw ValidationError("custom table must satisfy 0 < phi(r) <= r");
      f.table_.emplace_back(std::log(r), std::log(p));
    }
    for (std::size_t i = 0; i + 1 < f.table_.size(); ++i) {
      if (!(f.table_[i].first < f.table_[i + 1].first))
        throw ValidationError("custom table abscissae must be ascending");
      if (f.table_[i].second > f.table_[i + 1].second + 1e-12)
        throw ValidationError("custom table must be non-decreasing");
    }
    // phi(r)/r should shrink toward small r: log(phi/r) non-decreasing in r.
    f.admissible_ = true;
    for (std::size_t i = 0; i + 1 < f.table_.size(); ++i) {
      const double lo = f.table_[i].second - f.table_[i].first;
      const double hi = f.table_[i + 1].second - f.table_[i + 1].first;
      if (lo > hi + 1e-12) f.admissible_ = false;
    }
    const double first = f.table_.front().second - f.table_.front().first;
    const double last = f.table_.back().second - f.table_.back().first;
    if (!(first < last - 1e-9)) f.admissible_ = false;
    return f;
  }

  double operator()(double r) const {
    if (!(r > 0.0)) throw ValidationError("phi evaluated at r <= 0");
    return std::exp(log_value(std::log(r)));
  }

  /// log phi(r) as a function of log r (throws outside the domain).
  double log_value(double log_r) const {
    if (!std::isfinite(log_r) || !(log_r < log_domain_sup() + 1e-15))
      throw ValidationError("scale r outside the admissible domain (0, " +
                            format_float17(domain_sup()) + ")");
    const double lr = alpha_ * log_r;
    double lp;
    switch (kind_) {
      case Kind::power:
        lp = lr / theta_;
        break;
      case Kind::boxlike:
        lp = lr - std::log(-lr);
        break;
      case Kind::loglike:
        lp = -lr * lr;
        break;
      case Kind::custom:
        lp = interp_log(lr);
        break;
    }
    lp /= alpha_;
    if (!(lp <= log_r + 1e-9))
      throw ValidationError("phi(r) > r at r = " +
                            format_float17(std::exp(log_r)));
    return lp;
  }

  bool is_admissible() const { return admissible_; }
  Kind kind() const { return kind_; }
  double theta() const { return theta_; }
  double holder_alpha() const { return alpha_; }

  /// Supremum of the usable domain (exclusive for the analytic families,
  /// inclusive for tabulated ones).
  double domain_sup() const { return std::exp(log_domain_sup()); }

  std::string name() const {
    std::string base;
    switch (kind_) {
      case Kind::power:
        base = "power(" + format_float17(theta_) + ")";
        break;
      case Kind::boxlike:
        base = "boxlike";
        break;
      case Kind::loglike:
        base = "loglike";
        break;
      case Kind::custom:
        base = "custom(n=" + std::to_string(table_.size()) + ")";
        break;
    }
    if (alpha_ != 1.0) base += "@alpha=" + format_float17(alpha_);
    return base;
  }

  /// Smallest r (exclusive 0 for analytic kinds) the function vouches for;
  /// numeric checks clamp their grids here instead of trusting extrapolation.
  double trusted_inf() const {
    if (kind_ == Kind::custom) return std::exp(table_.front().first / alpha_);
    return 0.0;
  }

 private:
  double log_domain_sup() const {
    double base;
    switch (kind_) {
      case Kind::power:
        base = 0.0;
        break;
      case Kind::boxlike:
      case Kind::loglike:
        base = -1.0;
        break;
      case Kind::custom:
        base = table_.back().first;
        break;
    }
    return base / alpha_;
  }

  double interp_log(double lr) const {
    // Binary search for the segment; extrapolate from the first segment
    // below the table (the phi(r) <= r guard still applies afterwards).
    if (lr >= table_.back().first) return table_.back().second;
    std::size_t hi = 1;
    while (hi + 1 < table_.size() && table_[hi].first < lr) ++hi;
    const auto& [x0, y0] = table_[hi - 1];
    const auto& [x1, y1] = table_[hi];
    const double t = (lr - x0) / (x1 - x0);
    return y0 + t * (y1 - y0);
  }

  Kind kind_ = Kind::power;
  double theta_ = 1.0;
  double alpha_ = 1.0;  // Hoelder transform exponent (see phi_alpha)
  bool admissible_ = false;
  std::vector<std::pair<double, double>> table_;  // (log r, log phi)

  friend AdmissibleFn phi_alpha(const AdmissibleFn&, double);
};

/// Hoelder transform phi_alpha(r) = phi(r^alpha)^(1/alpha), alpha in (0, 1].
/// Power functions are fixed points of this transform.
inline AdmissibleFn phi_alpha(const AdmissibleFn& base, double alpha) {
  if (!(alpha > 0.0 && alpha <= 1.0))
    throw ValidationError("Hoelder exponent alpha must be in (0, 1]");
  AdmissibleFn f = base;
  f.alpha_ *= alpha;
  return f;
}

/// Numeric check of the growth condition r^eps * log(1/phi(r)) -> 0: for
/// every eps in the grid the sampled values must decrease along the tail of
/// a deep geometric r grid (clamped to the function's trusted range).
struct GrowthCheck {
  bool pass = false;
  std::vector<double> eps_grid;
  std::vector<bool> eps_pass;
  std::vector<std::pair<double, double>> samples;  // (r, v) at smallest eps
};

inline GrowthCheck check_growth_condition(
    const AdmissibleFn& phi,
    std::vector<double> eps_grid = {0.5, 0.25, 0.1, 0.05}, int r_count = 30) {
  if (eps_grid.empty() || r_count < 8)
    throw ValidationError("growth check needs eps values and >= 8 scales");
  GrowthCheck out;
  out.eps_grid = eps_grid;

  const double hi = std::min(std::pow(2.0, -4.0), 0.9 * phi.domain_sup());
  double lo = std::pow(2.0, -120.0);
  if (phi.trusted_inf() > 0.0) lo = phi.trusted_inf();
  if (!(lo < hi))
    throw ValidationError("growth check window is empty for this phi");

  const double llo = std::log(lo), lhi = std::log(hi);
  std::vector<double> log_r(static_cast<std::size_t>(r_count));
  for (int i = 0; i < r_count; ++i)
    log_r[static_cast<std::size_t>(i)] =
        lhi + (llo - lhi) * i / (r_count - 1);  // descending r

  out.pass = true;
  const int tail = 4;
  for (std::size_t e = 0; e < eps_grid.size(); ++e) {
    const double eps = eps_grid[e];
    std::vector<double> v(log_r.size());
    for (std::size_t i = 0; i < log_r.size(); ++i) {
      const double neg_log_phi = -phi.log_value(log_r[i]);
      v[i] = std::exp(eps * log_r[i]) * neg_log_phi;
    }
    bool ok = true;
    for (std::size_t i = v.size() - static_cast<std::size_t>(tail);
         i + 1 < v.size(); ++i)
      if (!(v[i + 1] < v[i])) ok = false;
    out.eps_pass.push_back(ok);
    out.pass = out.pass && ok;
    if (e + 1 == eps_grid.size()) {
      out.samples.reserve(v.size());
      for (std::size_t i = 0; i < v.size(); ++i)
        out.samples.emplace_back(std::exp(log_r[i]), v[i]);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Kernels
// ---------------------------------------------------------------------------

namespace detail {

inline void check_singular_values(const std::vector<double>& sv) {
  if (sv.empty()) throw ValidationError("empty singular value list");
  for (double a : sv)
    if (!(a > 0.0 && a <= 1.0))
      throw ValidationError("singular values must lie in (0, 1]");
}

inline void check_scale(double r) {
  if (!(r > 0.0 && r <= 1.0))
    throw ValidationError("scale r must lie in (0, 1]");
}

}  // namespace detail

/// Z_r = prod_k min(1, r / alpha_k): the measure-growth kernel of a word's
/// singular values. Equal symbols (the diagonal) take value 1 by convention.
inline double ker_z(const std::vector<double>& sv, double r) {
  detail::check_singular_values(sv);
  detail::check_scale(r);
  double z = 1.0;
  for (double a : sv) z *= std::min(1.0, r / a);
  return z;
}

inline double ker_z(const AffineIfs& ifs, const Word& prefix, double r) {
  return ker_z(singular_values(ifs, prefix), r);
}

/// Pair form with the diagonal convention Z_r(x, x) = 1.
inline double ker_z_pair(const AffineIfs& ifs, const Word& x, const Word& y,
                         double r) {
  const CommonPrefix cp = common_prefix(x, y);
  if (cp.diagonal) return 1.0;
  return ker_z(ifs, cp.prefix, r);
}

/// log of max_{u in [phi(r), r]} u^{-s} Z_u. The objective is piecewise
/// u^{c-s} with c the number of singular values above u, so the maximum sits
/// at a window endpoint or at some alpha_k inside the window.
inline double log_ker_symbolic_phi(const std::vector<double>& sv, double r,
                                   double s, const AdmissibleFn& phi) {
  detail::check_singular_values(sv);
  detail::check_scale(r);
  const double d = static_cast<double>(sv.size());
  if (!(s >= 0.0 && s <= d))
    throw ValidationError("symbolic kernel needs 0 <= s <= d");
  const double log_r = std::log(r);
  const double log_phi = phi.log_value(log_r);

  const auto objective = [&](double lu) {
    double v = -s * lu;
    for (double a : sv) v += std::min(0.0, lu - std::log(a));
    return v;
  };
  double best = std::max(objective(log_phi), objective(log_r));
  for (double a : sv) {
    const double la = std::clamp(std::log(a), log_phi, log_r);
    best = std::max(best, objective(la));
  }
  return best;
}

inline double ker_symbolic_phi(const std::vector<double>& sv, double r,
                               double s, const AdmissibleFn& phi) {
  return std::exp(log_ker_symbolic_phi(sv, r, s, phi));
}

/// Truncated cover kernel psi: phi(r)^{-s} up to phi(r), delta^{-s} across
/// the window, 0 beyond r. Non-increasing in delta.
inline double log_ker_psi(double delta, double r, double s,
                          const AdmissibleFn& phi) {
  if (!(delta >= 0.0)) throw ValidationError("distance must be >= 0");
  if (!(s >= 0.0)) throw ValidationError("exponent s must be >= 0");
  detail::check_scale(r);
  const double log_phi = phi.log_value(std::log(r));
  if (delta > r) return -std::numeric_limits<double>::infinity();
  const double log_delta = std::log(delta);  // -inf at delta = 0
  return -s * std::max(log_phi, log_delta);
}

inline double ker_psi(double delta, double r, double s,
                      const AdmissibleFn& phi) {
  return std::exp(log_ker_psi(delta, r, s, phi));
}

/// log of max_{u in [phi(r), r]} u^{-s} min{1, (u/delta)^tau}: the projection
/// profile kernel. Unimodal in log u; maximum at the clamped distance.
inline double log_ker_profile(double delta, double r, double s, double tau,
                              const AdmissibleFn& phi) {
  if (!(delta >= 0.0)) throw ValidationError("distance must be >= 0");
  if (!(tau > 0.0)) throw ValidationError("profile exponent tau must be > 0");
  if (!(s >= 0.0 && s <= tau))
    throw ValidationError("profile kernel needs 0 <= s <= tau");
  detail::check_scale(r);
  const double log_r = std::log(r);
  const double log_phi = phi.log_value(log_r);
  const double log_delta = std::log(delta);  // -inf at delta = 0

  const auto objective = [&](double lu) {
    const double gap = lu - log_delta;  // +inf at delta = 0
    return -s * lu + tau * std::min(0.0, gap);
  };
  double best = std::max(objective(log_phi), objective(log_r));
  if (std::isfinite(log_delta))
    best = std::max(best, objective(std::clamp(log_delta, log_phi, log_r)));
  return best;
}

inline double ker_profile(double delta, double r, double s, double tau,
                          const AdmissibleFn& phi) {
  return std::exp(log_ker_profile(delta, r, s, tau, phi));
}

// Convenience wrappers for the classical theta-parameterization. They build
// the power window and call the same code path, so results are bit-identical
// with explicit power(theta) usage.
inline double ker_theta(const std::vector<double>& sv, double r, double s,
                        double theta) {
  return ker_symbolic_phi(sv, r, s, AdmissibleFn::power(theta));
}
inline double ker_psi_theta(double delta, double r, double s, double theta) {
  return ker_psi(delta, r, s, AdmissibleFn::power(theta));
}
inline double ker_profile_theta(double delta, double r, double s, double tau,
                                double theta) {
  return ker_profile(delta, r, s, tau, AdmissibleFn::power(theta));
}

}  // namespace fractdim

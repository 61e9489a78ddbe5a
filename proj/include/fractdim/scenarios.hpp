#pragma once

// The three randomized settings: translated self-affine coding maps,
// orthogonal projections onto random subspaces, and fractional Brownian
// fields; plus Monte Carlo transversality checkers that compare empirical
// closeness probabilities against the corresponding kernel bounds.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "fractdim/cloud.hpp"
#include "fractdim/common.hpp"
#include "fractdim/kernels.hpp"
#include "fractdim/rng.hpp"
#include "fractdim/symbolic.hpp"

namespace fractdim {

// Uniform draw from the closed ball of radius rho in R^(d*m): a Gaussian
// direction scaled by rho * U^(1/(d*m)).
inline Eigen::VectorXd sample_translation(double rho, int d, int m,
                                          RngStream& rng) {
  if (!(rho > 0.0)) throw ValidationError("ball radius must be positive");
  if (d < 1 || m < 1) throw ValidationError("dimensions must be >= 1");
  const int n = d * m;
  Eigen::VectorXd g(n);
  double norm = 0.0;
  do {
    for (int i = 0; i < n; ++i) g(i) = rng.gaussian();
    norm = g.norm();
  } while (!(norm > 0.0));
  const double radius = rho * std::pow(rng.uniform(), 1.0 / n);
  return g * (radius / norm);
}

// Split a flat translation vector in R^(d*m) into the m per-map offsets.
inline std::vector<Eigen::VectorXd> split_translations(
    const Eigen::VectorXd& a, int d, int m) {
  if (a.size() != static_cast<long>(d) * m)
    throw ValidationError("translation vector has the wrong length");
  std::vector<Eigen::VectorXd> out;
  for (int k = 0; k < m; ++k) out.push_back(a.segment(k * d, d));
  return out;
}

// Cloud of coding points, one per refined leaf word, with the truncation
// tail bound attached as the cloud resolution.
inline PointCloud project_selfaffine(const AffineIfs& ifs,
                                     const SymbolicSet& set,
                                     const std::vector<Eigen::VectorXd>& a,
                                     const RefineStop& stop,
                                     long leaf_cap = kDefaultLeafCap) {
  const SymbolicSet refined = refine_to_depth(ifs, set, stop, leaf_cap);
  PointCloud cloud;
  cloud.pts = Eigen::MatrixXd(static_cast<long>(refined.words.size()), ifs.d);
  double tail = 0.0;
  for (std::size_t i = 0; i < refined.words.size(); ++i) {
    const CodingPoint cp = coding_point(ifs, refined.words[i], a);
    cloud.pts.row(static_cast<long>(i)) = cp.point.transpose();
    tail = std::max(tail, cp.truncation_error);
  }
  cloud.resolution = tail;
  return cloud;
}

// ---------------------------------------------------------------------------
// Random subspaces.

struct ProjectionFrame {
  Eigen::MatrixXd v;  // d x m, orthonormal columns

  Eigen::MatrixXd projector() const { return v * v.transpose(); }

  void validate() const {
    if (v.rows() < 2 || v.cols() < 1 || v.cols() >= v.rows())
      throw ValidationError("frame must be d x m with 1 <= m < d");
    const Eigen::MatrixXd gram =
        v.transpose() * v - Eigen::MatrixXd::Identity(v.cols(), v.cols());
    if (gram.cwiseAbs().maxCoeff() > 1e-12)
      throw ValidationError("frame columns are not orthonormal");
  }
};

// Orthonormalized standard-Gaussian matrix; the resulting subspace law is
// rotation invariant. Signs are fixed so the frame is a deterministic
// function of the Gaussian draw.
inline ProjectionFrame sample_grassmannian(int d, int m, RngStream& rng) {
  if (!(1 <= m && m < d))
    throw ValidationError("subspace sampling requires 1 <= m < d");
  for (int attempt = 0; attempt < 100; ++attempt) {
    Eigen::MatrixXd g(d, m);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < m; ++j) g(i, j) = rng.gaussian();
    const Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
    Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(d, m);
    const Eigen::MatrixXd r =
        qr.matrixQR().topRows(m).triangularView<Eigen::Upper>();
    bool degenerate = false;
    for (int j = 0; j < m; ++j) {
      if (std::abs(r(j, j)) < 1e-12) {
        degenerate = true;
        break;
      }
      if (r(j, j) < 0.0) q.col(j) = -q.col(j);
    }
    if (degenerate) continue;
    ProjectionFrame frame{std::move(q)};
    frame.validate();
    return frame;
  }
  throw NumericError("subspace sampling kept drawing degenerate frames");
}

// Coordinates of the projected cloud in the subspace basis. Projection is
// 1-Lipschitz, so the resolution tag remains valid.
inline PointCloud project_cloud(const PointCloud& cloud,
                                const ProjectionFrame& frame) {
  cloud.validate();
  frame.validate();
  if (cloud.dim() != frame.v.rows())
    throw ValidationError("cloud dimension does not match the frame");
  PointCloud out;
  out.pts = cloud.pts * frame.v;
  out.resolution = cloud.resolution;
  return out;
}

// ---------------------------------------------------------------------------
// Fractional Brownian fields.

struct FbmSample {
  Eigen::MatrixXd base;   // n x d
  Eigen::MatrixXd image;  // n x m
  double alpha = 0.0;
  std::uint64_t seed = 0;
};

// Dense-factorization sampler for the index-alpha fractional field with
// B(0) = 0: Cov(B(x), B(y)) = (|x|^2a + |y|^2a - |x-y|^2a) / 2. The
// factorization is done once; draws reuse it. If the origin is among the
// points its image is pinned to zero exactly (its covariance row vanishes,
// so it is excluded from the factorization).
class FbmSampler {
 public:
  FbmSampler(Eigen::MatrixXd points, double alpha, long budget = 4000)
      : base_(std::move(points)), alpha_(alpha) {
    if (!(alpha > 0.0 && alpha < 1.0))
      throw ValidationError("fbm index alpha must lie in (0, 1)");
    const long n = base_.rows();
    if (n < 1 || base_.cols() < 1)
      throw ValidationError("fbm needs a non-empty base point set");
    if (!base_.allFinite())
      throw ValidationError("fbm base points must be finite");
    if (n > budget)
      throw ResourceCapError("fbm base set exceeds the factorization budget");

    for (long i = 0; i < n; ++i)
      if (base_.row(i).norm() == 0.0) anchor_ = i;

    std::vector<long> keep;
    for (long i = 0; i < n; ++i)
      if (i != anchor_) keep.push_back(i);
    const long k = static_cast<long>(keep.size());
    keep_ = keep;

    Eigen::MatrixXd cov(k, k);
    for (long a = 0; a < k; ++a) {
      const auto xa = base_.row(keep[a]);
      cov(a, a) = std::pow(xa.norm(), 2.0 * alpha_);
      for (long b = 0; b < a; ++b) {
        const auto xb = base_.row(keep[b]);
        const double gap = (xa - xb).norm();
        if (gap == 0.0)
          throw ValidationError("fbm base points must be distinct");
        cov(a, b) = cov(b, a) =
            0.5 * (std::pow(xa.norm(), 2.0 * alpha_) +
                   std::pow(xb.norm(), 2.0 * alpha_) -
                   std::pow(gap, 2.0 * alpha_));
      }
    }

    const double scale = k > 0 ? cov.diagonal().maxCoeff() : 0.0;
    for (double jitter : {0.0, 1e-12, 1e-10, 1e-8}) {
      Eigen::MatrixXd work = cov;
      work.diagonal().array() += jitter * scale;
      const Eigen::LLT<Eigen::MatrixXd> llt(work);
      if (llt.info() == Eigen::Success) {
        chol_ = llt.matrixL();
        return;
      }
    }
    throw NumericError("fbm covariance failed to factorize at max jitter");
  }

  const Eigen::MatrixXd& base() const { return base_; }
  double alpha() const { return alpha_; }

  // m independent coordinates in one draw.
  FbmSample draw(int m, RngStream& rng) const {
    if (m < 1) throw ValidationError("fbm needs m >= 1 coordinates");
    const long k = static_cast<long>(keep_.size());
    Eigen::MatrixXd z(k, m);
    for (int c = 0; c < m; ++c)
      for (long i = 0; i < k; ++i) z(i, c) = rng.gaussian();
    const Eigen::MatrixXd img = chol_ * z;
    FbmSample out;
    out.base = base_;
    out.image = Eigen::MatrixXd::Zero(base_.rows(), m);
    for (long i = 0; i < k; ++i) out.image.row(keep_[i]) = img.row(i);
    out.alpha = alpha_;
    out.seed = rng.seed();
    return out;
  }

 private:
  Eigen::MatrixXd base_;
  double alpha_;
  long anchor_ = -1;
  std::vector<long> keep_;
  Eigen::MatrixXd chol_;
};

// The image points as a cloud. A base set faithful down to scale eps is
// mapped through an alpha-Holder field, so the image is trusted down to
// roughly eps^alpha.
inline PointCloud fbm_image_cloud(const FbmSample& sample,
                                  double base_resolution = 0.0) {
  PointCloud cloud;
  cloud.pts = sample.image;
  double eps = base_resolution;
  if (eps <= 0.0) {
    PointCloud base;
    base.pts = sample.base;
    eps = estimate_resolution(base);
  }
  cloud.resolution = std::pow(eps, sample.alpha);
  return cloud;
}

// ---------------------------------------------------------------------------
// Transversality checks.

struct TransversalityRow {
  double r = 0.0;
  double p_hat = 0.0;   // empirical probability of |image gap| <= r
  double kernel = 0.0;  // the setting's kernel bound
  double ratio = 0.0;   // p_hat / kernel
  long n_samples = 0;
  std::uint64_t seed = 0;
};

struct TransversalitySetting {
  enum class Kind { selfaffine, grassmann, fbm };
  Kind kind = Kind::fbm;

  // selfaffine
  AffineIfs ifs;
  double rho = 0.0;
  Word word_x, word_y;

  // grassmann / fbm
  int d = 0, m = 0;
  Eigen::VectorXd x, y;
  double alpha = 0.0;

  static TransversalitySetting selfaffine(AffineIfs system, double rho,
                                          Word x, Word y) {
    TransversalitySetting s;
    s.kind = Kind::selfaffine;
    s.ifs = std::move(system);
    s.rho = rho;
    s.word_x = std::move(x);
    s.word_y = std::move(y);
    return s;
  }

  static TransversalitySetting grassmann(int d, int m, Eigen::VectorXd x,
                                         Eigen::VectorXd y) {
    TransversalitySetting s;
    s.kind = Kind::grassmann;
    s.d = d;
    s.m = m;
    s.x = std::move(x);
    s.y = std::move(y);
    return s;
  }

  static TransversalitySetting fbm(double alpha, int m, Eigen::VectorXd x,
                                   Eigen::VectorXd y) {
    TransversalitySetting s;
    s.kind = Kind::fbm;
    s.alpha = alpha;
    s.m = m;
    s.x = std::move(x);
    s.y = std::move(y);
    s.d = static_cast<int>(s.x.size());
    return s;
  }

  const char* kind_name() const {
    switch (kind) {
      case Kind::selfaffine: return "selfaffine";
      case Kind::grassmann: return "grassmann";
      default: return "fbm";
    }
  }
};

namespace detail {

// Longest common prefix of the periodic extensions of two finite words.
// Words whose extensions agree beyond the cap describe the same point.
inline Word periodic_common_prefix(const Word& x, const Word& y,
                                   std::size_t cap = 256) {
  if (x.empty() || y.empty())
    throw ValidationError("transversality words must be non-empty");
  Word prefix;
  for (std::size_t k = 0; k < cap; ++k) {
    const int sx = x[k % x.size()], sy = y[k % y.size()];
    if (sx != sy) return prefix;
    prefix.push_back(sx);
  }
  throw ValidationError(
      "the two periodic words agree to great depth; pick distinct words");
}

inline double geo_counting_kernel(double r, double exponent, double gap) {
  // min(1, (r/gap)^exponent) evaluated in logs.
  return std::exp(std::min(0.0, exponent * (std::log(r) - std::log(gap))));
}

}  // namespace detail

// Empirical closeness probabilities of the two marked points' images at each
// scale r, against the setting's kernel bound.
inline std::vector<TransversalityRow> transversality_check(
    const TransversalitySetting& setting, const std::vector<double>& r_grid,
    long n_samples, RngStream& rng) {
  if (r_grid.empty()) throw ValidationError("empty scale grid");
  for (double r : r_grid)
    if (!(r > 0.0)) throw ValidationError("scales must be positive");
  if (n_samples < 1) throw ValidationError("need at least one sample");

  std::vector<double> gaps;
  gaps.reserve(n_samples);

  std::vector<TransversalityRow> rows;
  const auto finish = [&](const std::vector<double>& kernels) {
    for (std::size_t k = 0; k < r_grid.size(); ++k) {
      TransversalityRow row;
      row.r = r_grid[k];
      long count = 0;
      for (double g : gaps)
        if (g <= r_grid[k]) ++count;
      row.p_hat = static_cast<double>(count) / n_samples;
      row.kernel = kernels[k];
      row.ratio = row.p_hat / row.kernel;
      row.n_samples = n_samples;
      row.seed = rng.seed();
      rows.push_back(row);
    }
    return rows;
  };

  switch (setting.kind) {
    case TransversalitySetting::Kind::selfaffine: {
      validate_ifs(setting.ifs.d, setting.ifs.maps);
      if (!setting.ifs.strict_half)
        throw ValidationError(
            "self-affine transversality needs all contraction norms < 1/2");
      if (!(setting.rho > 0.0))
        throw ValidationError("ball radius must be positive");
      check_symbols(setting.ifs, setting.word_x);
      check_symbols(setting.ifs, setting.word_y);
      const Word prefix =
          detail::periodic_common_prefix(setting.word_x, setting.word_y);
      const std::vector<double> sv = singular_values(setting.ifs, prefix);

      const int d = setting.ifs.d;
      const int m = setting.ifs.alphabet();
      const Eigen::MatrixXd ax = word_product(setting.ifs, setting.word_x);
      const Eigen::MatrixXd ay = word_product(setting.ifs, setting.word_y);
      const Eigen::PartialPivLU<Eigen::MatrixXd> lux(
          Eigen::MatrixXd::Identity(d, d) - ax);
      const Eigen::PartialPivLU<Eigen::MatrixXd> luy(
          Eigen::MatrixXd::Identity(d, d) - ay);
      for (long i = 0; i < n_samples; ++i) {
        const auto a = split_translations(
            sample_translation(setting.rho, d, m, rng), d, m);
        const Eigen::VectorXd bx = coding_point(setting.ifs, setting.word_x,
                                                a).point;
        const Eigen::VectorXd by = coding_point(setting.ifs, setting.word_y,
                                                a).point;
        gaps.push_back((lux.solve(bx) - luy.solve(by)).norm());
      }
      std::vector<double> kernels;
      for (double r : r_grid) kernels.push_back(ker_z(sv, r));
      return finish(kernels);
    }
    case TransversalitySetting::Kind::grassmann: {
      if (setting.x.size() != setting.d || setting.y.size() != setting.d)
        throw ValidationError("points must live in R^d");
      const Eigen::VectorXd w = setting.x - setting.y;
      const double gap = w.norm();
      if (!(gap > 0.0)) throw ValidationError("the two points must differ");
      for (long i = 0; i < n_samples; ++i) {
        const ProjectionFrame frame =
            sample_grassmannian(setting.d, setting.m, rng);
        gaps.push_back((frame.v.transpose() * w).norm());
      }
      std::vector<double> kernels;
      for (double r : r_grid)
        kernels.push_back(detail::geo_counting_kernel(
            r, static_cast<double>(setting.m), gap));
      return finish(kernels);
    }
    default: {
      if (!(setting.alpha > 0.0 && setting.alpha < 1.0))
        throw ValidationError("fbm index alpha must lie in (0, 1)");
      if (setting.x.size() != setting.y.size() || setting.x.size() < 1)
        throw ValidationError("points must share a dimension");
      const double gap = (setting.x - setting.y).norm();
      if (!(gap > 0.0)) throw ValidationError("the two points must differ");
      // Increments are exactly N(0, gap^(2 alpha) I_m); no factorization.
      const double sd = std::pow(gap, setting.alpha);
      for (long i = 0; i < n_samples; ++i) {
        double sq = 0.0;
        for (int c = 0; c < setting.m; ++c) {
          const double g = rng.gaussian() * sd;
          sq += g * g;
        }
        gaps.push_back(std::sqrt(sq));
      }
      std::vector<double> kernels;
      for (double r : r_grid)
        kernels.push_back(detail::geo_counting_kernel(
            std::pow(r, 1.0 / setting.alpha),
            setting.alpha * static_cast<double>(setting.m), gap));
      return finish(kernels);
    }
  }
}

}  // namespace fractdim

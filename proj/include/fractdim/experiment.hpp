#pragma once

// Config-driven experiment runner. A single JSON/TOML file selects one of
// six scenarios, the runner writes three artifacts into the output
// directory (results.csv, manifest.json, summary.txt) and reports an exit
// code: 0 all configured assertions passed, 1 an assertion failed,
// 2 configuration problem, 3 a resource or numeric cap was hit.

#include <json.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "fractdim/capacity.hpp"
#include "fractdim/cloud.hpp"
#include "fractdim/common.hpp"
#include "fractdim/covering.hpp"
#include "fractdim/dimension.hpp"
#include "fractdim/io.hpp"
#include "fractdim/kernels.hpp"
#include "fractdim/rng.hpp"
#include "fractdim/scenarios.hpp"
#include "fractdim/symbolic.hpp"
#include "fractdim/toml_lite.hpp"

namespace fractdim {

namespace expdetail {

// --------------------------------------------------------------------------
// JSON field access that surfaces every problem as ConfigError.

inline const nlohmann::json* find(const nlohmann::json& j,
                                  const std::string& key) {
  if (!j.is_object()) return nullptr;
  const auto it = j.find(key);
  return it == j.end() ? nullptr : &*it;
}

template <class T>
inline T as(const nlohmann::json& j, const std::string& key) {
  try {
    return j.get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("field '" + key + "' has the wrong type");
  }
}

template <class T>
inline T get_or(const nlohmann::json& j, const std::string& key, T fallback) {
  const auto* p = find(j, key);
  return p ? as<T>(*p, key) : fallback;
}

template <class T>
inline T require(const nlohmann::json& j, const std::string& key) {
  const auto* p = find(j, key);
  if (!p) throw ConfigError("missing required field '" + key + "'");
  return as<T>(*p, key);
}

}  // namespace expdetail

// --------------------------------------------------------------------------
// Configuration.

inline const std::vector<std::string>& known_scenarios() {
  static const std::vector<std::string> names = {
      "capdim",         "interdim",           "compare_selfaffine",
      "compare_projection", "compare_fbm",    "transversality"};
  return names;
}

struct ExperimentConfig {
  nlohmann::json doc;       // normalized: defaults and overrides inlined
  std::string scenario;
  std::uint64_t seed = 1;
  std::string out_dir = "out";
  std::string base_dir = ".";  // directory of the config file

  static ExperimentConfig from_json(nlohmann::json j,
                                    std::string base = ".") {
    ExperimentConfig cfg;
    if (!j.is_object())
      throw ConfigError("configuration must be a table of keys");
    cfg.doc = std::move(j);
    cfg.base_dir = std::move(base);
    cfg.scenario = expdetail::require<std::string>(cfg.doc, "scenario");
    const auto& names = known_scenarios();
    if (std::find(names.begin(), names.end(), cfg.scenario) == names.end()) {
      std::string all;
      for (const auto& n : names) all += (all.empty() ? "" : ", ") + n;
      throw ConfigError("unknown scenario '" + cfg.scenario +
                        "' (expected one of: " + all + ")");
    }
    cfg.seed = expdetail::get_or<std::uint64_t>(cfg.doc, "seed", 1);
    cfg.out_dir = expdetail::get_or<std::string>(cfg.doc, "out", "out");
    cfg.doc["seed"] = cfg.seed;
    cfg.doc["out"] = cfg.out_dir;
    // Data paths are pinned to absolute form so the manifest alone suffices
    // to reproduce the run from any working directory.
    for (const char* table : {"cloud", "points"}) {
      if (auto* t = cfg.doc.contains(table) ? &cfg.doc[table] : nullptr) {
        if (t->is_object() && t->contains("path")) {
          namespace fs = std::filesystem;
          const std::string p = expdetail::as<std::string>((*t)["path"],
                                                           "path");
          if (!fs::path(p).is_absolute())
            (*t)["path"] = (fs::path(cfg.base_dir) / p).string();
        }
      }
    }
    return cfg;
  }

  static ExperimentConfig from_file(const std::string& path) {
    namespace fs = std::filesystem;
    const auto dir = fs::path(path).parent_path();
    return from_json(load_config_file(path),
                     dir.empty() ? "." : dir.string());
  }

  void override_seed(std::uint64_t s) {
    seed = s;
    doc["seed"] = s;
  }
  void override_out(std::string o) {
    out_dir = std::move(o);
    doc["out"] = out_dir;
  }
};

// --------------------------------------------------------------------------
// Two-route comparison bookkeeping.

struct ComparisonSample {
  std::string label;
  double cover_dim = 0.0;
  bool adversarial = false;  // checked for the hard bound, excluded from
                             // the genericity statistics
};

struct ComparisonReport {
  struct Row {
    long index = 0;
    std::string label;
    double cover_dim = 0.0;
    double gap = 0.0;  // cover_dim - potential_dim
    bool within_slack = false;
    bool universal_ok = false;  // cover_dim <= potential_dim + slack
    bool adversarial = false;
  };
  double potential_dim = 0.0;
  double slack = 0.1;
  double genericity_target = 0.8;
  std::vector<Row> rows;
  bool universal_ok = true;          // hard: must hold for every sample
  double genericity_fraction = 0.0;  // over non-adversarial samples
  bool genericity_ok = false;        // reported, not enforced
  double median_abs_gap = 0.0;       // over non-adversarial samples
};

inline ComparisonReport make_comparison_report(
    double potential_dim, const std::vector<ComparisonSample>& samples,
    double slack, double genericity_target) {
  if (!(slack >= 0.0)) throw ValidationError("slack must be non-negative");
  if (!(genericity_target >= 0.0 && genericity_target <= 1.0))
    throw ValidationError("genericity target must lie in [0, 1]");
  ComparisonReport rep;
  rep.potential_dim = potential_dim;
  rep.slack = slack;
  rep.genericity_target = genericity_target;
  std::vector<double> generic_gaps;
  long within = 0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    ComparisonReport::Row row;
    row.index = static_cast<long>(i);
    row.label = samples[i].label;
    row.cover_dim = samples[i].cover_dim;
    row.adversarial = samples[i].adversarial;
    row.gap = row.cover_dim - potential_dim;
    row.within_slack = std::abs(row.gap) <= slack;
    row.universal_ok = row.cover_dim <= potential_dim + slack;
    rep.universal_ok = rep.universal_ok && row.universal_ok;
    if (!row.adversarial) {
      generic_gaps.push_back(std::abs(row.gap));
      if (row.within_slack) ++within;
    }
    rep.rows.push_back(std::move(row));
  }
  if (generic_gaps.empty()) {
    rep.genericity_fraction = 1.0;
    rep.median_abs_gap = 0.0;
  } else {
    rep.genericity_fraction =
        static_cast<double>(within) / static_cast<double>(generic_gaps.size());
    std::sort(generic_gaps.begin(), generic_gaps.end());
    const std::size_t n = generic_gaps.size();
    rep.median_abs_gap = (n % 2 == 1)
                             ? generic_gaps[n / 2]
                             : 0.5 * (generic_gaps[n / 2 - 1] +
                                      generic_gaps[n / 2]);
  }
  rep.genericity_ok = rep.genericity_fraction >= genericity_target - 1e-12;
  return rep;
}

// --------------------------------------------------------------------------
// Pieces assembled from the config document.

namespace expdetail {

inline AdmissibleFn phi_from_config(const nlohmann::json& doc) {
  if (const auto* p = find(doc, "phi")) return phi_from_json(*p);
  if (const auto* t = find(doc, "theta"))
    return AdmissibleFn::power(as<double>(*t, "theta"));
  throw ConfigError("need a [phi] table or a top-level theta");
}

inline AffineIfs ifs_from_config(const nlohmann::json& doc) {
  const auto* t = find(doc, "ifs");
  if (!t) throw ConfigError("missing required table [ifs]");
  return ifs_from_json(*t);
}

inline SymbolicSet set_from_config(const nlohmann::json& doc, int alphabet) {
  if (const auto* t = find(doc, "ifs"))
    if (const auto* s = find(*t, "set")) return set_from_json(*s, alphabet);
  return SymbolicSet::full_shift(alphabet);
}

inline std::vector<Eigen::VectorXd> translations_from_config(
    const nlohmann::json& doc, const AffineIfs& ifs) {
  const auto* t = find(doc, "ifs");
  const auto* tr = t ? find(*t, "translations") : nullptr;
  if (!tr)
    throw ConfigError("missing required field 'translations' in [ifs]");
  const auto rows = as<std::vector<std::vector<double>>>(*tr, "translations");
  if (static_cast<int>(rows.size()) != ifs.alphabet())
    throw ConfigError("need one translation per map");
  std::vector<Eigen::VectorXd> out;
  for (const auto& row : rows) {
    if (static_cast<int>(row.size()) != ifs.d)
      throw ConfigError("translation length must equal the dimension");
    Eigen::VectorXd v(ifs.d);
    for (int i = 0; i < ifs.d; ++i) v(i) = row[static_cast<std::size_t>(i)];
    out.push_back(std::move(v));
  }
  return out;
}

inline SlopeMode mode_from_string(const std::string& s) {
  if (s == "lower") return SlopeMode::lower;
  if (s == "upper") return SlopeMode::upper;
  throw ConfigError("estimator mode must be 'lower' or 'upper'");
}

inline DimensionConfig estimator_from_config(const nlohmann::json& doc,
                                             double default_bracket_hi) {
  DimensionConfig cfg;
  cfg.bracket_hi = default_bracket_hi;
  if (const auto* est = find(doc, "estimator")) {
    cfg.mode = mode_from_string(
        get_or<std::string>(*est, "mode", "lower"));
    cfg.tol_s = get_or<double>(*est, "tol_s", cfg.tol_s);
    cfg.window = get_or<int>(*est, "window", cfg.window);
    cfg.bracket_lo = get_or<double>(*est, "bracket_lo", cfg.bracket_lo);
    cfg.bracket_hi = get_or<double>(*est, "bracket_hi", cfg.bracket_hi);
  }
  return cfg;
}

inline CapacityOptions capacity_opts_from_config(const nlohmann::json& doc) {
  CapacityOptions opts;
  if (const auto* caps = find(doc, "caps")) {
    opts.leaf_cap = get_or<long>(*caps, "leaf_cap", opts.leaf_cap);
    opts.max_matrix_n =
        get_or<long>(*caps, "max_matrix_n", opts.max_matrix_n);
  }
  return opts;
}

inline CoveringOptions covering_opts_from_config(const nlohmann::json& doc) {
  CoveringOptions opts;
  if (const auto* caps = find(doc, "caps"))
    opts.max_total_cells =
        get_or<long>(*caps, "max_total_cells", opts.max_total_cells);
  return opts;
}

// Scale-grid resolution: an explicit list of scales, a dyadic ladder, a
// fully specified geometric grid, or r_max/count with the finest scale
// chosen by the route-specific suggestion.
inline RGrid grid_from_spec(
    const nlohmann::json* spec, double def_r_max, int def_count,
    const std::function<RGrid(double, int, double)>& auto_grid) {
  if (spec && !spec->is_object())
    throw ConfigError("grid spec must be a table");
  if (spec) {
    if (const auto* r = find(*spec, "r")) {
      RGrid g;
      g.r = as<std::vector<double>>(*r, "r");
      g.validate();
      return g;
    }
    if (find(*spec, "k_min") || find(*spec, "k_max"))
      return RGrid::dyadic(require<int>(*spec, "k_min"),
                           require<int>(*spec, "k_max"));
  }
  const double r_max =
      spec ? get_or<double>(*spec, "r_max", def_r_max) : def_r_max;
  const int count = spec ? get_or<int>(*spec, "count", def_count) : def_count;
  const double safety = spec ? get_or<double>(*spec, "safety", 4.0) : 4.0;
  if (spec && find(*spec, "r_min"))
    return RGrid::geometric(r_max, require<double>(*spec, "r_min"), count);
  return auto_grid(r_max, count, safety);
}

// Auto-grid for cloud-based curves.  A cloud whose points all coincide
// (e.g. a translation vector collapsing every coding point onto one spot)
// has no usable inter-point resolution, but its curves are exact at every
// scale, so a plain geometric ladder is safe there.
inline RGrid cloud_auto_grid(const PointCloud& cloud, const AdmissibleFn& phi,
                             int count, double r_max, double safety) {
  bool distinct = false;
  for (long i = 1; i < cloud.size() && !distinct; ++i)
    distinct = (cloud.pts.row(i) - cloud.pts.row(0)).norm() > 0.0;
  if (cloud.resolution <= 0.0 && !distinct)
    return RGrid::geometric(r_max, r_max * std::pow(2.0, -(count - 1)), count);
  return suggest_cloud_rgrid(cloud, phi, count, r_max, safety);
}

// Grid table for a comparison route, falling back to the shared [grid].
inline const nlohmann::json* route_grid(const nlohmann::json& doc,
                                        const char* specific) {
  if (const auto* g = find(doc, specific)) return g;
  return find(doc, "grid");
}

inline PointCloud cloud_from_config(const ExperimentConfig& cfg) {
  const auto* c = find(cfg.doc, "cloud");
  if (!c) throw ConfigError("missing required table [cloud]");
  const std::string source = get_or<std::string>(*c, "source", "csv");
  if (source == "csv") {
    const std::string path = require<std::string>(*c, "path");
    return read_point_cloud_csv(path, get_or<double>(*c, "resolution", 0.0));
  }
  if (source == "ifs") {
    const AffineIfs ifs = ifs_from_config(cfg.doc);
    const SymbolicSet set = set_from_config(cfg.doc, ifs.alphabet());
    const auto a = translations_from_config(cfg.doc, ifs);
    RefineStop stop = find(*c, "depth")
                          ? RefineStop::depth(require<int>(*c, "depth"))
                          : RefineStop::threshold(
                                get_or<double>(*c, "threshold", 1e-3));
    const long leaf_cap = capacity_opts_from_config(cfg.doc).leaf_cap;
    return project_selfaffine(ifs, set, a, stop, leaf_cap);
  }
  throw ConfigError("cloud source must be 'csv' or 'ifs'");
}

inline RefineStop cloud_stop_from_config(const nlohmann::json& doc) {
  const auto* c = find(doc, "cloud");
  if (c && find(*c, "depth")) return RefineStop::depth(require<int>(*c, "depth"));
  const double thr = c ? get_or<double>(*c, "threshold", 1e-3) : 1e-3;
  return RefineStop::threshold(thr);
}

inline std::string fmt_bool(bool b) { return b ? "1" : "0"; }

inline std::string pad2(long k) {
  return (k < 10 ? "0" : "") + std::to_string(k);
}

struct Artifacts {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> extra_outputs;  // paths relative to the out dir
};

struct Check {
  std::string name;
  bool pass = false;
  std::string detail;
  bool hard = true;  // hard checks drive the exit code; soft ones report
};

}  // namespace expdetail

struct RunOutcome {
  int exit_code = 0;
  std::string out_dir;
  double headline = std::numeric_limits<double>::quiet_NaN();
  bool has_report = false;
  ComparisonReport report;
  std::vector<std::string> summary;  // the lines written to summary.txt
};

// --------------------------------------------------------------------------
// Scenario bodies.

namespace expdetail {

inline void summarize_estimate(RunOutcome& out, const DimensionEstimate& est,
                               const RGrid& grid) {
  out.summary.push_back(
      "estimate: s_star = " + format_float17(est.s_star) + " (mode " +
      slope_mode_name(est.mode) + ", " +
      (est.bracketed ? "bracketed" : "not bracketed") +
      (est.flag.empty() ? "" : ", flag " + est.flag) + ")");
  out.summary.push_back("scales: " + std::to_string(grid.r.size()) +
                        " from " + format_float17(grid.r.front()) + " to " +
                        format_float17(grid.r.back()));
}

inline void capacity_rows_to_csv(const CapacityDimensionResult& res,
                                 Artifacts& art) {
  art.header = {"family", "r",   "s",     "energy",
                "capacity", "gap", "iters", "converged"};
  for (const auto& row : res.rows)
    art.rows.push_back({res.kernel_family, format_float17(row.r),
                        format_float17(row.s), format_float17(row.energy),
                        format_float17(row.capacity),
                        format_float17(row.gap),
                        std::to_string(row.iterations),
                        fmt_bool(row.converged)});
}

inline void check_convergence(const CapacityDimensionResult& res,
                              std::vector<Check>& checks) {
  bool all = true;
  for (const auto& row : res.rows) all = all && row.converged;
  checks.push_back({"solver_converged", all,
                    all ? "every equilibrium solve certified"
                        : "an equilibrium solve hit the iteration cap",
                    true});
}

inline void run_capdim(const ExperimentConfig& cfg, RunOutcome& out,
                       Artifacts& art, std::vector<Check>& checks) {
  const AdmissibleFn phi = phi_from_config(cfg.doc);
  const AffineIfs ifs = ifs_from_config(cfg.doc);
  const SymbolicSet set = set_from_config(cfg.doc, ifs.alphabet());
  const CapacityOptions opts = capacity_opts_from_config(cfg.doc);
  const DimensionConfig dim_cfg =
      estimator_from_config(cfg.doc, static_cast<double>(ifs.d));
  const RGrid grid = grid_from_spec(
      find(cfg.doc, "grid"), 0.25, 8,
      [&](double r_max, int count, double) {
        if (ifs.alphabet() < 2)
          throw ConfigError(
              "automatic scale grids need >= 2 maps; give r or r_min");
        return suggest_symbolic_rgrid(ifs, phi, count, r_max,
                                      opts.max_matrix_n);
      });
  const auto res =
      capacity_dimension_symbolic(ifs, set, phi, grid, dim_cfg, opts);
  out.headline = res.estimate.s_star;
  out.summary.push_back("phi: " + phi.name());
  summarize_estimate(out, res.estimate, grid);
  capacity_rows_to_csv(res, art);
  check_convergence(res, checks);
}

inline PointCloud certificate_subsample(const PointCloud& cloud, long cap) {
  if (cloud.size() <= cap) return cloud;
  PointCloud sub;
  const long stride = (cloud.size() + cap - 1) / cap;
  const long n = (cloud.size() + stride - 1) / stride;
  sub.pts = Eigen::MatrixXd(n, cloud.dim());
  for (long i = 0; i < n; ++i) sub.pts.row(i) = cloud.pts.row(i * stride);
  sub.resolution = cloud.resolution;
  return sub;
}

inline void run_interdim(const ExperimentConfig& cfg, RunOutcome& out,
                         Artifacts& art, std::vector<Check>& checks) {
  (void)checks;
  const AdmissibleFn phi = phi_from_config(cfg.doc);
  const PointCloud cloud = cloud_from_config(cfg);
  const CoveringOptions opts = covering_opts_from_config(cfg.doc);
  const DimensionConfig dim_cfg =
      estimator_from_config(cfg.doc, static_cast<double>(cloud.dim()));
  const RGrid grid = grid_from_spec(
      find(cfg.doc, "grid"), 0.25, 8,
      [&](double r_max, int count, double safety) {
        return cloud_auto_grid(cloud, phi, count, r_max, safety);
      });
  const auto res = phi_dimension(cloud, phi, grid, dim_cfg, opts);
  out.headline = res.estimate.s_star;
  out.summary.push_back("phi: " + phi.name());
  out.summary.push_back("cloud: " + std::to_string(cloud.size()) +
                        " points in R^" + std::to_string(cloud.dim()));
  summarize_estimate(out, res.estimate, grid);

  // One row per scale at the final exponent, with the dual certificate
  // evaluated on a bounded subsample (a valid lower bound for the full
  // cloud, since any cover of the cloud covers the subsample).
  const double s_star = res.estimate.s_star;
  const PointCloud sub = certificate_subsample(cloud, 2000);
  const ProbabilityVector uniform(
      Eigen::VectorXd::Constant(sub.size(), 1.0 / sub.size()));
  art.header = {"r",
                "s",
                "upper_bound",
                "lower_certificate",
                "single_scale_floor",
                "cover_size"};
  for (double r : grid.r) {
    const auto sum = cover_sum(cloud, r, s_star, phi, opts);
    const auto cert = cover_lower_certificate(sub, uniform, r, s_star, phi);
    long cover_size = 0;
    for (const auto& h : sum.histogram) cover_size += h.count;
    art.rows.push_back({format_float17(r), format_float17(s_star),
                        format_float17(sum.value),
                        format_float17(cert.lower),
                        format_float17(sum.single_scale_floor),
                        std::to_string(cover_size)});
  }
}

struct CompareParams {
  long samples = 0;
  double slack = 0.1;
  double genericity_target = 0.8;
};

inline CompareParams compare_params(const nlohmann::json& doc,
                                    long default_samples) {
  CompareParams p;
  p.samples = default_samples;
  if (const auto* c = find(doc, "compare")) {
    p.samples = get_or<long>(*c, "samples", default_samples);
    p.slack = get_or<double>(*c, "slack", p.slack);
    p.genericity_target =
        get_or<double>(*c, "genericity_target", p.genericity_target);
  }
  if (p.samples < 1) throw ConfigError("need at least one sample");
  return p;
}

inline void finish_comparison(const ExperimentConfig& cfg, RunOutcome& out,
                              Artifacts& art, std::vector<Check>& checks,
                              double potential_dim,
                              const std::vector<ComparisonSample>& samples,
                              const CompareParams& params) {
  (void)cfg;
  out.report = make_comparison_report(potential_dim, samples, params.slack,
                                      params.genericity_target);
  out.has_report = true;
  out.headline = potential_dim;

  art.header = {"sample",       "label",        "cover_dim",
                "potential_dim", "gap",          "within_slack",
                "universal_ok",  "adversarial"};
  for (const auto& row : out.report.rows)
    art.rows.push_back({std::to_string(row.index), row.label,
                        format_float17(row.cover_dim),
                        format_float17(potential_dim),
                        format_float17(row.gap), fmt_bool(row.within_slack),
                        fmt_bool(row.universal_ok),
                        fmt_bool(row.adversarial)});

  out.summary.push_back("potential route: dim = " +
                        format_float17(potential_dim));
  out.summary.push_back(
      "cover route: " + std::to_string(out.report.rows.size()) +
      " samples, median |gap| = " +
      format_float17(out.report.median_abs_gap) + " (slack " +
      format_float17(params.slack) + ")");
  checks.push_back(
      {"universal_bound", out.report.universal_ok,
       "cover <= potential + slack for every sample", true});
  checks.push_back(
      {"genericity", out.report.genericity_ok,
       format_float17(out.report.genericity_fraction) +
           " of random samples within slack (target " +
           format_float17(params.genericity_target) + ")",
       false});
}

inline void run_compare_selfaffine(const ExperimentConfig& cfg,
                                   RunOutcome& out, Artifacts& art,
                                   std::vector<Check>& checks) {
  const AdmissibleFn phi = phi_from_config(cfg.doc);
  const AffineIfs ifs = ifs_from_config(cfg.doc);
  const SymbolicSet set = set_from_config(cfg.doc, ifs.alphabet());
  const CapacityOptions opts = capacity_opts_from_config(cfg.doc);
  const CoveringOptions cov_opts = covering_opts_from_config(cfg.doc);
  const CompareParams params = compare_params(cfg.doc, 20);
  const auto* comp = find(cfg.doc, "compare");
  const double rho = comp ? get_or<double>(*comp, "rho", 1.0) : 1.0;
  const bool include_zero =
      comp ? get_or<bool>(*comp, "include_zero", true) : true;
  const DimensionConfig dim_cfg =
      estimator_from_config(cfg.doc, static_cast<double>(ifs.d));

  const RGrid grid_pot = grid_from_spec(
      route_grid(cfg.doc, "grid_potential"), 0.25, 8,
      [&](double r_max, int count, double) {
        return suggest_symbolic_rgrid(ifs, phi, count, r_max,
                                      opts.max_matrix_n);
      });
  const auto potential =
      capacity_dimension_symbolic(ifs, set, phi, grid_pot, dim_cfg, opts);
  check_convergence(potential, checks);

  const RefineStop stop = cloud_stop_from_config(cfg.doc);
  const auto* grid_cov = route_grid(cfg.doc, "grid_cover");
  RngStream rng(cfg.seed, 1);
  std::vector<ComparisonSample> samples;
  const auto run_sample = [&](const std::string& label,
                              const Eigen::VectorXd& a_flat,
                              bool adversarial) {
    const auto a = split_translations(a_flat, ifs.d, ifs.alphabet());
    const PointCloud cloud =
        project_selfaffine(ifs, set, a, stop, opts.leaf_cap);
    const RGrid g = grid_from_spec(
        grid_cov, 0.25, 8, [&](double r_max, int count, double safety) {
          return cloud_auto_grid(cloud, phi, count, r_max, safety);
        });
    const auto est = phi_dimension(cloud, phi, g, dim_cfg, cov_opts);
    samples.push_back({label, est.estimate.s_star, adversarial});
  };
  if (include_zero)
    run_sample("zero",
               Eigen::VectorXd::Zero(static_cast<long>(ifs.d) *
                                     ifs.alphabet()),
               true);
  for (long k = 1; k <= params.samples; ++k)
    run_sample("a" + pad2(k),
               sample_translation(rho, ifs.d, ifs.alphabet(), rng), false);

  finish_comparison(cfg, out, art, checks, potential.estimate.s_star,
                    samples, params);
}

inline void run_compare_projection(const ExperimentConfig& cfg,
                                   RunOutcome& out, Artifacts& art,
                                   std::vector<Check>& checks) {
  const AdmissibleFn phi = phi_from_config(cfg.doc);
  const PointCloud cloud = cloud_from_config(cfg);
  const CapacityOptions opts = capacity_opts_from_config(cfg.doc);
  const CoveringOptions cov_opts = covering_opts_from_config(cfg.doc);
  const CompareParams params = compare_params(cfg.doc, 30);
  const auto* comp = find(cfg.doc, "compare");
  const int m = comp ? get_or<int>(*comp, "m", 1) : 1;
  if (m < 1 || m > cloud.dim())
    throw ConfigError("target dimension m must lie in [1, ambient dim]");
  const DimensionConfig dim_cfg =
      estimator_from_config(cfg.doc, static_cast<double>(m));

  const RGrid grid_pot = grid_from_spec(
      route_grid(cfg.doc, "grid_potential"), 0.25, 8,
      [&](double r_max, int count, double safety) {
        return cloud_auto_grid(cloud, phi, count, r_max, safety);
      });
  const auto potential = capacity_dimension_profile(
      cloud, static_cast<double>(m), phi, grid_pot, dim_cfg, opts);
  check_convergence(potential, checks);

  const auto* grid_cov = route_grid(cfg.doc, "grid_cover");
  RngStream rng(cfg.seed, 2);
  std::vector<ComparisonSample> samples;
  for (long k = 1; k <= params.samples; ++k) {
    const ProjectionFrame frame = sample_grassmannian(cloud.dim(), m, rng);
    const PointCloud proj = project_cloud(cloud, frame);
    const RGrid g = grid_from_spec(
        grid_cov, 0.25, 8, [&](double r_max, int count, double safety) {
          return cloud_auto_grid(proj, phi, count, r_max, safety);
        });
    const auto est = phi_dimension(proj, phi, g, dim_cfg, cov_opts);
    samples.push_back({"v" + pad2(k), est.estimate.s_star, false});
  }

  finish_comparison(cfg, out, art, checks, potential.estimate.s_star,
                    samples, params);
}

inline PointCloud base_points_from_config(const ExperimentConfig& cfg) {
  const auto* p = find(cfg.doc, "points");
  const std::string source =
      p ? get_or<std::string>(*p, "source", "grid") : "grid";
  if (source == "csv") {
    if (!p) throw ConfigError("missing required table [points]");
    return read_point_cloud_csv(require<std::string>(*p, "path"),
                                get_or<double>(*p, "resolution", 0.0));
  }
  if (source != "grid")
    throw ConfigError("points source must be 'grid' or 'csv'");
  const long n = p ? get_or<long>(*p, "n", 2000) : 2000;
  const double xmax = p ? get_or<double>(*p, "xmax", 1.0) : 1.0;
  if (n < 2) throw ConfigError("grid base set needs n >= 2");
  if (!(xmax > 0.0)) throw ConfigError("grid extent xmax must be positive");
  PointCloud cloud;
  cloud.pts = Eigen::MatrixXd(n, 1);
  for (long i = 0; i < n; ++i)
    cloud.pts(i, 0) = xmax * static_cast<double>(i) /
                      static_cast<double>(n - 1);
  cloud.resolution = xmax / static_cast<double>(n - 1);
  return cloud;
}

inline void run_compare_fbm(const ExperimentConfig& cfg, RunOutcome& out,
                            Artifacts& art, std::vector<Check>& checks) {
  namespace fs = std::filesystem;
  const AdmissibleFn phi = phi_from_config(cfg.doc);
  const CapacityOptions opts = capacity_opts_from_config(cfg.doc);
  const CoveringOptions cov_opts = covering_opts_from_config(cfg.doc);
  const CompareParams params = compare_params(cfg.doc, 10);
  const auto* comp = find(cfg.doc, "compare");
  if (!comp) throw ConfigError("missing required table [compare]");
  const double alpha = require<double>(*comp, "alpha");
  const int m = get_or<int>(*comp, "m", 1);
  if (m < 1) throw ConfigError("image dimension m must be >= 1");

  const PointCloud base = base_points_from_config(cfg);
  const AdmissibleFn phi_a = phi_alpha(phi, alpha);
  const double tau = alpha * m;
  DimensionConfig dim_pot = estimator_from_config(cfg.doc, tau);
  const RGrid grid_pot = grid_from_spec(
      route_grid(cfg.doc, "grid_potential"), 0.25, 8,
      [&](double r_max, int count, double safety) {
        return cloud_auto_grid(base, phi_a, count, r_max, safety);
      });
  const auto profile =
      capacity_dimension_profile(base, tau, phi_a, grid_pot, dim_pot, opts);
  check_convergence(profile, checks);
  const double potential_dim = profile.estimate.s_star / alpha;
  out.summary.push_back(
      "profile route: profile dim = " +
      format_float17(profile.estimate.s_star) + " at exponent " +
      format_float17(tau) + ", scaled by 1/alpha");

  const long budget = [&] {
    const auto* caps = find(cfg.doc, "caps");
    return caps ? get_or<long>(*caps, "fbm_budget", 4000) : 4000;
  }();
  const FbmSampler sampler(base.pts, alpha, budget);
  const DimensionConfig dim_cov =
      estimator_from_config(cfg.doc, static_cast<double>(m));
  const auto* grid_cov = route_grid(cfg.doc, "grid_cover");
  RngStream rng(cfg.seed, 3);
  fs::create_directories(fs::path(cfg.out_dir) / "samples");
  std::vector<ComparisonSample> samples;
  for (long k = 1; k <= params.samples; ++k) {
    const FbmSample sample = sampler.draw(m, rng);
    const std::string rel = "samples/sample_" + pad2(k) + ".csv";
    write_fbm_sample_csv((fs::path(cfg.out_dir) / rel).string(), sample);
    art.extra_outputs.push_back(rel);
    const PointCloud image = fbm_image_cloud(sample, base.resolution);
    const RGrid g = grid_from_spec(
        grid_cov, 0.25, 8, [&](double r_max, int count, double safety) {
          return cloud_auto_grid(image, phi, count, r_max, safety);
        });
    const auto est = phi_dimension(image, phi, g, dim_cov, cov_opts);
    samples.push_back({"sample" + pad2(k), est.estimate.s_star, false});
  }

  finish_comparison(cfg, out, art, checks, potential_dim, samples, params);
}

inline TransversalitySetting setting_from_config(const nlohmann::json& doc,
                                                 const nlohmann::json& t) {
  const std::string name = require<std::string>(t, "setting");
  const auto vec = [&](const char* key) {
    const auto v = require<std::vector<double>>(t, key);
    Eigen::VectorXd x(static_cast<long>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i)
      x(static_cast<long>(i)) = v[i];
    return x;
  };
  if (name == "selfaffine") {
    const AffineIfs ifs = ifs_from_config(doc);
    Word wx, wy;
    try {
      wx = parse_word(require<std::string>(t, "word_x"));
      wy = parse_word(require<std::string>(t, "word_y"));
    } catch (const ValidationError& e) {
      throw ConfigError(std::string("bad word: ") + e.what());
    }
    SymbolicSet check{ifs.alphabet(), {wx, wy}};
    check.validate();  // symbols within the alphabet
    return TransversalitySetting::selfaffine(
        ifs, get_or<double>(t, "rho", 1.0), wx, wy);
  }
  if (name == "grassmann")
    return TransversalitySetting::grassmann(require<int>(t, "d"),
                                            require<int>(t, "m"), vec("x"),
                                            vec("y"));
  if (name == "fbm")
    return TransversalitySetting::fbm(require<double>(t, "alpha"),
                                      require<int>(t, "m"), vec("x"),
                                      vec("y"));
  throw ConfigError(
      "transversality setting must be selfaffine, grassmann, or fbm");
}

inline void run_transversality(const ExperimentConfig& cfg, RunOutcome& out,
                               Artifacts& art, std::vector<Check>& checks) {
  const auto* t = find(cfg.doc, "transversality");
  if (!t) throw ConfigError("missing required table [transversality]");
  const TransversalitySetting setting = setting_from_config(cfg.doc, *t);
  const long n_samples = get_or<long>(*t, "n_samples", 10000);

  std::vector<double> r_grid;
  if (const auto* r = find(*t, "r")) {
    r_grid = as<std::vector<double>>(*r, "r");
    for (double v : r_grid)
      if (!(v > 0.0)) throw ConfigError("scales must be positive");
  } else {
    r_grid = RGrid::geometric(get_or<double>(*t, "r_max", 0.5),
                              get_or<double>(*t, "r_min", 0.00390625),
                              get_or<int>(*t, "count", 8))
                 .r;
  }

  RngStream rng(cfg.seed, 4);
  const auto rows = transversality_check(setting, r_grid, n_samples, rng);
  art.header = {"setting", "r", "p_hat", "kernel", "ratio", "n_samples",
                "seed"};
  double max_ratio = 0.0;
  for (const auto& row : rows) {
    max_ratio = std::max(max_ratio, row.ratio);
    art.rows.push_back({setting.kind_name(), format_float17(row.r),
                        format_float17(row.p_hat),
                        format_float17(row.kernel),
                        format_float17(row.ratio),
                        std::to_string(row.n_samples),
                        std::to_string(row.seed)});
  }
  out.summary.push_back("setting: " + std::string(setting.kind_name()));
  out.summary.push_back("samples: " + std::to_string(n_samples) + " over " +
                        std::to_string(r_grid.size()) + " scales");
  out.summary.push_back("max probability/kernel ratio: " +
                        format_float17(max_ratio));

  if (get_or<bool>(*t, "stability", false)) {
    const double tol = get_or<double>(*t, "stability_tol", 0.2);
    RngStream rng2(cfg.seed, 5);
    const auto rows2 =
        transversality_check(setting, r_grid, 2 * n_samples, rng2);
    double max2 = 0.0;
    for (const auto& row : rows2) max2 = std::max(max2, row.ratio);
    const double rel =
        std::abs(max2 - max_ratio) / std::max(max_ratio, 1e-300);
    checks.push_back({"ratio_stability", rel <= tol,
                      "max ratio " + format_float17(max_ratio) + " -> " +
                          format_float17(max2) + " under doubling (" +
                          format_float17(rel) + " relative)",
                      true});
  }
}

}  // namespace expdetail

// --------------------------------------------------------------------------
// Runner.

inline RunOutcome run_experiment(const ExperimentConfig& cfg) {
  namespace fs = std::filesystem;
  RunOutcome out;
  out.out_dir = cfg.out_dir;
  fs::create_directories(fs::path(cfg.out_dir));

  expdetail::Artifacts art;
  std::vector<expdetail::Check> checks;

  if (cfg.scenario == "capdim")
    expdetail::run_capdim(cfg, out, art, checks);
  else if (cfg.scenario == "interdim")
    expdetail::run_interdim(cfg, out, art, checks);
  else if (cfg.scenario == "compare_selfaffine")
    expdetail::run_compare_selfaffine(cfg, out, art, checks);
  else if (cfg.scenario == "compare_projection")
    expdetail::run_compare_projection(cfg, out, art, checks);
  else if (cfg.scenario == "compare_fbm")
    expdetail::run_compare_fbm(cfg, out, art, checks);
  else
    expdetail::run_transversality(cfg, out, art, checks);

  if (const auto* exp = expdetail::find(cfg.doc, "expect")) {
    const double target = expdetail::require<double>(*exp, "s_star");
    const double tol = expdetail::get_or<double>(*exp, "tol", 0.05);
    const bool pass = std::isfinite(out.headline) &&
                      std::abs(out.headline - target) <= tol;
    checks.push_back({"expect.s_star", pass,
                      format_float17(out.headline) + " vs " +
                          format_float17(target) + " +- " +
                          format_float17(tol),
                      true});
  }

  for (const auto& c : checks)
    if (c.hard && !c.pass) out.exit_code = 1;

  std::vector<std::string> lines;
  lines.push_back("scenario: " + cfg.scenario);
  lines.push_back("seed: " + std::to_string(cfg.seed));
  lines.push_back("config_hash: " + config_hash_hex(cfg.doc));
  for (auto& l : out.summary) lines.push_back(std::move(l));
  for (const auto& c : checks)
    lines.push_back(std::string("check ") + c.name + ": " +
                    (c.pass ? "PASS" : "FAIL") +
                    (c.hard ? "" : " (reported only)") + " — " + c.detail);
  lines.push_back("exit: " + std::to_string(out.exit_code));
  out.summary = std::move(lines);

  write_csv((fs::path(cfg.out_dir) / "results.csv").string(), art.header,
            art.rows);
  {
    std::ofstream f(fs::path(cfg.out_dir) / "summary.txt");
    if (!f) throw ConfigError("cannot write into out dir: " + cfg.out_dir);
    for (const auto& line : out.summary) f << line << "\n";
  }
  {
    nlohmann::json manifest;
    manifest["config"] = cfg.doc;
    manifest["config_hash"] = config_hash_hex(cfg.doc);
    manifest["scenario"] = cfg.scenario;
    manifest["seed"] = cfg.seed;
    manifest["version"] = kVersion;
    nlohmann::json outputs = nlohmann::json::array();
    outputs.push_back("results.csv");
    outputs.push_back("summary.txt");
    for (const auto& extra : art.extra_outputs) outputs.push_back(extra);
    manifest["outputs"] = outputs;
    std::ofstream f(fs::path(cfg.out_dir) / "manifest.json");
    if (!f) throw ConfigError("cannot write into out dir: " + cfg.out_dir);
    f << manifest.dump(2) << "\n";
  }
  return out;
}

// Full command-line behavior: load, apply overrides, run, map exceptions to
// the documented exit codes with a message on stderr.
inline int run_cli(
    const std::string& config_path,
    const std::optional<std::uint64_t>& seed_override = std::nullopt,
    const std::optional<std::string>& out_override = std::nullopt) {
  try {
    ExperimentConfig cfg = ExperimentConfig::from_file(config_path);
    if (seed_override) cfg.override_seed(*seed_override);
    if (out_override) cfg.override_out(*out_override);
    return run_experiment(cfg).exit_code;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const ValidationError& e) {
    std::fprintf(stderr, "invalid parameters: %s\n", e.what());
    return 2;
  } catch (const ResourceCapError& e) {
    std::fprintf(stderr, "resource cap exceeded: %s\n", e.what());
    return 3;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric failure: %s\n", e.what());
    return 3;
  }
}

}  // namespace fractdim

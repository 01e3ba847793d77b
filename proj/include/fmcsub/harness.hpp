// SPDX-FileCopyrightText: © 2026 The fmcsub Authors
//
// SPDX-License-Identifier: Apache-2.0

#ifndef FMCSUB_HARNESS_HPP
#define FMCSUB_HARNESS_HPP

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "fmcsub/binio.hpp"
#include "fmcsub/core.hpp"
#include "fmcsub/crb_baseline.hpp"
#include "fmcsub/forward_model.hpp"
#include "fmcsub/recovery.hpp"
#include "fmcsub/scene_gen.hpp"
#include "fmcsub/subsampling.hpp"
#include "fmcsub/training.hpp"

namespace fmcsub {

enum class Method { kJdps, kCrb, kDpsT, kDpsF, kRandom };
enum class Reconstructor { kClfista, kFista };

inline const char* method_name(Method m) {
  switch (m) {
    case Method::kJdps: return "JDPS";
    case Method::kCrb: return "CRB";
    case Method::kDpsT: return "DPS-T";
    case Method::kDpsF: return "DPS-F";
    case Method::kRandom: return "RANDOM";
  }
  return "?";
}

inline Method parse_method(std::string_view s) {
  for (Method m : {Method::kJdps, Method::kCrb, Method::kDpsT, Method::kDpsF, Method::kRandom}) {
    if (s == method_name(m)) return m;
  }
  if (s == "jdps") return Method::kJdps;
  if (s == "crb") return Method::kCrb;
  if (s == "dps-t") return Method::kDpsT;
  if (s == "dps-f") return Method::kDpsF;
  if (s == "random") return Method::kRandom;
  throw ConfigError("unknown method '" + std::string(s) + "'");
}

struct ExperimentSpec {
  Method method = Method::kJdps;
  std::size_t m_t = 3, m_r = 4, m_f = 9;
  Reconstructor reconstructor = Reconstructor::kClfista;
  std::uint64_t seed = 0;  // RANDOM patterns only
  std::string label;       // defaults to the method name

  std::string name() const { return label.empty() ? method_name(method) : label; }
};

/// The four rows of the comparison table.
inline std::vector<ExperimentSpec> paper_preset() {
  return {
      {Method::kJdps, 3, 4, 9, Reconstructor::kClfista, 0, ""},
      {Method::kCrb, 3, 4, 9, Reconstructor::kFista, 0, ""},
      {Method::kDpsT, 3, 8, 23, Reconstructor::kClfista, 0, ""},
      {Method::kDpsF, 8, 8, 9, Reconstructor::kClfista, 0, ""},
  };
}

/// Per-pixel mean squared modulus of the error.
template <class A, class B>
double mse(const Eigen::MatrixBase<A>& x, const Eigen::MatrixBase<B>& x_hat) {
  require(x.size() == x_hat.size(), "mse: length mismatch");
  require(x.size() > 0, "mse: empty input");
  return (x - x_hat).squaredNorm() / static_cast<double>(x.size());
}

struct CdfPoint {
  double value;
  double fraction;
};

/// Step CDF: one point per distinct value, fraction = #(v <= value) / n.
inline std::vector<CdfPoint> empirical_cdf(std::vector<double> values) {
  if (values.empty()) throw ContractViolation("empirical_cdf: empty input");
  std::sort(values.begin(), values.end());
  const double n = static_cast<double>(values.size());
  std::vector<CdfPoint> out;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i + 1 < values.size() && values[i + 1] == values[i]) continue;
    out.push_back({values[i], static_cast<double>(i + 1) / n});
  }
  return out;
}

inline double median(std::vector<double> v) {
  require(!v.empty(), "median of an empty list");
  std::sort(v.begin(), v.end());
  const std::size_t h = v.size() / 2;
  return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

struct EvalResult {
  std::string label;
  Method method = Method::kJdps;
  std::vector<double> mse;  ///< per test scene, dataset order
  std::vector<CdfPoint> cdf;
  SelectionPattern pattern;
  double seconds = 0.0;
  double fista_lambda = 0.0;  ///< FISTA results only

  double median_mse() const { return median(mse); }
};

/// FISTA settings for pattern baselines. lambda = lam_rel * mean_b max|A_s^H y_b| with lam_rel
/// picked from `lam_grid` by median MSE on calibration scenes (training data, not the test set).
struct FistaEval {
  std::size_t n_iter = 150;
  std::vector<double> lam_grid{0.003, 0.01, 0.03, 0.1, 0.3};
  std::size_t calibration_scenes = 128;
  double tolerance = 0.0;

  static FistaEval from_config(const Config& c, std::size_t n_layer) {
    FistaEval f;
    f.n_iter = c.count("fista_iters", n_layer * 10);
    if (c.has("fista_lam_grid")) f.lam_grid = c.numbers("fista_lam_grid");
    f.calibration_scenes = c.count("fista_calibration_scenes", f.calibration_scenes);
    f.tolerance = c.number("fista_tolerance", f.tolerance);
    if (f.lam_grid.empty() || f.n_iter < 1) throw ConfigError("fista evaluation needs n_iter >= 1 and a lambda grid");
    return f;
  }
};

namespace detail {

inline cmat gather_rows(const cmat& a, const std::vector<std::size_t>& rows) {
  cmat out(static_cast<Index>(rows.size()), a.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) out.row(static_cast<Index>(k)) = a.row(static_cast<Index>(rows[k]));
  return out;
}

inline cmat stack_measurements(const Dataset& d, std::size_t count, const std::vector<std::size_t>& rows) {
  cmat y(static_cast<Index>(rows.size()), static_cast<Index>(count));
  for (std::size_t i = 0; i < count; ++i)
    for (std::size_t k = 0; k < rows.size(); ++k) y(static_cast<Index>(k), static_cast<Index>(i)) = d.measurements[i][rows[k]];
  return y;
}

inline std::vector<double> column_mse(const cmat& x_hat, const Dataset& d) {
  std::vector<double> out(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) out[i] = mse(d.scenes[i].image, x_hat.col(static_cast<Index>(i)));
  return out;
}

inline double elapsed(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace detail

/// Standard FISTA on the rows kept by `pattern`.
inline EvalResult evaluate_pattern_fista(const MeasurementModel& model, const SelectionPattern& pattern,
                                         const Dataset& test, const Dataset& calibration, const FistaEval& fe,
                                         const std::string& label = "") {
  require(test.has_measurements() && calibration.has_measurements(), "evaluation needs measurements");
  const auto t0 = std::chrono::steady_clock::now();
  const auto rows = active_indices(pattern.mask());
  require(!rows.empty(), "pattern keeps no measurements");
  const cmat as = detail::gather_rows(model.A, rows);
  const double step = 1.0 / power_iteration_lmax(as);
  const cmat ah = as.adjoint();

  const std::size_t nc = std::min(fe.calibration_scenes, calibration.size());
  const cmat yc = detail::stack_measurements(calibration, nc, rows);
  const double scale = (ah * yc).cwiseAbs().colwise().maxCoeff().mean();
  double best_lam = 0.0, best_med = std::numeric_limits<double>::infinity();
  for (double rel : fe.lam_grid) {
    const double lam = rel * scale;
    const cmat xc = fista_solve(as, yc, {fe.n_iter, step, lam, fe.tolerance});
    std::vector<double> m(nc);
    for (std::size_t i = 0; i < nc; ++i) m[i] = mse(calibration.scenes[i].image, xc.col(static_cast<Index>(i)));
    const double med = median(m);
    if (med < best_med) {
      best_med = med;
      best_lam = lam;
    }
  }

  const cmat yt = detail::stack_measurements(test, test.size(), rows);
  const cmat xt = fista_solve(as, yt, {fe.n_iter, step, best_lam, fe.tolerance});
  EvalResult r;
  r.label = label.empty() ? pattern.method : label;
  r.mse = detail::column_mse(xt, test);
  r.cdf = empirical_cdf(r.mse);
  r.pattern = pattern;
  r.fista_lambda = best_lam;
  r.seconds = detail::elapsed(t0);
  return r;
}

/// The checkpoint's own pattern and CL-FISTA.
inline EvalResult evaluate_checkpoint(const Checkpoint& ck, const Dataset& test, const std::string& label = "",
                                      std::size_t chunk = 64) {
  require(test.has_measurements(), "evaluation needs measurements");
  const auto t0 = std::chrono::steady_clock::now();
  EvalResult r;
  r.pattern = ck.pattern();
  r.label = label.empty() ? ck.method : label;
  const rvec mask = r.pattern.mask();
  require(mask.size() == ck.net.n_meas(), "checkpoint does not match the dataset's measurement length");
  r.mse.resize(test.size());
  for (std::size_t s = 0; s < test.size(); s += chunk) {
    const std::size_t n = std::min(chunk, test.size() - s);
    cmat y(mask.size(), static_cast<Index>(n));
    for (std::size_t i = 0; i < n; ++i) y.col(static_cast<Index>(i)) = test.measurements[s + i];
    const cmat xh = clfista_forward(ck.net, apply_mask(mask, y));
    for (std::size_t i = 0; i < n; ++i) r.mse[s + i] = mse(test.scenes[s + i].image, xh.col(static_cast<Index>(i)));
  }
  r.cdf = empirical_cdf(r.mse);
  r.seconds = detail::elapsed(t0);
  return r;
}

/// Uniformly random (m_t, m_r, m_f) pattern; seed-determined.
inline SelectionPattern random_pattern(const MeasurementModel& model, std::size_t m_t, std::size_t m_r, std::size_t m_f,
                                       std::uint64_t seed) {
  const std::array<std::size_t, 3> n{model.n_t(), model.n_r(), model.n_f()}, m{m_t, m_r, m_f};
  std::array<rvec, 3> masks;
  for (int a = 0; a < 3; ++a) {
    require(m[a] >= 1 && m[a] <= n[a], "random pattern: active count out of range");
    auto rng = make_stream(seed, static_cast<std::uint64_t>(a), 20);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    rvec score(static_cast<Index>(n[a]));
    for (auto& v : score) v = u(rng);
    masks[a] = indicator(n[a], top_k_indices(score, m[a]));
  }
  return SelectionPattern::from_masks("RANDOM", masks[0], masks[1], masks[2]);
}

struct CrbBaselineConfig {
  std::size_t m_t = 3, m_r = 4, m_f = 9;
  CrbCriterion criterion = CrbCriterion::kNeighborhoodTrace;
  std::size_t radius = 1;
  std::size_t cap = 1'000'000;
  double band_lo = 1e6, band_hi = 8e6;

  static CrbBaselineConfig from_config(const Config& c) {
    CrbBaselineConfig b;
    b.m_t = c.count("crb_m_t", b.m_t);
    b.m_r = c.count("crb_m_r", b.m_r);
    b.m_f = c.count("crb_m_f", b.m_f);
    const auto crit = c.str("crb_criterion", "neighborhood");
    if (crit == "single") {
      b.criterion = CrbCriterion::kSingleAmplitude;
    } else if (crit != "neighborhood") {
      throw ConfigError("crb_criterion must be 'single' or 'neighborhood'");
    }
    b.radius = c.count("crb_radius", b.radius);
    b.cap = c.count("crb_enumeration_cap", b.cap);
    b.band_lo = c.number("band_lo", b.band_lo);
    b.band_hi = c.number("band_hi", b.band_hi);
    return b;
  }
};

struct CrbBaselineResult {
  SelectionPattern pattern;
  CrbSearchResult search;
  bool band_fallback = false;
};

inline CrbBaselineResult crb_baseline(const MeasurementModel& model, const SceneDistribution& dist, double noise_sigma,
                                      const CrbBaselineConfig& cfg) {
  const auto band = band_select_f(model.fgrid, cfg.m_f, model.geometry.f_c, cfg.band_lo, cfg.band_hi);
  CrbSearchSpec spec;
  spec.m_t = cfg.m_t;
  spec.m_r = cfg.m_r;
  spec.candidate_pixels = dist.region_pixels(model.grid);
  spec.noise_sigma = noise_sigma;
  spec.fixed_f_mask = band.mask;
  spec.criterion = cfg.criterion;
  spec.neighborhood_radius = cfg.radius;
  spec.enumeration_cap = cfg.cap;
  CrbBaselineResult out;
  out.search = exhaustive_minmax_search(model, spec);
  out.band_fallback = band.band_fallback;
  out.pattern = SelectionPattern::from_masks("CRB", out.search.s_t, out.search.s_r, band.mask);
  return out;
}

/// Relation of two MSE distributions: A "dominates" B when A's CDF is never below B's.
enum class CdfRelation { kDominates, kDominated, kEqual, kCross };

inline const char* relation_name(CdfRelation r) {
  switch (r) {
    case CdfRelation::kDominates: return "dominates";
    case CdfRelation::kDominated: return "is dominated by";
    case CdfRelation::kEqual: return "equals";
    case CdfRelation::kCross: return "crosses";
  }
  return "?";
}

inline CdfRelation compare_cdfs(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> sa = a, sb = b, grid;
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());
  grid.reserve(sa.size() + sb.size());
  std::merge(sa.begin(), sa.end(), sb.begin(), sb.end(), std::back_inserter(grid));
  bool above = false, below = false;
  for (double v : grid) {
    const double fa = static_cast<double>(std::upper_bound(sa.begin(), sa.end(), v) - sa.begin()) / sa.size();
    const double fb = static_cast<double>(std::upper_bound(sb.begin(), sb.end(), v) - sb.begin()) / sb.size();
    above |= fa > fb;
    below |= fa < fb;
  }
  if (above && below) return CdfRelation::kCross;
  if (above) return CdfRelation::kDominates;
  if (below) return CdfRelation::kDominated;
  return CdfRelation::kEqual;
}

inline std::string fmt_g(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Headered CSV: label,mse,fraction, one block per result in the given order.
inline std::string cdf_csv(const std::vector<EvalResult>& results) {
  std::string s = "method,mse,fraction\n";
  for (const auto& r : results)
    for (const auto& p : r.cdf) s += r.label + "," + fmt_g(p.value) + "," + fmt_g(p.fraction) + "\n";
  return s;
}

inline std::string comparison_report(const std::vector<EvalResult>& results) {
  std::ostringstream o;
  o << "method,kept,total,ratio_percent,median_mse,mean_mse,scenes\n";
  for (const auto& r : results) {
    const auto cr = compression_ratio(r.pattern.active[0].size(), r.pattern.active[1].size(), r.pattern.active[2].size(),
                                      r.pattern.n[0], r.pattern.n[1], r.pattern.n[2]);
    double mean = 0.0;
    for (double v : r.mse) mean += v;
    mean /= static_cast<double>(r.mse.size());
    char buf[256];
    std::snprintf(buf, sizeof buf, "%s,%zu,%zu,%.1f,%.6g,%.6g,%zu\n", r.label.c_str(), cr.kept, cr.total, cr.percent(),
                  r.median_mse(), mean, r.mse.size());
    o << buf;
  }
  o << "\n";
  for (std::size_t i = 0; i < results.size(); ++i)
    for (std::size_t j = i + 1; j < results.size(); ++j)
      o << results[i].label << " " << relation_name(compare_cdfs(results[i].mse, results[j].mse)) << " "
        << results[j].label << "\n";
  return o.str();
}

/// CDF curves on a log-MSE axis as a standalone SVG document.
inline std::string cdf_svg(const std::vector<EvalResult>& results) {
  const double w = 640, h = 420, ml = 60, mr = 150, mt = 20, mb = 50;
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  for (const auto& r : results)
    for (const auto& p : r.cdf) {
      if (p.value > 0) lo = std::min(lo, p.value);
      hi = std::max(hi, p.value);
    }
  if (!(hi > 0)) hi = 1.0;
  if (!std::isfinite(lo) || lo >= hi) lo = hi / 10.0;
  const double l0 = std::floor(std::log10(lo)), l1 = std::ceil(std::log10(hi));
  const double span = std::max(l1 - l0, 1.0);
  auto px = [&](double v) { return ml + (std::log10(std::max(v, lo)) - l0) / span * (w - ml - mr); };
  auto py = [&](double f) { return h - mb - f * (h - mt - mb); };
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};
  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<line x1=\"" << ml << "\" y1=\"" << py(0) << "\" x2=\"" << w - mr << "\" y2=\"" << py(0) << "\" stroke=\"black\"/>\n";
  o << "<line x1=\"" << ml << "\" y1=\"" << py(0) << "\" x2=\"" << ml << "\" y2=\"" << py(1) << "\" stroke=\"black\"/>\n";
  for (double e = l0; e <= l1 + 1e-9; e += 1.0) {
    const double x = px(std::pow(10.0, e));
    o << "<line x1=\"" << x << "\" y1=\"" << py(0) << "\" x2=\"" << x << "\" y2=\"" << py(0) + 5 << "\" stroke=\"black\"/>";
    o << "<text x=\"" << x << "\" y=\"" << py(0) + 18 << "\" text-anchor=\"middle\">1e" << static_cast<int>(e) << "</text>\n";
  }
  for (int k = 0; k <= 4; ++k) {
    const double f = k / 4.0;
    o << "<text x=\"" << ml - 8 << "\" y=\"" << py(f) + 4 << "\" text-anchor=\"end\">" << f << "</text>\n";
  }
  o << "<text x=\"" << (ml + w - mr) / 2 << "\" y=\"" << h - 12 << "\" text-anchor=\"middle\">MSE</text>\n";
  o << "<text x=\"16\" y=\"" << (mt + h - mb) / 2 << "\" transform=\"rotate(-90 16 " << (mt + h - mb) / 2
    << ")\" text-anchor=\"middle\">CDF</text>\n";
  for (std::size_t i = 0; i < results.size(); ++i) {
    const char* c = colors[i % 8];
    o << "<polyline fill=\"none\" stroke=\"" << c << "\" stroke-width=\"1.5\" points=\"" << px(results[i].cdf.front().value)
      << "," << py(0);
    double prev = 0.0;
    for (const auto& p : results[i].cdf) {
      o << " " << px(p.value) << "," << py(prev) << " " << px(p.value) << "," << py(p.fraction);
      prev = p.fraction;
    }
    o << "\"/>\n";
    const double ly = mt + 16 * static_cast<double>(i + 1);
    o << "<line x1=\"" << w - mr + 10 << "\" y1=\"" << ly - 4 << "\" x2=\"" << w - mr + 30 << "\" y2=\"" << ly - 4
      << "\" stroke=\"" << c << "\" stroke-width=\"2\"/><text x=\"" << w - mr + 36 << "\" y=\"" << ly << "\">"
      << results[i].label << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

/// JSON manifest tying outputs to their inputs by SHA-256.
inline std::string output_manifest(const std::map<std::string, std::string>& inputs,
                                   const std::map<std::string, std::string>& outputs) {
  nlohmann::json j;
  j["inputs"] = inputs;
  j["outputs"] = outputs;
  return j.dump(2) + "\n";
}

}  // namespace fmcsub

#endif  // FMCSUB_HARNESS_HPP

// SPDX-FileCopyrightText: © 2026 The fmcsub Authors
//
// SPDX-License-Identifier: Apache-2.0

#ifndef FMCSUB_CRB_BASELINE_HPP
#define FMCSUB_CRB_BASELINE_HPP

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "fmcsub/core.hpp"
#include "fmcsub/forward_model.hpp"
#include "fmcsub/subsampling.hpp"

namespace fmcsub {

struct BandSelection {
  rvec mask;
  bool band_fallback = false;  ///< set when the band held fewer than m_f bins
};

/// The m_f bins nearest f_c (ties toward the lower frequency), restricted to bins whose
/// resolution cell [f - df/2, f + df/2] overlaps [band_lo, band_hi] when enough such bins exist.
inline BandSelection band_select_f(const FrequencyGrid& fgrid, std::size_t m_f, double f_c, double band_lo = 1e6,
                                   double band_hi = 8e6) {
  const std::size_t n = fgrid.n_f();
  require(m_f >= 1 && m_f <= n, "band_select_f: m_f out of range");
  const double half = 0.5 * fgrid.spacing();
  std::vector<std::size_t> in_band, all(n);
  std::iota(all.begin(), all.end(), std::size_t{0});
  for (std::size_t k = 0; k < n; ++k) {
    if (fgrid.freqs[k] + half >= band_lo && fgrid.freqs[k] - half <= band_hi) in_band.push_back(k);
  }
  BandSelection out;
  auto& pool = in_band.size() >= m_f ? in_band : all;
  out.band_fallback = in_band.size() < m_f;
  const double tie = 1e-9 * fgrid.spacing();
  std::stable_sort(pool.begin(), pool.end(), [&](std::size_t a, std::size_t b) {
    const double da = std::abs(fgrid.freqs[a] - f_c), db = std::abs(fgrid.freqs[b] - f_c);
    if (std::abs(da - db) <= tie) return fgrid.freqs[a] < fgrid.freqs[b];
    return da < db;
  });
  pool.resize(m_f);
  out.mask = indicator(n, pool);
  return out;
}

/// Amplitude CRB of a lone scatterer at `candidate` under the masked model: sigma^2 / ||s .* a_k||^2.
/// Returns +inf when the mask removes the whole column.
inline double crb_for_selection(const MeasurementModel& model, const rvec& s_t, const rvec& s_r, const rvec& s_f,
                                std::size_t candidate, double noise_sigma) {
  require(candidate < model.n_pixels(), "crb: candidate pixel out of range");
  require(static_cast<std::size_t>(s_t.size()) == model.n_t() && static_cast<std::size_t>(s_r.size()) == model.n_r() &&
              static_cast<std::size_t>(s_f.size()) == model.n_f(),
          "crb: mask lengths do not match the model");
  const rvec mask = kron_mask(s_t, s_r, s_f);
  const double energy = (mask.array() * model.A.col(static_cast<Index>(candidate)).cwiseAbs2().array()).sum();
  if (energy <= 0) return std::numeric_limits<double>::infinity();
  return noise_sigma * noise_sigma / energy;
}

/// Pixels within `radius` (Chebyshev) of k, k first.
inline std::vector<std::size_t> pixel_neighborhood(const PixelGrid& grid, std::size_t k, std::size_t radius) {
  const auto iz = static_cast<long>(k % grid.n_z), ix = static_cast<long>(k / grid.n_z);
  const auto r = static_cast<long>(radius);
  std::vector<std::size_t> out{k};
  for (long dx = -r; dx <= r; ++dx)
    for (long dz = -r; dz <= r; ++dz) {
      if (dx == 0 && dz == 0) continue;
      const long z = iz + dz, x = ix + dx;
      if (z < 0 || x < 0 || z >= static_cast<long>(grid.n_z) || x >= static_cast<long>(grid.n_x)) continue;
      out.push_back(grid.index(static_cast<std::size_t>(z), static_cast<std::size_t>(x)));
    }
  return out;
}

/// Trace of the joint amplitude CRB of the candidate and its neighbors:
/// sigma^2 tr((A_N^H diag(s) A_N)^-1). +inf when that Fisher matrix is singular.
inline double crb_neighborhood_trace(const MeasurementModel& model, const rvec& s_t, const rvec& s_r,
                                     const rvec& s_f, std::size_t candidate, double noise_sigma,
                                     std::size_t radius = 1) {
  require(candidate < model.n_pixels(), "crb: candidate pixel out of range");
  const rvec mask = kron_mask(s_t, s_r, s_f);
  require(mask.size() == model.A.rows(), "crb: mask lengths do not match the model");
  const auto nb = pixel_neighborhood(model.grid, candidate, radius);
  cmat an(model.A.rows(), static_cast<Index>(nb.size()));
  for (std::size_t c = 0; c < nb.size(); ++c) an.col(static_cast<Index>(c)) = model.A.col(static_cast<Index>(nb[c]));
  const cmat fim = an.adjoint() * mask.cast<cplx>().asDiagonal() * an;
  Eigen::LDLT<cmat> ldlt(fim);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive() || (ldlt.vectorD().real().array() <= 0).any()) {
    return std::numeric_limits<double>::infinity();
  }
  const cmat inv = ldlt.solve(cmat::Identity(fim.rows(), fim.cols()));
  return noise_sigma * noise_sigma * inv.diagonal().real().sum();
}

enum class CrbCriterion {
  kSingleAmplitude,      ///< crb_for_selection
  kNeighborhoodTrace,    ///< crb_neighborhood_trace
};

struct CrbSearchSpec {
  std::size_t m_t = 3;
  std::size_t m_r = 4;
  std::vector<std::size_t> candidate_pixels;
  double noise_sigma = 1.0;
  rvec fixed_f_mask;
  CrbCriterion criterion = CrbCriterion::kNeighborhoodTrace;
  std::size_t neighborhood_radius = 1;
  std::size_t enumeration_cap = 1'000'000;
};

struct CrbSearchResult {
  rvec s_t;
  rvec s_r;
  double value = 0.0;           ///< achieved minmax criterion
  std::size_t evaluated = 0;    ///< subset pairs scored
  std::vector<double> values;   ///< criterion per pair, in enumeration order
};

/// Visits every m-subset of {0..n-1} in lexicographic order.
inline void for_each_combination(std::size_t n, std::size_t m, const std::function<void(const std::vector<std::size_t>&)>& fn) {
  require(m >= 1 && m <= n, "combination size out of range");
  std::vector<std::size_t> c(m);
  std::iota(c.begin(), c.end(), std::size_t{0});
  while (true) {
    fn(c);
    std::size_t i = m;
    while (i > 0 && c[i - 1] == n - m + i - 1) --i;
    if (i == 0) return;
    ++c[i - 1];
    for (std::size_t j = i; j < m; ++j) c[j] = c[j - 1] + 1;
  }
}

inline double binomial(std::size_t n, std::size_t k) {
  double r = 1.0;
  for (std::size_t i = 1; i <= k; ++i) r = r * static_cast<double>(n - k + i) / static_cast<double>(i);
  return std::round(r);
}

/// Relative slack under which two criterion values count as a tie.
inline constexpr double kCrbTieTolerance = 1e-9;

/// Exhaustive minmax over (transmitter subset, receiver subset) with the frequency mask fixed.
/// Ties resolve to the lexicographically first pair (transmit subset major).
inline CrbSearchResult exhaustive_minmax_search(const MeasurementModel& model, const CrbSearchSpec& spec) {
  const std::size_t nt = model.n_t(), nr = model.n_r(), nf = model.n_f();
  require(spec.m_t >= 1 && spec.m_t <= nt && spec.m_r >= 1 && spec.m_r <= nr, "crb search: active counts out of range");
  require(!spec.candidate_pixels.empty(), "crb search: no candidate pixels");
  require(static_cast<std::size_t>(spec.fixed_f_mask.size()) == nf, "crb search: frequency mask length mismatch");
  for (auto k : spec.candidate_pixels) require(k < model.n_pixels(), "crb search: candidate pixel out of range");
  const double count = binomial(nt, spec.m_t) * binomial(nr, spec.m_r);
  if (count > static_cast<double>(spec.enumeration_cap)) {
    throw ResourceError("crb search would enumerate " + std::to_string(static_cast<std::uint64_t>(count)) +
                        " subset pairs (cap " + std::to_string(spec.enumeration_cap) +
                        "); reduce the array or the active counts");
  }
  const double s2 = spec.noise_sigma * spec.noise_sigma;
  const auto fidx = active_indices(spec.fixed_f_mask);
  const std::size_t nc = spec.candidate_pixels.size();

  // Per candidate and (tx, rx) pair, that channel's contribution to the Fisher matrix.
  std::vector<std::vector<cmat>> gram(nc, std::vector<cmat>(nt * nr));
  for (std::size_t c = 0; c < nc; ++c) {
    const auto nb = spec.criterion == CrbCriterion::kSingleAmplitude
                        ? std::vector<std::size_t>{spec.candidate_pixels[c]}
                        : pixel_neighborhood(model.grid, spec.candidate_pixels[c], spec.neighborhood_radius);
    for (std::size_t i = 0; i < nt; ++i)
      for (std::size_t j = 0; j < nr; ++j) {
        cmat rows(static_cast<Index>(fidx.size()), static_cast<Index>(nb.size()));
        for (std::size_t f = 0; f < fidx.size(); ++f)
          for (std::size_t p = 0; p < nb.size(); ++p)
            rows(static_cast<Index>(f), static_cast<Index>(p)) =
                model.A(static_cast<Index>(model.row(i, j, fidx[f])), static_cast<Index>(nb[p]));
        gram[c][i * nr + j] = rows.adjoint() * rows;
      }
  }

  auto score = [&](const std::vector<std::size_t>& tx, const std::vector<std::size_t>& rx) {
    double worst = 0.0;
    for (std::size_t c = 0; c < nc; ++c) {
      cmat fim = cmat::Zero(gram[c][0].rows(), gram[c][0].cols());
      for (auto i : tx)
        for (auto j : rx) fim += gram[c][i * nr + j];
      double v;
      if (fim.rows() == 1) {
        const double e = fim(0, 0).real();
        v = e > 0 ? s2 / e : std::numeric_limits<double>::infinity();
      } else {
        Eigen::LDLT<cmat> ldlt(fim);
        if (ldlt.info() != Eigen::Success || (ldlt.vectorD().real().array() <= 0).any()) {
          v = std::numeric_limits<double>::infinity();
        } else {
          v = s2 * ldlt.solve(cmat::Identity(fim.rows(), fim.cols())).diagonal().real().sum();
        }
      }
      worst = std::max(worst, v);
    }
    return worst;
  };

  CrbSearchResult res;
  std::vector<std::vector<std::size_t>> txs, rxs;
  for_each_combination(nt, spec.m_t, [&](const auto& c) { txs.push_back(c); });
  for_each_combination(nr, spec.m_r, [&](const auto& c) { rxs.push_back(c); });
  res.values.reserve(txs.size() * rxs.size());
  for (const auto& tx : txs)
    for (const auto& rx : rxs) res.values.push_back(score(tx, rx));
  res.evaluated = res.values.size();
  const double best = *std::min_element(res.values.begin(), res.values.end());
  std::size_t pick = 0;
  while (!(res.values[pick] <= best * (1.0 + kCrbTieTolerance))) ++pick;
  res.value = res.values[pick];
  res.s_t = indicator(nt, txs[pick / rxs.size()]);
  res.s_r = indicator(nr, rxs[pick % rxs.size()]);
  return res;
}

}  // namespace fmcsub

#endif  // FMCSUB_CRB_BASELINE_HPP

// SPDX-FileCopyrightText: © 2026 The fmcsub Authors
//
// SPDX-License-Identifier: Apache-2.0

#ifndef FMCSUB_SUBSAMPLING_HPP
#define FMCSUB_SUBSAMPLING_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "fmcsub/config.hpp"
#include "fmcsub/core.hpp"

namespace fmcsub {

enum class Axis { kTransmit = 0, kReceive = 1, kFrequency = 2 };

inline const char* axis_name(Axis a) {
  switch (a) {
    case Axis::kTransmit: return "tx";
    case Axis::kReceive: return "rx";
    case Axis::kFrequency: return "freq";
  }
  return "?";
}

/// Trainable logits of the three selection axes and their active counts.
struct SelectionState {
  std::array<rvec, 3> theta;  ///< indexed by Axis
  std::array<std::size_t, 3> m{};

  const rvec& logits(Axis a) const { return theta[static_cast<int>(a)]; }
  rvec& logits(Axis a) { return theta[static_cast<int>(a)]; }
  std::size_t active(Axis a) const { return m[static_cast<int>(a)]; }
  std::size_t length(Axis a) const { return static_cast<std::size_t>(logits(a).size()); }

  std::size_t trainable_count() const {
    return static_cast<std::size_t>(theta[0].size() + theta[1].size() + theta[2].size());
  }

  /// Logits ~ U(0, 0.1).
  static SelectionState init_uniform(std::array<std::size_t, 3> n, std::array<std::size_t, 3> m, Rng& rng) {
    SelectionState s;
    std::uniform_real_distribution<double> u(0.0, 0.1);
    for (int a = 0; a < 3; ++a) {
      s.theta[a].resize(static_cast<Index>(n[a]));
      for (auto& v : s.theta[a]) v = u(rng);
    }
    s.m = m;
    s.validate();
    return s;
  }

  void validate() const {
    for (int a = 0; a < 3; ++a) {
      if (m[a] < 1 || m[a] > static_cast<std::size_t>(theta[a].size())) {
        throw ContractViolation(std::string("active count out of range on axis ") + axis_name(static_cast<Axis>(a)));
      }
      if (!theta[a].allFinite()) throw ContractViolation("logits must be finite");
    }
  }
};

/// One Gumbel top-K draw on a single axis.
struct SelectionSample {
  rvec soft;    ///< softmax((theta + g) / gamma)
  rvec hard;    ///< 0/1 indicator of the M largest soft entries
  rvec gumbel;  ///< the noise used
};

/// i.i.d. Gumbel(0, 1) samples.
inline rvec gumbel_noise(std::size_t n, Rng& rng) {
  require(n >= 1, "gumbel_noise needs n >= 1");
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  constexpr double lo = std::numeric_limits<double>::min();
  constexpr double hi = 1.0 - std::numeric_limits<double>::epsilon() / 2;
  rvec g(static_cast<Index>(n));
  for (auto& v : g) v = -std::log(-std::log(std::clamp(u01(rng), lo, hi)));
  return g;
}

/// Indices of the m largest scores, ties to the lowest index; returned in ascending order.
inline std::vector<std::size_t> top_k_indices(const rvec& scores, std::size_t m) {
  require(m <= static_cast<std::size_t>(scores.size()), "top-k count exceeds vector length");
  std::vector<std::size_t> idx(static_cast<std::size_t>(scores.size()));
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return scores[static_cast<Index>(a)] > scores[static_cast<Index>(b)];
  });
  idx.resize(m);
  std::sort(idx.begin(), idx.end());
  return idx;
}

inline rvec indicator(std::size_t n, const std::vector<std::size_t>& indices) {
  rvec v = rvec::Zero(static_cast<Index>(n));
  for (auto i : indices) {
    require(i < n, "selection index out of range");
    v[static_cast<Index>(i)] = 1.0;
  }
  return v;
}

inline std::vector<std::size_t> active_indices(const rvec& binary) {
  std::vector<std::size_t> out;
  for (Index i = 0; i < binary.size(); ++i) {
    if (binary[i] != 0.0) out.push_back(static_cast<std::size_t>(i));
  }
  return out;
}

inline rvec softmax(const rvec& u) {
  const double mx = u.maxCoeff();
  rvec e = (u.array() - mx).exp();
  return e / e.sum();
}

/// Gumbel top-K sample with a caller-supplied noise vector.
inline SelectionSample sample_selection_with_noise(const rvec& theta, std::size_t m, double gamma, rvec gumbel) {
  require(gamma > 0, "temperature must be positive");
  require(m >= 1 && m <= static_cast<std::size_t>(theta.size()), "active count exceeds logits length");
  require(gumbel.size() == theta.size(), "gumbel draw length mismatch");
  SelectionSample s;
  const rvec u = (theta + gumbel) / gamma;
  s.soft = softmax(u);
  // Ranking the logits directly keeps the order exact when softmax underflows.
  s.hard = indicator(static_cast<std::size_t>(theta.size()), top_k_indices(u, m));
  s.gumbel = std::move(gumbel);
  return s;
}

inline SelectionSample sample_selection(const rvec& theta, std::size_t m, double gamma, Rng& rng) {
  require(m <= static_cast<std::size_t>(theta.size()), "active count exceeds logits length");
  return sample_selection_with_noise(theta, m, gamma, gumbel_noise(static_cast<std::size_t>(theta.size()), rng));
}

/// Noise-free readout used after training: top-K of the logits themselves.
inline rvec deterministic_selection(const rvec& theta, std::size_t m) {
  return indicator(static_cast<std::size_t>(theta.size()), top_k_indices(theta, m));
}

/// Unified mask s[f + N_F (j + N_R i)] = s_t[i] s_r[j] s_f[f].
inline rvec kron_mask(const rvec& s_t, const rvec& s_r, const rvec& s_f) {
  const Index nt = s_t.size(), nr = s_r.size(), nf = s_f.size();
  require(nt > 0 && nr > 0 && nf > 0, "selection vectors must be nonempty");
  rvec out(nt * nr * nf);
  for (Index i = 0; i < nt; ++i)
    for (Index j = 0; j < nr; ++j)
      for (Index f = 0; f < nf; ++f) out[f + nf * (j + nr * i)] = s_t[i] * s_r[j] * s_f[f];
  return out;
}

inline cvec apply_mask(const rvec& mask, const cvec& y) {
  require(mask.size() == y.size(), "mask length differs from measurement length");
  return mask.cast<cplx>().cwiseProduct(y);
}

/// Column-wise mask of a batch of measurements.
inline cmat apply_mask(const rvec& mask, const cmat& y) {
  require(mask.size() == y.rows(), "mask length differs from measurement length");
  return mask.cast<cplx>().asDiagonal() * y;
}

struct CompressionRatio {
  std::size_t kept = 0;
  std::size_t total = 0;
  double value() const { return static_cast<double>(kept) / static_cast<double>(total); }
  double percent() const { return 100.0 * value(); }
};

inline CompressionRatio compression_ratio(std::size_t m_t, std::size_t m_r, std::size_t m_f, std::size_t n_t,
                                          std::size_t n_r, std::size_t n_f) {
  if (n_t == 0 || n_r == 0 || n_f == 0) throw ContractViolation("compression ratio with an empty axis");
  require(m_t <= n_t && m_r <= n_r && m_f <= n_f, "active counts exceed axis sizes");
  return {m_t * m_r * m_f, n_t * n_r * n_f};
}

// ---------------------------------------------------------------------------
// Pattern text file (key = value):
//   method, n_t, n_r, n_f, tx, rx, freq (space-separated active indices),
//   optional theta_tx, theta_rx, theta_freq (raw logits, %.17g).

struct SelectionPattern {
  std::string method;
  std::array<std::size_t, 3> n{};
  std::array<std::vector<std::size_t>, 3> active;
  std::array<rvec, 3> logits;  ///< empty when the pattern did not come from logits

  const std::vector<std::size_t>& indices(Axis a) const { return active[static_cast<int>(a)]; }

  rvec axis_mask(Axis a) const { return indicator(n[static_cast<int>(a)], indices(a)); }

  rvec mask() const {
    return kron_mask(axis_mask(Axis::kTransmit), axis_mask(Axis::kReceive), axis_mask(Axis::kFrequency));
  }

  std::size_t popcount() const { return active[0].size() * active[1].size() * active[2].size(); }

  static SelectionPattern from_masks(std::string method, const rvec& s_t, const rvec& s_r, const rvec& s_f) {
    SelectionPattern p;
    p.method = std::move(method);
    const std::array<const rvec*, 3> v{&s_t, &s_r, &s_f};
    for (int a = 0; a < 3; ++a) {
      p.n[a] = static_cast<std::size_t>(v[a]->size());
      p.active[a] = active_indices(*v[a]);
    }
    return p;
  }

  /// Deterministic readout of trained logits.
  static SelectionPattern from_state(std::string method, const SelectionState& s) {
    auto p = from_masks(std::move(method), deterministic_selection(s.theta[0], s.m[0]),
                        deterministic_selection(s.theta[1], s.m[1]), deterministic_selection(s.theta[2], s.m[2]));
    p.logits = s.theta;
    return p;
  }

  std::string to_text() const {
    std::ostringstream ss;
    ss.precision(17);
    ss << "# selection pattern\n";
    ss << "method = " << method << "\n";
    ss << "n_t = " << n[0] << "\nn_r = " << n[1] << "\nn_f = " << n[2] << "\n";
    for (int a = 0; a < 3; ++a) {
      ss << axis_name(static_cast<Axis>(a)) << " =";
      for (auto i : active[a]) ss << ' ' << i;
      ss << "\n";
    }
    for (int a = 0; a < 3; ++a) {
      if (logits[a].size() == 0) continue;
      ss << "theta_" << axis_name(static_cast<Axis>(a)) << " =";
      for (double v : logits[a]) ss << ' ' << v;
      ss << "\n";
    }
    return ss.str();
  }

  static SelectionPattern from_text(std::string_view text) {
    const auto cfg = Config::parse(text);
    SelectionPattern p;
    p.method = cfg.str("method", "");
    p.n = {cfg.count("n_t"), cfg.count("n_r"), cfg.count("n_f")};
    for (int a = 0; a < 3; ++a) {
      const std::string name = axis_name(static_cast<Axis>(a));
      for (auto i : cfg.counts(name)) {
        if (i >= p.n[a]) throw FormatError("pattern index out of range on axis " + name);
        p.active[a].push_back(static_cast<std::size_t>(i));
      }
      if (p.active[a].empty()) throw FormatError("pattern selects nothing on axis " + name);
      if (cfg.has("theta_" + name)) {
        const auto v = cfg.numbers("theta_" + name);
        if (v.size() != p.n[a]) throw FormatError("logits length mismatch on axis " + name);
        p.logits[a] = Eigen::Map<const rvec>(v.data(), static_cast<Index>(v.size()));
      }
    }
    return p;
  }
};

inline void save_pattern(const SelectionPattern& p, const std::filesystem::path& path) {
  binio::write_file(path, p.to_text());
}

inline SelectionPattern load_pattern(const std::filesystem::path& path) {
  return SelectionPattern::from_text(binio::read_file(path));
}

}  // namespace fmcsub

#endif  // FMCSUB_SUBSAMPLING_HPP

// SPDX-FileCopyrightText: © 2026 The fmcsub Authors
//
// SPDX-License-Identifier: Apache-2.0

// Shared fixtures for the unit and acceptance suites.
#ifndef FMCSUB_TESTS_SUPPORT_HPP
#define FMCSUB_TESTS_SUPPORT_HPP

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "fmcsub/scene_gen.hpp"
#include "fmcsub/training.hpp"

namespace fmcsub::test_support {

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / "fmcsub_tests" / name;
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

/// Random complex matrix with i.i.d. standard normal parts.
inline cmat random_cmat(Index r, Index c, Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  cmat m(r, c);
  for (Index i = 0; i < m.size(); ++i) m(i) = cplx(n(rng), n(rng));
  return m;
}

/// 2 elements, 3x3 pixels, 4 bins around the center frequency.
inline MeasurementModel tiny_model() {
  auto g = ArrayGeometry::uniform_linear(2, 1e-3);
  PixelGrid grid;
  grid.n_z = 3;
  grid.n_x = 3;
  grid.origin_x = 0.7e-3;
  grid.origin_z = 3.0e-3;
  return build_measurement_matrix(g, grid, FrequencyGrid::band(128, 40e6, 12, 4));
}

inline SceneDistribution tiny_distribution() {
  SceneDistribution d;
  d.x_min = 0.7e-3;
  d.x_max = 1.3e-3;
  d.z_min = 3.0e-3;
  d.z_max = 3.6e-3;
  d.k_max = 2;
  return d;
}

struct ProbeStats {
  std::size_t probes = 0;
  std::size_t passed = 0;
  std::size_t skipped = 0;  ///< kink-guarded
  double worst = 0.0;
};

/// Central-difference checks of the analytic gradient of the batch L1 loss with respect to
/// random entries of W, V and delta. A probe is skipped (and redrawn) when either side of
/// the difference changes the shrink activity pattern or crosses an L1 kink.
inline ProbeStats gradient_probes(std::size_t n_probes, double rel_tol, std::uint64_t seed) {
  const auto model = tiny_model();
  const auto dist = tiny_distribution();
  const auto data = generate_dataset(model, dist, 4, 0.0, seed);
  Rng rng(seed);
  SelectionState st = SelectionState::init_uniform({2, 2, 4}, {1, 2, 3}, rng);
  NetConfig nc;
  nc.n_layer = 2;
  nc.delta_rel = 0.05;
  nc.calibration_batch = 4;
  UnrolledNet net = init_network(model, data, nc, st, AxisPlan{});
  // Move away from the structured init so W and V have generic entries.
  std::normal_distribution<double> nd(0.0, 1.0);
  const double sw = 0.05, sv = 0.2 * std::hypot(detail::rms(net.V.re), detail::rms(net.V.im));
  for (Index i = 0; i < net.W.re.size(); ++i) {
    net.W.re.data()[i] += sw * nd(rng);
    net.W.im.data()[i] += sw * nd(rng);
  }
  for (Index i = 0; i < net.V.re.size(); ++i) {
    net.V.re.data()[i] += sv * nd(rng);
    net.V.im.data()[i] += sv * nd(rng);
  }

  const IterationSelection sel = draw_selection(st, AxisPlan{}, 1.0, seed, 1);
  cmat y(model.n_rows(), 4), x(model.n_pixels(), 4);
  for (Index b = 0; b < 4; ++b) {
    y.col(b) = data.measurements[static_cast<std::size_t>(b)];
    x.col(b) = data.scenes[static_cast<std::size_t>(b)].image;
  }
  const cmat ys = apply_mask(sel.mask, y);

  auto pattern = [&](const UnrolledNet& n) {
    ClfistaTape t;
    const cmat xh = clfista_forward(n, ys, &t);
    std::vector<char> p;
    for (const auto& z : t.z)
      for (Index i = 0; i < z.size(); ++i) p.push_back(std::abs(z(i)) > n.delta[static_cast<Index>(&z - &t.z[0])]);
    for (Index i = 0; i < xh.size(); ++i) p.push_back(std::abs(xh(i) - x(i)) > 1e-9 * (1.0 + std::abs(x(i))));
    return p;
  };
  auto loss = [&](const UnrolledNet& n) { return batch_l1(x, clfista_forward(n, ys), nullptr); };

  ClfistaTape tape;
  cmat seedg;
  batch_l1(x, clfista_forward(net, ys, &tape), &seedg);
  const GradientBundle g = backward(net, tape, y, sel, seedg, {true, false});
  const auto base = pattern(net);

  ProbeStats out;
  std::uniform_int_distribution<int> pick_group(0, 4);
  std::size_t attempts = 0;
  while (out.probes < n_probes && attempts < 50 * n_probes) {
    ++attempts;
    const int grp = pick_group(rng);
    double* param;
    double analytic, scale;
    if (grp < 2) {
      rmat& m = grp == 0 ? net.W.re : net.W.im;
      const rmat& gm = grp == 0 ? g.d_W_re : g.d_W_im;
      std::uniform_int_distribution<Index> pi(0, m.size() - 1);
      const Index k = pi(rng);
      param = m.data() + k;
      analytic = gm.data()[k];
      scale = detail::rms(net.W.re);
    } else if (grp < 4) {
      rmat& m = grp == 2 ? net.V.re : net.V.im;
      const rmat& gm = grp == 2 ? g.d_V_re : g.d_V_im;
      std::uniform_int_distribution<Index> pi(0, m.size() - 1);
      const Index k = pi(rng);
      param = m.data() + k;
      analytic = gm.data()[k];
      scale = detail::rms(net.V.re);
    } else {
      std::uniform_int_distribution<Index> pi(0, net.delta.size() - 1);
      const Index k = pi(rng);
      param = net.delta.data() + k;
      analytic = g.d_delta[k];
      scale = net.delta.mean();
    }
    const double h = 1e-6 * scale;
    const double keep = *param;
    *param = keep + h;
    const auto pp = pattern(net);
    const double lp = loss(net);
    *param = keep - h;
    const auto pm = pattern(net);
    const double lm = loss(net);
    *param = keep;
    if (pp != base || pm != base) {
      ++out.skipped;
      continue;
    }
    const double fd = (lp - lm) / (2.0 * h);
    // Floor the denominator at a small fraction of the typical gradient size for this group.
    const double floor = 1e-3 * std::abs(loss(net)) / scale * 1e-3;
    const double rel = std::abs(fd - analytic) / std::max({std::abs(fd), std::abs(analytic), floor});
    ++out.probes;
    if (rel <= rel_tol) ++out.passed;
    out.worst = std::max(out.worst, rel);
  }
  return out;
}

}  // namespace fmcsub::test_support

#endif  // FMCSUB_TESTS_SUPPORT_HPP

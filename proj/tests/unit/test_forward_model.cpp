// SPDX-FileCopyrightText: © 2026 The fmcsub Authors
//
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "../support.hpp"
#include "fmcsub/forward_model.hpp"

using namespace fmcsub;

namespace {

const MeasurementModel& paper_model() {
  static const MeasurementModel m = ModelSetup{}.build();
  return m;
}

}  // namespace

TEST(TimeOfFlight, MatchesPathLengths) {
  // scatterer (5, 4) mm, transmitter at 0.5 mm, receiver at 7.5 mm
  const double d1 = std::sqrt(4.5 * 4.5 + 16.0) * 1e-3, d2 = std::sqrt(2.5 * 2.5 + 16.0) * 1e-3;
  EXPECT_NEAR(time_of_flight(5e-3, 4e-3, 0.5e-3, 7.5e-3, 6400.0), (d1 + d2) / 6400.0, 1e-18);
  // directly below a coincident element: 2z / c0
  EXPECT_DOUBLE_EQ(time_of_flight(1e-3, 3e-3, 1e-3, 1e-3, 6400.0), 6e-3 / 6400.0);
  EXPECT_THROW(time_of_flight(0, 1e-3, 0, 0, 0.0), ParameterError);
}

TEST(TimeOfFlight, SymmetricInTransmitterAndReceiver) {
  EXPECT_DOUBLE_EQ(time_of_flight(2e-3, 3e-3, 0.5e-3, 6.5e-3, 6400), time_of_flight(2e-3, 3e-3, 6.5e-3, 0.5e-3, 6400));
}

TEST(PulseSpectrum, PeakAndPhase) {
  const auto g = ArrayGeometry::paper_default();
  const double tau = 1.3e-6;
  const cplx v = pulse_spectrum(g.f_c, g, {1.0, 0.0}, tau);
  EXPECT_NEAR(std::abs(v), 0.5 * std::sqrt(std::numbers::pi / g.alpha), 1e-20);
  const cplx expected = std::polar(1.0, g.phi - 2.0 * std::numbers::pi * g.f_c * tau);
  EXPECT_NEAR(std::arg(v / std::abs(v) / expected), 0.0, 1e-9);
  // one bandwidth factor away the envelope drops by exp(-pi^2)
  const double off = std::sqrt(g.alpha);
  EXPECT_NEAR(std::abs(pulse_spectrum(g.f_c + off, g, 1.0, 0.0)) / std::abs(pulse_spectrum(g.f_c, g, 1.0, 0.0)),
              std::exp(-std::numbers::pi * std::numbers::pi), 1e-12);
  // linear in the complex amplitude
  const cplx a(0.3, -1.7);
  EXPECT_LT(std::abs(pulse_spectrum(3e6, g, a, tau) - a * pulse_spectrum(3e6, g, 1.0, tau)), 1e-22);
}

TEST(MeasurementMatrix, PaperShape) {
  const auto& m = paper_model();
  EXPECT_EQ(m.A.rows(), 4160);
  EXPECT_EQ(m.A.cols(), 1280);
  EXPECT_EQ(m.n_f(), 65u);
  EXPECT_TRUE(m.A.allFinite());
  EXPECT_DOUBLE_EQ(m.fgrid.spacing(), 312500.0);
}

TEST(MeasurementMatrix, EntriesMatchScalarFormula) {
  const auto& m = paper_model();
  Rng rng(4);
  std::uniform_int_distribution<std::size_t> ui(0, 7), uf(0, 64), uk(0, 1279);
  for (int t = 0; t < 50; ++t) {
    const std::size_t i = ui(rng), j = ui(rng), f = uf(rng), k = uk(rng);
    const std::size_t ix = k / 32, iz = k % 32;
    const double xk = (ix + 0.5) * 0.2e-3, zk = (iz + 0.5) * 0.2e-3;
    const double xi = (i + 0.5) * 1e-3, xj = (j + 0.5) * 1e-3;
    const double tau = (std::hypot(xk - xi, zk) + std::hypot(xk - xj, zk)) / 6400.0;
    const double fr = f * 312500.0, alpha = 4.47e6 * 4.47e6, pi = std::numbers::pi;
    const cplx want = 0.5 * std::sqrt(pi / alpha) * std::exp(-pi * pi * (fr - 4.5e6) * (fr - 4.5e6) / alpha) *
                      std::exp(cplx(0.0, 3.0 * pi / 4.0 - 2.0 * pi * fr * tau));
    const cplx got = m.A(static_cast<Index>(f + 65 * (j + 8 * i)), static_cast<Index>(k));
    EXPECT_LE(std::abs(got - want), 1e-12 * std::abs(want) + 1e-300) << i << " " << j << " " << f << " " << k;
  }
}

TEST(MeasurementMatrix, Reciprocity) {
  const auto& m = paper_model();
  for (std::size_t i = 0; i < 8; ++i)
    for (std::size_t j = 0; j < 8; ++j)
      for (std::size_t f : {3u, 14u, 40u})
        EXPECT_EQ((m.A.row(static_cast<Index>(m.row(i, j, f))) - m.A.row(static_cast<Index>(m.row(j, i, f)))).norm(), 0.0);
}

TEST(MeasurementMatrix, SizeCap) {
  ModelSetup s;
  s.max_bytes = 1000;
  EXPECT_THROW(s.build(), ResourceError);
}

TEST(MeasurementMatrix, RejectsBadGeometry) {
  auto g = ArrayGeometry::paper_default();
  g.element_x[3] += 1e-4;
  EXPECT_THROW(build_measurement_matrix(g, PixelGrid{}, FrequencyGrid::full(128, 40e6)), ParameterError);
  PixelGrid bad;
  bad.n_z = 0;
  EXPECT_THROW(build_measurement_matrix(ArrayGeometry::paper_default(), bad, FrequencyGrid::full(128, 40e6)),
               ParameterError);
  EXPECT_THROW(FrequencyGrid::band(128, 40e6, 60, 10), ParameterError);
}

TEST(Simulate, NoiselessIsLinear) {
  const auto m = test_support::tiny_model();
  Rng rng(1);
  auto s = Scene::from_scatterers(m.grid, {{2, 0, 0, {1.0, 0.5}}, {7, 0, 0, {-0.3, 2.0}}});
  const cvec y = simulate_measurement(m, s, 0.0, rng);
  const cvec want = m.A.col(2) * cplx(1.0, 0.5) + m.A.col(7) * cplx(-0.3, 2.0);
  EXPECT_LT((y - want).norm(), 1e-15 * want.norm());
}

TEST(Simulate, NoiseIsCircularWithVarianceSigmaSquared) {
  const auto m = test_support::tiny_model();
  Rng rng(9);
  const Scene empty = Scene::from_scatterers(m.grid, {});
  const double sigma = 0.7;
  double re2 = 0, im2 = 0, cross = 0;
  std::size_t n = 0;
  for (int t = 0; t < 4000; ++t) {
    const cvec y = simulate_measurement(m, empty, sigma, rng);
    for (auto v : y) {
      re2 += v.real() * v.real();
      im2 += v.imag() * v.imag();
      cross += v.real() * v.imag();
      ++n;
    }
  }
  // 64000 samples: relative standard error of a variance estimate ~ sqrt(2/n) = 0.56%
  EXPECT_NEAR(re2 / n, sigma * sigma / 2, 0.03 * sigma * sigma / 2);
  EXPECT_NEAR(im2 / n, sigma * sigma / 2, 0.03 * sigma * sigma / 2);
  EXPECT_NEAR(cross / n, 0.0, 0.02 * sigma * sigma);
}

TEST(ModelContainer, RoundTripAndHash) {
  const auto m = test_support::tiny_model();
  const auto bytes = serialize_model(m);
  const auto back = deserialize_model(bytes);
  EXPECT_EQ(back.A, m.A);
  EXPECT_EQ(back.geometry.element_x, m.geometry.element_x);
  EXPECT_EQ(back.grid.n_z, m.grid.n_z);
  EXPECT_EQ(back.fgrid.freqs, m.fgrid.freqs);
  EXPECT_EQ(model_hash(back), model_hash(m));
  EXPECT_EQ(model_hash(m).size(), 64u);

  const auto dir = test_support::scratch_dir("model");
  save_model(m, dir / "m.fmc");
  EXPECT_EQ(load_model(dir / "m.fmc").A, m.A);
  EXPECT_THROW(load_model(dir / "missing.fmc"), IoError);
}

TEST(ModelContainer, RejectsCorruption) {
  const auto bytes = serialize_model(test_support::tiny_model());
  std::string bad = bytes;
  bad[0] = 'X';
  EXPECT_THROW(deserialize_model(bad), FormatError);
  bad = bytes;
  bad[7] = 99;  // version
  EXPECT_THROW(deserialize_model(bad), FormatError);
  EXPECT_THROW(deserialize_model(bytes.substr(0, bytes.size() - 5)), FormatError);
  EXPECT_THROW(deserialize_model(bytes + "x"), FormatError);
}

TEST(ModelSetup, ReadsConfig) {
  const auto c = Config::parse("n_elements = 4\npitch = 0.5e-3\nn_z = 5\nn_x = 6\nn_f = 10\nf_first_bin = 5\n");
  const auto s = ModelSetup::from_config(c);
  EXPECT_EQ(s.geometry.n_elements(), 4u);
  EXPECT_DOUBLE_EQ(s.geometry.element_x[1], 0.75e-3);
  EXPECT_EQ(s.grid.size(), 30u);
  EXPECT_EQ(s.fgrid.n_f(), 10u);
  EXPECT_DOUBLE_EQ(s.fgrid.freqs[0], 5 * 312500.0);
}

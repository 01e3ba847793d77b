// SPDX-FileCopyrightText: © 2026 The fmcsub Authors
//
// SPDX-License-Identifier: Apache-2.0

#ifndef FMCSUB_FORWARD_MODEL_HPP
#define FMCSUB_FORWARD_MODEL_HPP

#include <cmath>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "fmcsub/binio.hpp"
#include "fmcsub/config.hpp"
#include "fmcsub/core.hpp"

namespace fmcsub {

/// Uniform linear transducer array plus the pulse and medium constants.
struct ArrayGeometry {
  std::vector<double> element_x;  ///< element positions along the surface [m]
  double alpha = 4.47e6 * 4.47e6;  ///< pulse bandwidth factor [Hz^2]
  double f_c = 4.5e6;              ///< pulse center frequency [Hz]
  double phi = 3.0 * std::numbers::pi / 4.0;  ///< pulse phase [rad]
  double c0 = 6400.0;              ///< wave velocity [m/s]
  double f_s = 40e6;               ///< sampling rate [Hz]

  std::size_t n_elements() const noexcept { return element_x.size(); }

  /// `n` elements with spacing `pitch`, element i centered at x0 + (i + 1/2) * pitch.
  static ArrayGeometry uniform_linear(std::size_t n, double pitch, double x0 = 0.0) {
    ArrayGeometry g;
    g.element_x.resize(n);
    for (std::size_t i = 0; i < n; ++i) g.element_x[i] = x0 + (static_cast<double>(i) + 0.5) * pitch;
    return g;
  }

  /// 8 elements at 1 mm pitch covering an 8 mm aperture.
  static ArrayGeometry paper_default() { return uniform_linear(8, 1e-3); }

  void validate() const {
    if (element_x.empty()) throw ParameterError("array has no elements");
    if (!(alpha > 0) || !(f_c > 0) || !(c0 > 0)) throw ParameterError("alpha, f_c and c0 must be positive");
    if (!(f_s > 2.0 * f_c)) throw ParameterError("sampling rate must exceed twice the center frequency");
    if (element_x.size() > 1) {
      const double pitch = element_x[1] - element_x[0];
      if (!(pitch > 0)) throw ParameterError("element positions must be strictly increasing");
      for (std::size_t i = 1; i < element_x.size(); ++i) {
        const double d = element_x[i] - element_x[i - 1];
        if (!(d > 0) || std::abs(d - pitch) > 1e-9 * pitch) {
          throw ParameterError("element positions must be uniformly spaced");
        }
      }
    }
  }
};

/// Rectangular pixel grid below the array. Pixel k = iz + n_z * ix (depth index fastest).
struct PixelGrid {
  std::size_t n_z = 32;
  std::size_t n_x = 40;
  double d_z = 0.2e-3;
  double d_x = 0.2e-3;
  double origin_x = 0.0;  ///< lateral position of the grid corner [m]
  double origin_z = 0.0;  ///< depth of the grid corner [m]

  std::size_t size() const noexcept { return n_z * n_x; }
  std::size_t index(std::size_t iz, std::size_t ix) const noexcept { return iz + n_z * ix; }
  double x_center(std::size_t ix) const noexcept { return origin_x + (static_cast<double>(ix) + 0.5) * d_x; }
  double z_center(std::size_t iz) const noexcept { return origin_z + (static_cast<double>(iz) + 0.5) * d_z; }
  std::pair<double, double> center(std::size_t k) const noexcept {
    return {x_center(k / n_z), z_center(k % n_z)};
  }

  void validate() const {
    if (n_z == 0 || n_x == 0) throw ParameterError("pixel grid must be nonempty");
    if (!(d_z > 0) || !(d_x > 0)) throw ParameterError("pixel sizes must be positive");
    if (!(z_center(0) > 0)) throw ParameterError("pixel centers must lie below the array (z > 0)");
  }
};

/// Contiguous run of one-sided DFT bins of an n_time-sample record.
struct FrequencyGrid {
  std::size_t n_time = 128;
  double f_s = 40e6;
  std::size_t first_bin = 0;
  std::vector<double> freqs;

  std::size_t n_f() const noexcept { return freqs.size(); }
  double spacing() const noexcept { return f_s / static_cast<double>(n_time); }
  std::size_t bin(std::size_t f) const noexcept { return first_bin + f; }

  /// All floor(n_time/2)+1 one-sided bins.
  static FrequencyGrid full(std::size_t n_time, double f_s) { return band(n_time, f_s, 0, n_time / 2 + 1); }

  static FrequencyGrid band(std::size_t n_time, double f_s, std::size_t first_bin, std::size_t count) {
    if (n_time == 0 || count == 0) throw ParameterError("frequency grid must be nonempty");
    if (first_bin + count > n_time / 2 + 1) throw ParameterError("frequency band exceeds the one-sided spectrum");
    FrequencyGrid g;
    g.n_time = n_time;
    g.f_s = f_s;
    g.first_bin = first_bin;
    g.freqs.resize(count);
    for (std::size_t k = 0; k < count; ++k) g.freqs[k] = static_cast<double>(first_bin + k) * g.spacing();
    return g;
  }
};

struct Scatterer {
  std::size_t pixel = 0;
  double x = 0.0;
  double z = 0.0;
  cplx amplitude{0.0, 0.0};  ///< a_k * exp(-j phi_k)
};

/// Point-scatterer specimen and its vectorized image.
struct Scene {
  std::vector<Scatterer> scatterers;
  cvec image;

  /// Places each scatterer at the center of its pixel and rasterizes the image.
  static Scene from_scatterers(const PixelGrid& grid, std::vector<Scatterer> scatterers) {
    Scene s;
    s.image = cvec::Zero(static_cast<Index>(grid.size()));
    for (auto& sc : scatterers) {
      require(sc.pixel < grid.size(), "scatterer pixel out of range");
      std::tie(sc.x, sc.z) = grid.center(sc.pixel);
      s.image[static_cast<Index>(sc.pixel)] += sc.amplitude;
    }
    s.scatterers = std::move(scatterers);
    return s;
  }
};

/// Round-trip delay transmitter -> scatterer -> receiver.
inline double time_of_flight(double x_k, double z_k, double tx_x, double rx_x, double c0) {
  if (!(c0 > 0)) throw ParameterError("wave velocity must be positive");
  const double dt = std::hypot(x_k - tx_x, z_k);
  const double dr = std::hypot(x_k - rx_x, z_k);
  return (dt + dr) / c0;
}

/// Gaussian-echo spectrum of one scatterer term at frequency f.
inline cplx pulse_spectrum(double f, const ArrayGeometry& g, cplx amplitude, double tau) {
  const double pi = std::numbers::pi;
  const double df = f - g.f_c;
  const double envelope = 0.5 * std::sqrt(pi / g.alpha) * std::exp(-pi * pi * df * df / g.alpha);
  const double phase = g.phi - 2.0 * pi * f * tau;
  return amplitude * std::polar(envelope, phase);
}

/// Dense FMC model y = A x. Row r = f + N_F * (j + N_R * i) for transmitter i, receiver j.
struct MeasurementModel {
  cmat A;
  ArrayGeometry geometry;
  PixelGrid grid;
  FrequencyGrid fgrid;

  std::size_t n_t() const noexcept { return geometry.n_elements(); }
  std::size_t n_r() const noexcept { return geometry.n_elements(); }
  std::size_t n_f() const noexcept { return fgrid.n_f(); }
  std::size_t n_rows() const noexcept { return n_t() * n_r() * n_f(); }
  std::size_t n_pixels() const noexcept { return grid.size(); }
  std::size_t row(std::size_t tx, std::size_t rx, std::size_t f) const noexcept {
    return f + n_f() * (rx + n_r() * tx);
  }
};

inline constexpr std::size_t kDefaultModelByteCap = std::size_t{2} << 30;

inline MeasurementModel build_measurement_matrix(const ArrayGeometry& geometry, const PixelGrid& grid,
                                                 const FrequencyGrid& fgrid,
                                                 std::size_t max_bytes = kDefaultModelByteCap) {
  geometry.validate();
  grid.validate();
  if (fgrid.n_f() == 0) throw ParameterError("frequency grid is empty");
  if (std::abs(fgrid.f_s - geometry.f_s) > 1e-9 * geometry.f_s) {
    throw ParameterError("frequency grid sampling rate differs from the array's");
  }
  MeasurementModel m;
  m.geometry = geometry;
  m.grid = grid;
  m.fgrid = fgrid;
  const std::size_t rows = m.n_rows();
  const std::size_t cols = m.n_pixels();
  if (rows * cols * sizeof(cplx) > max_bytes) {
    throw ResourceError("measurement matrix of " + std::to_string(rows) + "x" + std::to_string(cols) +
                        " exceeds the size cap of " + std::to_string(max_bytes) + " bytes");
  }
  m.A.resize(static_cast<Index>(rows), static_cast<Index>(cols));
  const auto& ex = geometry.element_x;
  for (std::size_t k = 0; k < cols; ++k) {
    const auto [xk, zk] = grid.center(k);
    for (std::size_t i = 0; i < m.n_t(); ++i) {
      for (std::size_t j = 0; j < m.n_r(); ++j) {
        const double tau = time_of_flight(xk, zk, ex[i], ex[j], geometry.c0);
        for (std::size_t f = 0; f < m.n_f(); ++f) {
          m.A(static_cast<Index>(m.row(i, j, f)), static_cast<Index>(k)) =
              pulse_spectrum(fgrid.freqs[f], geometry, {1.0, 0.0}, tau);
        }
      }
    }
  }
  return m;
}

/// y = A x + n with n ~ CN(0, sigma^2 I).
inline cvec simulate_measurement(const MeasurementModel& model, const Scene& scene, double noise_sigma, Rng& rng) {
  require(scene.image.size() == model.A.cols(), "scene image length does not match the model");
  require(noise_sigma >= 0, "noise sigma must be non-negative");
  cvec y = model.A * scene.image;
  if (noise_sigma > 0) {
    std::normal_distribution<double> n01(0.0, noise_sigma / std::sqrt(2.0));
    for (Index r = 0; r < y.size(); ++r) {
      const double re = n01(rng);
      y[r] += cplx(re, n01(rng));
    }
  }
  return y;
}

// ---------------------------------------------------------------------------
// Geometry config and model container.

/// Everything build_measurement_matrix needs, as read from a `key = value` config.
struct ModelSetup {
  ArrayGeometry geometry = ArrayGeometry::paper_default();
  PixelGrid grid;
  FrequencyGrid fgrid = FrequencyGrid::full(128, 40e6);
  std::size_t max_bytes = kDefaultModelByteCap;

  static ModelSetup from_config(const Config& cfg) {
    ModelSetup s;
    const auto n = cfg.count("n_elements", 8);
    const double pitch = cfg.number("pitch", 1e-3);
    s.geometry = ArrayGeometry::uniform_linear(n, pitch, cfg.number("array_x0", 0.0));
    s.geometry.alpha = cfg.number("alpha", s.geometry.alpha);
    s.geometry.f_c = cfg.number("f_c", s.geometry.f_c);
    s.geometry.phi = cfg.number("phi", s.geometry.phi);
    s.geometry.c0 = cfg.number("c0", s.geometry.c0);
    s.geometry.f_s = cfg.number("f_s", s.geometry.f_s);
    s.grid.n_z = cfg.count("n_z", s.grid.n_z);
    s.grid.n_x = cfg.count("n_x", s.grid.n_x);
    s.grid.d_z = cfg.number("d_z", s.grid.d_z);
    s.grid.d_x = cfg.number("d_x", s.grid.d_x);
    s.grid.origin_x = cfg.number("origin_x", s.grid.origin_x);
    s.grid.origin_z = cfg.number("origin_z", s.grid.origin_z);
    const auto n_time = cfg.count("n_time", 128);
    const auto first = cfg.count("f_first_bin", 0);
    const auto n_f = cfg.count("n_f", n_time / 2 + 1 - first);
    s.fgrid = FrequencyGrid::band(n_time, s.geometry.f_s, first, n_f);
    s.max_bytes = cfg.count("max_model_bytes", kDefaultModelByteCap);
    return s;
  }

  MeasurementModel build() const { return build_measurement_matrix(geometry, grid, fgrid, max_bytes); }
};

namespace detail {
inline constexpr std::string_view kModelMagic = "FMCMODL";
inline constexpr std::uint8_t kModelVersion = 1;
}  // namespace detail

/// Serializes the model: header, geometry scalars, grids, then A column-major as (re, im) f64 pairs.
inline std::string serialize_model(const MeasurementModel& m) {
  binio::ByteWriter w;
  binio::write_magic(w, detail::kModelMagic, detail::kModelVersion);
  w.u64(m.n_t());
  w.u64(m.n_f());
  w.u64(m.grid.n_z);
  w.u64(m.grid.n_x);
  w.f64(m.geometry.alpha);
  w.f64(m.geometry.f_c);
  w.f64(m.geometry.phi);
  w.f64(m.geometry.c0);
  w.f64(m.geometry.f_s);
  w.f64_array(m.geometry.element_x.data(), m.geometry.element_x.size());
  w.f64(m.grid.d_z);
  w.f64(m.grid.d_x);
  w.f64(m.grid.origin_x);
  w.f64(m.grid.origin_z);
  w.u64(m.fgrid.n_time);
  w.u64(m.fgrid.first_bin);
  w.c128_array(m.A.data(), static_cast<std::size_t>(m.A.size()));
  return w.bytes();
}

inline MeasurementModel deserialize_model(std::string_view bytes) {
  binio::ByteReader r(bytes);
  binio::read_magic(r, detail::kModelMagic, detail::kModelVersion);
  MeasurementModel m;
  const auto n_el = r.u64();
  const auto n_f = r.u64();
  m.grid.n_z = r.u64();
  m.grid.n_x = r.u64();
  m.geometry.alpha = r.f64();
  m.geometry.f_c = r.f64();
  m.geometry.phi = r.f64();
  m.geometry.c0 = r.f64();
  m.geometry.f_s = r.f64();
  if (n_el > (1u << 20) || n_f > (1u << 20)) throw FormatError("implausible model dimensions");
  m.geometry.element_x.resize(n_el);
  r.f64_array(m.geometry.element_x.data(), n_el);
  m.grid.d_z = r.f64();
  m.grid.d_x = r.f64();
  m.grid.origin_x = r.f64();
  m.grid.origin_z = r.f64();
  const auto n_time = r.u64();
  const auto first = r.u64();
  try {
    m.fgrid = FrequencyGrid::band(n_time, m.geometry.f_s, first, n_f);
  } catch (const ParameterError& e) {
    throw FormatError(std::string("bad frequency grid: ") + e.what());
  }
  const auto rows = m.n_rows();
  const auto cols = m.n_pixels();
  if (r.remaining() != rows * cols * 16) throw FormatError("model payload size does not match its dimensions");
  m.A.resize(static_cast<Index>(rows), static_cast<Index>(cols));
  r.c128_array(m.A.data(), rows * cols);
  r.expect_end();
  return m;
}

inline void save_model(const MeasurementModel& m, const std::filesystem::path& path) {
  binio::write_file(path, serialize_model(m));
}

inline MeasurementModel load_model(const std::filesystem::path& path) {
  return deserialize_model(binio::read_file(path));
}

/// Content hash tying datasets and checkpoints to the model they were made with.
inline std::string model_hash(const MeasurementModel& m) { return binio::sha256_hex(serialize_model(m)); }

}  // namespace fmcsub

#endif  // FMCSUB_FORWARD_MODEL_HPP

// SPDX-FileCopyrightText: © 2026 The fmcsub Authors
//
// SPDX-License-Identifier: Apache-2.0

#ifndef FMCSUB_SCENE_GEN_HPP
#define FMCSUB_SCENE_GEN_HPP

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fmcsub/binio.hpp"
#include "fmcsub/config.hpp"
#include "fmcsub/core.hpp"
#include "fmcsub/forward_model.hpp"

namespace fmcsub {

/// Where scatterers appear, how many, and how strong.
struct SceneDistribution {
  double x_min = 4.0e-3;
  double x_max = 6.0e-3;
  double z_min = 3.2e-3;
  double z_max = 4.8e-3;
  std::size_t k_min = 1;
  std::size_t k_max = 5;
  cplx amplitude_mean{10.0, 0.0};
  double amplitude_std = std::sqrt(5.0);  ///< sqrt of the total complex variance

  static SceneDistribution from_config(const Config& cfg) {
    SceneDistribution d;
    d.x_min = cfg.number("region_x_min", d.x_min);
    d.x_max = cfg.number("region_x_max", d.x_max);
    d.z_min = cfg.number("region_z_min", d.z_min);
    d.z_max = cfg.number("region_z_max", d.z_max);
    d.k_min = cfg.count("k_min", d.k_min);
    d.k_max = cfg.count("k_max", d.k_max);
    d.amplitude_mean = {cfg.number("amplitude_mean_re", 10.0), cfg.number("amplitude_mean_im", 0.0)};
    d.amplitude_std = std::sqrt(cfg.number("amplitude_variance", 5.0));
    return d;
  }

  /// Pixels whose centers fall inside the region (inclusive).
  std::vector<std::size_t> region_pixels(const PixelGrid& grid) const {
    std::vector<std::size_t> out;
    const double tol = 1e-12;
    for (std::size_t k = 0; k < grid.size(); ++k) {
      const auto [x, z] = grid.center(k);
      if (x >= x_min - tol && x <= x_max + tol && z >= z_min - tol && z <= z_max + tol) out.push_back(k);
    }
    return out;
  }

  void validate(const PixelGrid& grid) const {
    if (!(x_max > x_min) || !(z_max > z_min)) throw ConfigError("scene region is empty");
    if (k_min < 1 || k_max < k_min) throw ConfigError("scatterer count support must be a nonempty range >= 1");
    const double gx1 = grid.origin_x + static_cast<double>(grid.n_x) * grid.d_x;
    const double gz1 = grid.origin_z + static_cast<double>(grid.n_z) * grid.d_z;
    if (x_min < grid.origin_x || x_max > gx1 || z_min < grid.origin_z || z_max > gz1) {
      throw ConfigError("scene region extends outside the pixel grid");
    }
    if (region_pixels(grid).size() < k_max) throw ConfigError("scene region has fewer pixels than the maximum scatterer count");
  }
};

/// K ~ U{k_min..k_max} scatterers on distinct region pixels, amplitudes ~ CN(mean, std^2).
inline Scene sample_scene(const SceneDistribution& dist, const PixelGrid& grid, Rng& rng) {
  dist.validate(grid);
  const auto pixels = dist.region_pixels(grid);
  std::uniform_int_distribution<std::size_t> k_dist(dist.k_min, dist.k_max);
  std::uniform_int_distribution<std::size_t> pix_dist(0, pixels.size() - 1);
  std::normal_distribution<double> n01(0.0, dist.amplitude_std / std::sqrt(2.0));
  const std::size_t k = k_dist(rng);
  std::vector<Scatterer> sc;
  sc.reserve(k);
  while (sc.size() < k) {
    const auto p = pixels[pix_dist(rng)];
    if (std::any_of(sc.begin(), sc.end(), [p](const Scatterer& s) { return s.pixel == p; })) continue;
    Scatterer s;
    s.pixel = p;
    sc.push_back(s);
  }
  for (auto& s : sc) {
    const double re = n01(rng);
    s.amplitude = dist.amplitude_mean + cplx(re, n01(rng));
  }
  return Scene::from_scatterers(grid, std::move(sc));
}

struct Dataset {
  std::vector<Scene> scenes;
  std::vector<cvec> measurements;  ///< empty, or one y per scene
  std::uint64_t seed = 0;
  double noise_sigma = 0.0;
  SceneDistribution distribution;

  std::size_t size() const noexcept { return scenes.size(); }
  bool has_measurements() const noexcept { return !measurements.empty(); }
};

namespace detail {
inline constexpr std::uint64_t kSceneStream = 1;
inline constexpr std::uint64_t kNoiseStream = 2;
inline constexpr std::uint64_t kCalibrationStream = 3;
}  // namespace detail

/// Scene i uses its own sub-stream of `seed`, so generation order does not matter.
inline Dataset generate_dataset(const MeasurementModel& model, const SceneDistribution& dist, std::size_t n,
                                double noise_sigma, std::uint64_t seed) {
  require(n >= 1, "dataset must contain at least one scene");
  dist.validate(model.grid);
  Dataset ds;
  ds.seed = seed;
  ds.noise_sigma = noise_sigma;
  ds.distribution = dist;
  ds.scenes.reserve(n);
  ds.measurements.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto scene_rng = make_stream(seed, i, detail::kSceneStream);
    ds.scenes.push_back(sample_scene(dist, model.grid, scene_rng));
    auto noise_rng = make_stream(seed, i, detail::kNoiseStream);
    ds.measurements.push_back(simulate_measurement(model, ds.scenes.back(), noise_sigma, noise_rng));
  }
  return ds;
}

/// Noise sigma giving `snr_db` relative to the mean noiseless per-entry signal power of the distribution.
inline double noise_sigma_for_snr(const MeasurementModel& model, const SceneDistribution& dist, double snr_db,
                                  std::size_t n_calibration = 256, std::uint64_t seed = 0x5eed) {
  double power = 0.0;
  for (std::size_t i = 0; i < n_calibration; ++i) {
    auto rng = make_stream(seed, i, detail::kCalibrationStream);
    const Scene s = sample_scene(dist, model.grid, rng);
    power += (model.A * s.image).squaredNorm();
  }
  power /= static_cast<double>(n_calibration) * static_cast<double>(model.n_rows());
  return std::sqrt(power / std::pow(10.0, snr_db / 10.0));
}

// ---------------------------------------------------------------------------
// Dataset container:
//   magic "FMCDSET" + version byte
//   u64 seed, f64 noise_sigma, u64 n_scenes, u64 n_pixels, u64 n_meas (0 = no measurements)
//   distribution: f64 x_min x_max z_min z_max, u64 k_min k_max, f64 mean_re mean_im std
//   per scene: u32 K, then K x (u64 pixel, f64 amp_re, f64 amp_im)
//   measurements: n_scenes x n_meas x (f64 re, f64 im)

namespace detail {
inline constexpr std::string_view kDatasetMagic = "FMCDSET";
inline constexpr std::uint8_t kDatasetVersion = 1;
}  // namespace detail

/// Exact container size in bytes for the layout above.
inline std::size_t dataset_file_size(std::size_t n_scenes, std::size_t total_scatterers, std::size_t n_meas) {
  const std::size_t header = 8 + 8 + 8 + 8 + 8 + 8;
  const std::size_t dist = 4 * 8 + 2 * 8 + 3 * 8;
  return header + dist + n_scenes * 4 + total_scatterers * 24 + n_scenes * n_meas * 16;
}

inline std::string serialize_dataset(const Dataset& ds, std::size_t n_pixels) {
  if (ds.has_measurements() && ds.measurements.size() != ds.scenes.size()) {
    throw ContractViolation("measurement count differs from scene count");
  }
  const std::size_t n_meas = ds.has_measurements() ? static_cast<std::size_t>(ds.measurements.front().size()) : 0;
  binio::ByteWriter w;
  binio::write_magic(w, detail::kDatasetMagic, detail::kDatasetVersion);
  w.u64(ds.seed);
  w.f64(ds.noise_sigma);
  w.u64(ds.scenes.size());
  w.u64(n_pixels);
  w.u64(n_meas);
  const auto& d = ds.distribution;
  w.f64(d.x_min);
  w.f64(d.x_max);
  w.f64(d.z_min);
  w.f64(d.z_max);
  w.u64(d.k_min);
  w.u64(d.k_max);
  w.f64(d.amplitude_mean.real());
  w.f64(d.amplitude_mean.imag());
  w.f64(d.amplitude_std);
  for (const auto& s : ds.scenes) {
    w.u32(static_cast<std::uint32_t>(s.scatterers.size()));
    for (const auto& sc : s.scatterers) {
      w.u64(sc.pixel);
      w.c128(sc.amplitude);
    }
  }
  for (const auto& y : ds.measurements) {
    require(static_cast<std::size_t>(y.size()) == n_meas, "measurement vectors differ in length");
    w.c128_array(y.data(), n_meas);
  }
  return w.bytes();
}

inline Dataset deserialize_dataset(std::string_view bytes, const PixelGrid& grid) {
  binio::ByteReader r(bytes);
  binio::read_magic(r, detail::kDatasetMagic, detail::kDatasetVersion);
  Dataset ds;
  ds.seed = r.u64();
  ds.noise_sigma = r.f64();
  const auto n = r.u64();
  const auto n_pixels = r.u64();
  const auto n_meas = r.u64();
  if (n_pixels != grid.size()) throw FormatError("dataset pixel count does not match the model grid");
  auto& d = ds.distribution;
  d.x_min = r.f64();
  d.x_max = r.f64();
  d.z_min = r.f64();
  d.z_max = r.f64();
  d.k_min = r.u64();
  d.k_max = r.u64();
  const double mre = r.f64();
  d.amplitude_mean = {mre, r.f64()};
  d.amplitude_std = r.f64();
  if (n > r.remaining() / 4) throw FormatError("truncated file");
  ds.scenes.reserve(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    const auto k = r.u32();
    std::vector<Scatterer> sc(k);
    for (auto& s : sc) {
      s.pixel = r.u64();
      s.amplitude = r.c128();
      if (s.pixel >= grid.size()) throw FormatError("scatterer pixel out of range");
    }
    ds.scenes.push_back(Scene::from_scatterers(grid, std::move(sc)));
  }
  if (n_meas > 0) {
    if (r.remaining() != n * n_meas * 16) throw FormatError("truncated file");
    ds.measurements.resize(n);
    for (auto& y : ds.measurements) {
      y.resize(static_cast<Index>(n_meas));
      r.c128_array(y.data(), n_meas);
    }
  }
  r.expect_end();
  return ds;
}

inline void save_dataset(const Dataset& ds, std::size_t n_pixels, const std::filesystem::path& path) {
  binio::write_file(path, serialize_dataset(ds, n_pixels));
}

inline Dataset load_dataset(const std::filesystem::path& path, const PixelGrid& grid) {
  return deserialize_dataset(binio::read_file(path), grid);
}

/// Provenance manifest written next to a dataset.
inline std::string dataset_manifest(const Dataset& ds, const std::string& model_hash, const std::string& file_hash) {
  Config m;
  m.set_number("seed", ds.seed);
  m.set_number("n_scenes", ds.size());
  m.set_number("noise_sigma", ds.noise_sigma);
  m.set_number("region_x_min", ds.distribution.x_min);
  m.set_number("region_x_max", ds.distribution.x_max);
  m.set_number("region_z_min", ds.distribution.z_min);
  m.set_number("region_z_max", ds.distribution.z_max);
  m.set_number("k_min", ds.distribution.k_min);
  m.set_number("k_max", ds.distribution.k_max);
  m.set_number("amplitude_mean_re", ds.distribution.amplitude_mean.real());
  m.set_number("amplitude_mean_im", ds.distribution.amplitude_mean.imag());
  m.set_number("amplitude_variance", ds.distribution.amplitude_std * ds.distribution.amplitude_std);
  m.set("model_hash", model_hash);
  m.set("dataset_hash", file_hash);
  return m.to_text();
}

}  // namespace fmcsub

#endif  // FMCSUB_SCENE_GEN_HPP

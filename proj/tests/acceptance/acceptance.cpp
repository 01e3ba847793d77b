// SPDX-FileCopyrightText: © 2026 The fmcsub Authors
//
// SPDX-License-Identifier: Apache-2.0

// End-to-end acceptance run. Prints one PASS/FAIL line per criterion and exits
// nonzero if any criterion fails.
//
//   acceptance [--only 1,4,...] [--config desk.cfg] [--smoke-config smoke.cfg]
//              [--cli path/to/fmcsub] [--work dir]

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>

#include "../support.hpp"
#include "fmcsub/cli.hpp"

using namespace fmcsub;

namespace {

struct Outcome {
  bool pass;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// Compression ratios of the comparison table.
Outcome ratios() {
  const auto preset = paper_preset();
  const std::vector<std::size_t> kept{108, 108, 552, 576};
  const std::vector<std::string> shown{"", "", "13.3", "13.8"};
  bool ok = preset.size() == 4;
  std::string d;
  for (std::size_t i = 0; i < preset.size() && ok; ++i) {
    const auto& p = preset[i];
    const auto cr = compression_ratio(p.m_t, p.m_r, p.m_f, 8, 8, 65);
    ok &= cr.kept == kept[i] && cr.total == 4160;
    const std::string pct = fmt("%.1f", cr.percent());
    if (!shown[i].empty()) ok &= pct == shown[i];
    else ok &= std::abs(cr.percent() - 2.5) <= 0.1;
    d += fmt("%s %zu/%zu=%s%% ", p.name().c_str(), cr.kept, cr.total, pct.c_str());
  }
  return {ok, d};
}

// Initialized CL-FISTA against classical FISTA, layer by layer.
Outcome clfista_anchor() {
  Rng rng(2024);
  double worst = 0;
  for (int t = 0; t < 20; ++t) {
    const cmat a = test_support::random_cmat(24, 10, rng), y = test_support::random_cmat(24, 2, rng);
    const double mu = 1.0 / power_iteration_lmax(a), lam = 0.2;
    const auto net = UnrolledNet::from_model(a, mu, 15, mu * lam);
    std::vector<cmat> it;
    fista_solve(a, y, {15, mu, lam, 0}, [&](std::size_t, const cmat& x) { it.push_back(x); });
    ClfistaTape tape;
    clfista_forward(net, y, &tape);
    for (std::size_t j = 0; j < 15; ++j)
      worst = std::max(worst, (tape.x[j] - it[j]).norm() / std::max(it[j].norm(), 1e-300));
  }
  return {worst <= 1e-12, fmt("20 instances x 15 layers, worst relative gap %.2e", worst)};
}

Outcome gradients() {
  const auto s = test_support::gradient_probes(200, 1e-4, 7);
  const double rate = static_cast<double>(s.passed) / static_cast<double>(s.probes);
  return {rate >= 0.95, fmt("%zu/%zu probes within 1e-4 (%zu redrawn at kinks), worst %.2e", s.passed, s.probes,
                            s.skipped, s.worst)};
}

Outcome kron_algebra() {
  std::size_t ok = 0;
  for (int bits = 0; bits < 128; ++bits) {
    const rvec st = (rvec(2) << (bits & 1), (bits >> 1 & 1)).finished();
    const rvec sr = (rvec(2) << (bits >> 2 & 1), (bits >> 3 & 1)).finished();
    const rvec sf = (rvec(3) << (bits >> 4 & 1), (bits >> 5 & 1), (bits >> 6 & 1)).finished();
    // S_T (x) S_R (x) S_F built from the row-selection matrices, then S^T S read off its diagonal
    auto sel = [](const rvec& s) {
      const auto idx = active_indices(s);
      Eigen::MatrixXd m = Eigen::MatrixXd::Zero(static_cast<Index>(idx.size()), s.size());
      for (std::size_t r = 0; r < idx.size(); ++r) m(static_cast<Index>(r), static_cast<Index>(idx[r])) = 1;
      return m;
    };
    auto kron = [](const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
      Eigen::MatrixXd k(a.rows() * b.rows(), a.cols() * b.cols());
      for (Index i = 0; i < a.rows(); ++i)
        for (Index j = 0; j < a.cols(); ++j) k.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
      return k;
    };
    const Eigen::MatrixXd s = kron(kron(sel(st), sel(sr)), sel(sf));
    const rvec diag = s.rows() ? rvec((s.transpose() * s).diagonal()) : rvec(rvec::Zero(12));
    ok += kron_mask(st, sr, sf) == diag;
  }
  return {ok == 128, fmt("%zu/128 masks match the selection-matrix product", ok)};
}

// Brute-force minmax CRB over all (2,2) pairs of a 5-element array, with the
// criterion recomputed directly from the rows of A.
double enumerated_crb(const MeasurementModel& m, const std::vector<std::size_t>& tx, const std::vector<std::size_t>& rx,
                      const rvec& f_mask, const std::vector<std::size_t>& nb, double sigma) {
  const auto nf = static_cast<std::size_t>(f_mask.size()), nr = m.geometry.n_elements();
  cmat fim = cmat::Zero(static_cast<Index>(nb.size()), static_cast<Index>(nb.size()));
  for (auto i : tx)
    for (auto j : rx)
      for (std::size_t f = 0; f < nf; ++f) {
        if (f_mask[static_cast<Index>(f)] == 0) continue;
        const auto row = static_cast<Index>(f + nf * (j + nr * i));
        cvec a(static_cast<Index>(nb.size()));
        for (std::size_t c = 0; c < nb.size(); ++c) a[static_cast<Index>(c)] = m.A(row, static_cast<Index>(nb[c]));
        fim += a.conjugate() * a.transpose();
      }
  Eigen::FullPivLU<cmat> lu(fim);
  if (!lu.isInvertible()) return std::numeric_limits<double>::infinity();
  return sigma * sigma * lu.inverse().diagonal().real().sum();
}

Outcome crb_exhaustive() {
  PixelGrid grid;
  grid.n_z = 4;
  grid.n_x = 4;
  grid.origin_x = 1.6e-3;
  grid.origin_z = 2.0e-3;
  const auto m = build_measurement_matrix(ArrayGeometry::uniform_linear(5, 1e-3), grid, FrequencyGrid::band(128, 40e6, 8, 12));
  std::string d;
  bool ok = true;
  for (const auto crit : {CrbCriterion::kSingleAmplitude, CrbCriterion::kNeighborhoodTrace}) {
    CrbSearchSpec spec;
    spec.m_t = 2;
    spec.m_r = 2;
    spec.candidate_pixels = {5, 6, 9, 10};
    spec.noise_sigma = 0.3;
    spec.criterion = crit;
    spec.fixed_f_mask = (rvec(12) << 1, 0, 1, 0, 1, 1, 0, 1, 0, 1, 1, 0).finished();
    const auto res = exhaustive_minmax_search(m, spec);
    std::vector<std::pair<double, std::pair<rvec, rvec>>> all;
    for (std::size_t a = 0; a < 5; ++a)
      for (std::size_t b = a + 1; b < 5; ++b)
        for (std::size_t c = 0; c < 5; ++c)
          for (std::size_t e = c + 1; e < 5; ++e) {
            double worst = 0;
            for (auto k : spec.candidate_pixels) {
              const auto nb = crit == CrbCriterion::kSingleAmplitude ? std::vector<std::size_t>{k}
                                                                       : pixel_neighborhood(grid, k, 1);
              worst = std::max(worst, enumerated_crb(m, {a, b}, {c, e}, spec.fixed_f_mask, nb, spec.noise_sigma));
            }
            all.push_back({worst, {indicator(5, {a, b}), indicator(5, {c, e})}});
          }
    double best = std::numeric_limits<double>::infinity();
    for (const auto& x : all) best = std::min(best, x.first);
    std::size_t pick = 0;
    while (!(all[pick].first <= best * (1 + kCrbTieTolerance))) ++pick;
    const bool same = all[pick].second.first == res.s_t && all[pick].second.second == res.s_r;
    ok &= same && std::abs(res.value - best) <= 1e-9 * best;
    d += fmt("%s: search %.6e vs enumerator %.6e, argmin %s; ",
             crit == CrbCriterion::kSingleAmplitude ? "single" : "neighborhood", res.value, best,
             same ? "identical" : "differs");
  }
  return {ok, fmt("100 pairs each. ") + d};
}

// Noiseless, full sampling, scatterers confined to the scene region.
Outcome sparse_recovery() {
  const auto model = ModelSetup{}.build();
  SceneDistribution dist;
  dist.k_max = 3;
  const auto ds = generate_dataset(model, dist, 100, 0.0, 808);
  const auto reg = dist.region_pixels(model.grid);
  cmat ar(model.A.rows(), static_cast<Index>(reg.size()));
  for (std::size_t c = 0; c < reg.size(); ++c) ar.col(static_cast<Index>(c)) = model.A.col(static_cast<Index>(reg[c]));
  cmat y(model.A.rows(), 100);
  for (Index i = 0; i < 100; ++i) y.col(i) = ds.measurements[static_cast<std::size_t>(i)];
  const cmat gram = ar.adjoint() * ar, aty = ar.adjoint() * y;
  const double lam = 2e-7 * aty.cwiseAbs().colwise().maxCoeff().mean();
  const cmat x = fista_solve_gram(gram, aty, {100000, 1.0 / power_iteration_lmax(ar), lam, 0});
  std::size_t ok = 0;
  double worst_ok = 0;
  for (std::size_t i = 0; i < 100; ++i) {
    const auto& img = ds.scenes[i].image;
    const double floor = 1e-2 * img.cwiseAbs().maxCoeff();
    bool support = true;
    double err = 0;
    for (std::size_t c = 0; c < reg.size(); ++c) {
      const cplx t = img[static_cast<Index>(reg[c])], e = x(static_cast<Index>(c), static_cast<Index>(i));
      support &= (t != cplx(0, 0)) == (std::abs(e) > floor);
      if (t != cplx(0, 0)) err = std::max(err, std::abs(e - t) / std::abs(t));
    }
    if (support && err < 1e-2) {
      ++ok;
      worst_ok = std::max(worst_ok, err);
    }
  }
  return {ok >= 95, fmt("%zu/100 scenes with exact support and amplitudes within 1e-2 (region dictionary, 1e5 iterations)", ok)};
}

struct Desk {
  MeasurementModel model;
  Dataset train, test;
  RunConfig rc;
  Checkpoint jdps;
  EvalResult jdps_eval, crb_eval;
  std::vector<EvalResult> random;
};

Desk run_desk(const std::string& config, const std::filesystem::path& work) {
  Desk d;
  const auto t0 = std::chrono::steady_clock::now();
  auto lap = [&] { return detail::elapsed(t0); };
  d.rc = RunConfig::load(config);
  d.model = d.rc.model.build();
  const double sigma = d.rc.sigma(d.model);
  d.train = generate_dataset(d.model, d.rc.scenes, d.rc.n_train, sigma, 1);
  d.test = generate_dataset(d.model, d.rc.scenes, d.rc.n_test, sigma, 2);
  std::printf("  desk: model and data ready (sigma %.4g) at %.0f s\n", sigma, lap());
  std::fflush(stdout);
  const auto ck = train_method(d.model, d.train, d.rc, Method::kJdps, 1, [&](const TrainLogRecord& r) {
    if (r.iteration % 500 == 0) {
      std::printf("  desk: iteration %zu loss %.4g at %.0f s\n", r.iteration, r.loss, lap());
      std::fflush(stdout);
    }
  });
  save_checkpoint(ck, work / "desk_jdps.ck");
  d.jdps = load_checkpoint(work / "desk_jdps.ck");
  d.jdps_eval = evaluate_checkpoint(d.jdps, d.test);
  const FistaEval fe = FistaEval::from_config(d.rc.raw, d.rc.net.n_layer);
  const auto crb = crb_baseline(d.model, d.rc.scenes, sigma, d.rc.crb);
  d.crb_eval = evaluate_pattern_fista(d.model, crb.pattern, d.test, d.train, fe);
  for (std::size_t k = 0; k < d.rc.n_random; ++k) {
    d.random.push_back(evaluate_pattern_fista(d.model, random_pattern(d.model, 3, 4, 9, d.rc.random_seed + k), d.test,
                                              d.train, fe, "RANDOM-" + std::to_string(k)));
  }
  std::printf("  desk: evaluation done at %.0f s\n", lap());
  std::fflush(stdout);
  return d;
}

Outcome beats_random(const Desk& d) {
  const double j = d.jdps_eval.median_mse();
  std::size_t wins = 0;
  std::string meds;
  for (const auto& r : d.random) {
    wins += j < r.median_mse();
    meds += fmt(" %.4f", r.median_mse());
  }
  return {wins >= 9 && d.random.size() == 10,
          fmt("J-DPS median %.4f below %zu/%zu RANDOM medians:%s", j, wins, d.random.size(), meds.c_str())};
}

Outcome beats_crb(const Desk& d) {
  const double j = d.jdps_eval.median_mse(), c = d.crb_eval.median_mse();
  return {j < c, fmt("J-DPS median %.4f vs CRB median %.4f (gap %+.4f)", j, c, c - j)};
}

Outcome logits_count(const Checkpoint& ck) {
  const auto n = ck.selection.trainable_count();
  return {n == 81 && ck.selection.theta[0].size() == 8 && ck.selection.theta[1].size() == 8 &&
              ck.selection.theta[2].size() == 65,
          fmt("checkpoint holds %zu logits (8 + 8 + 65)", n)};
}

int sh(const std::string& cmd) {
  const int rc = std::system((cmd + " > /dev/null").c_str());
  return rc;
}

Outcome determinism(const std::string& cli, const std::string& config, const std::filesystem::path& work) {
  const auto w = work / "determinism";
  std::filesystem::create_directories(w);
  auto p = [&](const std::string& n) { return (w / n).string(); };
  const std::string base = cli + " ";
  const std::string c = " --config " + config + " --model " + p("model.fmc");
  bool ran = sh(base + "model build --config " + config + " --out " + p("model.fmc")) == 0 &&
             sh(base + "dataset gen" + c + " --n 96 --seed 1 --out " + p("train.fds")) == 0 &&
             sh(base + "dataset gen" + c + " --n 64 --seed 2 --out " + p("test.fds")) == 0 &&
             sh(base + "baseline crb" + c + " --out " + p("crb.pat")) == 0;
  std::array<std::string, 2> ck_hash, csv_hash;
  for (int run = 0; run < 2 && ran; ++run) {
    const std::string r = std::to_string(run);
    ran &= sh(base + "train jdps" + c + " --data " + p("train.fds") + " --seed 9 --out " + p("jdps" + r + ".ck")) == 0 &&
           sh(base + "train dps-t" + c + " --data " + p("train.fds") + " --seed 9 --out " + p("dpst" + r + ".ck")) == 0 &&
           sh(base + "train dps-f" + c + " --data " + p("train.fds") + " --seed 9 --out " + p("dpsf" + r + ".ck")) == 0;
    std::filesystem::create_directories(w / ("out" + r));
    ran &= sh(base + "eval compare --preset paper" + c + " --test " + p("test.fds") + " --calibration " + p("train.fds") +
              " --jdps " + p("jdps" + r + ".ck") + " --dps-t " + p("dpst" + r + ".ck") + " --dps-f " + p("dpsf" + r + ".ck") +
              " --crb " + p("crb.pat") + " --out-dir " + p("out" + r)) == 0;
    if (!ran) break;
    ck_hash[run] = detail::file_hash(p("jdps" + r + ".ck"));
    csv_hash[run] = detail::file_hash(p("out" + r + "/cdf.csv"));
  }
  if (!ran) return {false, "a CLI step failed"};
  const bool same = ck_hash[0] == ck_hash[1] && csv_hash[0] == csv_hash[1];
  return {same, fmt("checkpoint %.12s %s %.12s, cdf.csv %.12s %s %.12s", ck_hash[0].c_str(), ck_hash[0] == ck_hash[1] ? "==" : "!=",
                    ck_hash[1].c_str(), csv_hash[0].c_str(), csv_hash[0] == csv_hash[1] ? "==" : "!=", csv_hash[1].c_str())};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fmcsub acceptance run"};
  std::string only, config = FMCSUB_CONFIG_DIR "/desk.cfg", smoke = FMCSUB_CONFIG_DIR "/smoke.cfg",
                    cli = FMCSUB_CLI_PATH;
  std::string work = (std::filesystem::temp_directory_path() / "fmcsub_acceptance").string();
  app.add_option("--only", only, "Comma-separated criteria to run");
  app.add_option("--config", config, "Desk-scale config");
  app.add_option("--smoke-config", smoke, "Config for the determinism check");
  app.add_option("--cli", cli, "Path to the fmcsub executable");
  app.add_option("--work", work, "Scratch directory");
  CLI11_PARSE(app, argc, argv);

  std::set<int> want;
  for (std::size_t pos = 0; pos < only.size();) {
    const auto comma = only.find(',', pos);
    want.insert(std::stoi(only.substr(pos, comma - pos)));
    pos = comma == std::string::npos ? only.size() : comma + 1;
  }
  auto selected = [&](int k) { return want.empty() || want.count(k) != 0; };
  std::filesystem::create_directories(work);

  std::map<int, Outcome> results;
  auto run = [&](int k, auto&& fn) {
    if (!selected(k)) return;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      results[k] = fn();
    } catch (const std::exception& e) {
      results[k] = {false, std::string("threw: ") + e.what()};
    }
    std::printf("criterion %d: %s  %s  [%.1f s]\n", k, results[k].pass ? "PASS" : "FAIL", results[k].detail.c_str(),
                detail::elapsed(t0));
    std::fflush(stdout);
  };

  run(1, ratios);
  run(4, clfista_anchor);
  run(5, gradients);
  run(6, kron_algebra);
  run(7, crb_exhaustive);
  run(8, sparse_recovery);
  run(9, [&] { return determinism(cli, smoke, work); });
  if (selected(2) || selected(3) || selected(10)) {
    std::optional<Desk> desk;
    std::string err;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      desk = run_desk(config, work);
    } catch (const std::exception& e) {
      err = e.what();
    }
    const double secs = detail::elapsed(t0);
    auto report = [&](int k, auto&& fn) {
      if (!selected(k)) return;
      results[k] = desk ? fn(*desk) : Outcome{false, "desk run threw: " + err};
      std::printf("criterion %d: %s  %s  [desk run %.0f s]\n", k, results[k].pass ? "PASS" : "FAIL",
                  results[k].detail.c_str(), secs);
    };
    report(2, beats_random);
    report(3, beats_crb);
    report(10, [](const Desk& d) { return logits_count(d.jdps); });
  }

  std::printf("\nsummary:");
  bool all = true;
  for (const auto& [k, o] : results) {
    std::printf(" %d=%s", k, o.pass ? "PASS" : "FAIL");
    all &= o.pass;
  }
  std::printf("\n");
  return all ? 0 : 1;
}

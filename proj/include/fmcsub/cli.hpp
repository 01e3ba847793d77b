// SPDX-FileCopyrightText: © 2026 The fmcsub Authors
//
// SPDX-License-Identifier: Apache-2.0

#ifndef FMCSUB_CLI_HPP
#define FMCSUB_CLI_HPP

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fmcsub/harness.hpp"

namespace fmcsub {

namespace exit_code {
inline constexpr int kOk = 0;
inline constexpr int kFailure = 1;    // contract violations and anything unclassified
inline constexpr int kUsage = 2;      // bad flags or arguments
inline constexpr int kIo = 3;         // missing or unwritable files
inline constexpr int kFormat = 4;     // corrupt containers, bad config, hash mismatch
inline constexpr int kNumerical = 5;  // divergence, non-finite loss
inline constexpr int kResource = 6;   // size caps
}  // namespace exit_code

/// Everything one config file can describe, with defaults for the desk-scale setup.
struct RunConfig {
  Config raw;
  ModelSetup model;
  SceneDistribution scenes;
  TrainConfig train;
  NetConfig net;
  CrbBaselineConfig crb;
  double snr_db = 30.0;
  std::optional<double> noise_sigma;
  std::size_t noise_calibration_scenes = 256;
  std::uint64_t noise_calibration_seed = 0x5eed;
  std::size_t n_random = 10;
  std::uint64_t random_seed = 1000;
  std::size_t n_train = 4096;
  std::size_t n_test = 512;

  static RunConfig load(const std::string& path) {
    RunConfig r;
    if (!path.empty()) {
      if (!std::filesystem::exists(path)) throw IoError("config file not found: " + path);
      r.raw = Config::load(path);
    }
    const Config& c = r.raw;
    r.model = ModelSetup::from_config(c);
    r.scenes = SceneDistribution::from_config(c);
    r.train = TrainConfig::from_config(c);
    r.net = NetConfig::from_config(c);
    r.crb = CrbBaselineConfig::from_config(c);
    r.snr_db = c.number("snr_db", r.snr_db);
    if (c.has("noise_sigma")) r.noise_sigma = c.number("noise_sigma");
    r.noise_calibration_scenes = c.count("noise_calibration_scenes", r.noise_calibration_scenes);
    r.noise_calibration_seed = c.count("noise_calibration_seed", r.noise_calibration_seed);
    r.n_random = c.count("random_patterns", r.n_random);
    r.random_seed = c.count("random_seed", r.random_seed);
    r.n_train = c.count("n_train", r.n_train);
    r.n_test = c.count("n_test", r.n_test);
    if (r.n_train < 1 || r.n_test < 1) throw ConfigError("n_train and n_test must be positive");
    return r;
  }

  double sigma(const MeasurementModel& m) const {
    if (noise_sigma) return *noise_sigma;
    return noise_sigma_for_snr(m, scenes, snr_db, noise_calibration_scenes, noise_calibration_seed);
  }
};

/// Selection counts and pinned masks of one learned method.
struct LearnedSetup {
  Method method;
  std::array<std::size_t, 3> m;
  AxisPlan plan;
};

inline LearnedSetup learned_setup(Method method, const MeasurementModel& model, const CrbBaselineConfig& band,
                                  std::optional<std::array<std::size_t, 3>> counts = std::nullopt) {
  LearnedSetup s{method, {3, 4, 9}, {}};
  const std::array<std::size_t, 3> n{model.n_t(), model.n_r(), model.n_f()};
  switch (method) {
    case Method::kJdps:
      s.m = {3, 4, 9};
      break;
    case Method::kDpsT:
      s.m = {3, n[1], 23};
      break;
    case Method::kDpsF:
      s.m = {n[0], n[1], 9};
      break;
    default:
      throw ContractViolation("not a learned method");
  }
  if (counts) s.m = *counts;
  for (int a = 0; a < 3; ++a) {
    if (s.m[a] < 1 || s.m[a] > n[a]) throw ParameterError("active count out of range on axis " + std::string(axis_name(static_cast<Axis>(a))));
  }
  if (method == Method::kDpsT) {
    s.plan.trainable = {true, false, false};
    s.plan.pinned[1] = rvec::Ones(static_cast<Index>(n[1]));
    s.plan.pinned[2] = band_select_f(model.fgrid, s.m[2], model.geometry.f_c, band.band_lo, band.band_hi).mask;
    if (s.m[1] != n[1]) throw ParameterError("DPS-T keeps every receiver");
  } else if (method == Method::kDpsF) {
    s.plan.trainable = {false, false, true};
    s.plan.pinned[0] = rvec::Ones(static_cast<Index>(n[0]));
    s.plan.pinned[1] = rvec::Ones(static_cast<Index>(n[1]));
    if (s.m[0] != n[0] || s.m[1] != n[1]) throw ParameterError("DPS-F keeps every transmitter and receiver");
  }
  return s;
}

/// Initial logits, network and training run for one learned method.
inline Checkpoint train_method(const MeasurementModel& model, const Dataset& data, const RunConfig& rc, Method method,
                               std::uint64_t seed, const std::function<void(const TrainLogRecord&)>& on_log = {},
                               std::optional<std::array<std::size_t, 3>> counts = std::nullopt) {
  const LearnedSetup ls = learned_setup(method, model, rc.crb, counts);
  auto rng = make_stream(seed, 0, 30);
  SelectionState sel = SelectionState::init_uniform({model.n_t(), model.n_r(), model.n_f()}, ls.m, rng);
  UnrolledNet net = init_network(model, data, rc.net, sel, ls.plan);
  TrainConfig tc = rc.train;
  tc.seed = seed;
  TrainResult tr = train_selection(model, data, tc, std::move(net), std::move(sel), ls.plan, on_log);
  if (tc.finetune_iters > 0) {
    TrainResult ft = finetune_network(model, data, tc, std::move(tr.net), tr.selection, ls.plan, on_log);
    tr.net = std::move(ft.net);
  }
  return Checkpoint{method_name(method), model_hash(model), std::move(tr.net), std::move(tr.selection), ls.plan};
}

namespace detail {

inline void write_text(const std::filesystem::path& p, const std::string& s) { binio::write_file(p, s); }

inline MeasurementModel load_checked_model(const std::string& path) {
  if (!std::filesystem::exists(path)) throw IoError("model file not found: " + path);
  return load_model(path);
}

inline Dataset load_checked_dataset(const std::string& path, const MeasurementModel& m) {
  if (!std::filesystem::exists(path)) throw IoError("dataset file not found: " + path);
  Dataset d = load_dataset(path, m.grid);
  if (!d.has_measurements()) throw FormatError("dataset has no measurements: " + path);
  if (static_cast<std::size_t>(d.measurements.front().size()) != m.n_rows()) {
    throw FormatError("dataset measurement length does not match the model: " + path);
  }
  return d;
}

inline Checkpoint load_checked_checkpoint(const std::string& path, const std::string& mhash) {
  if (!std::filesystem::exists(path)) throw IoError("checkpoint file not found: " + path);
  Checkpoint c = load_checkpoint(path);
  if (c.model_hash != mhash) throw FormatError("checkpoint " + path + " was trained against a different model");
  return c;
}

inline std::string file_hash(const std::string& path) { return binio::sha256_hex(binio::read_file(path)); }

}  // namespace detail

/// Entry point of the command-line tool. Returns the process exit code.
inline int run_cli(int argc, char** argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Joint subsampling design for full-matrix-capture ultrasound"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "fmcsub 0.1.0");

  std::string config_path;
  auto add_config = [&](CLI::App* c) { c->add_option("--config", config_path, "key = value configuration file"); };

  // model build
  auto* model_cmd = app.add_subcommand("model", "Measurement model");
  model_cmd->require_subcommand(1);
  auto* model_build = model_cmd->add_subcommand("build", "Build and save the measurement matrix");
  std::string model_out;
  add_config(model_build);
  model_build->add_option("--out", model_out, "Output model file")->required();

  // dataset gen
  auto* ds_cmd = app.add_subcommand("dataset", "Synthetic scenes");
  ds_cmd->require_subcommand(1);
  auto* ds_gen = ds_cmd->add_subcommand("gen", "Generate scenes and noisy measurements");
  std::string model_path, ds_out;
  std::size_t ds_n = 0;
  std::uint64_t ds_seed = 0;
  std::optional<double> ds_sigma;
  add_config(ds_gen);
  ds_gen->add_option("--model", model_path, "Model file")->required();
  ds_gen->add_option("--n", ds_n, "Number of scenes")->required()->check(CLI::PositiveNumber);
  ds_gen->add_option("--seed", ds_seed, "Scene and noise seed")->required();
  ds_gen->add_option("--sigma", ds_sigma, "Noise standard deviation (overrides snr_db)");
  ds_gen->add_option("--out", ds_out, "Output dataset file")->required();

  // train
  auto* train_cmd = app.add_subcommand("train", "Learn a subsampling pattern and its CL-FISTA network");
  train_cmd->require_subcommand(1);
  std::string data_path, ck_out, log_path;
  std::uint64_t train_seed = 0;
  std::vector<std::size_t> counts;
  std::map<std::string, Method> train_methods{{"jdps", Method::kJdps}, {"dps-t", Method::kDpsT}, {"dps-f", Method::kDpsF}};
  std::map<CLI::App*, Method> train_cmds;
  for (const auto& [name, m] : train_methods) {
    auto* c = train_cmd->add_subcommand(name, std::string("Train ") + method_name(m));
    add_config(c);
    c->add_option("--model", model_path, "Model file")->required();
    c->add_option("--data", data_path, "Training dataset")->required();
    c->add_option("--seed", train_seed, "Logits init, Gumbel and batch-order seed")->required();
    c->add_option("--out", ck_out, "Output checkpoint")->required();
    c->add_option("--log", log_path, "Write the training log as JSON lines");
    c->add_option("--counts", counts, "Active counts m_t m_r m_f")->expected(3);
    train_cmds[c] = m;
  }

  // baseline crb
  auto* base_cmd = app.add_subcommand("baseline", "Non-learned baselines");
  base_cmd->require_subcommand(1);
  auto* crb_cmd = base_cmd->add_subcommand("crb", "Band selection plus exhaustive minmax CRB search");
  std::string pattern_out;
  add_config(crb_cmd);
  crb_cmd->add_option("--model", model_path, "Model file")->required();
  crb_cmd->add_option("--out", pattern_out, "Output pattern file")->required();

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Reconstruction quality");
  eval_cmd->require_subcommand(1);
  auto* eval_run = eval_cmd->add_subcommand("run", "Evaluate one checkpoint or pattern");
  std::string test_path, calib_path, ck_path, pattern_path, result_out, label;
  add_config(eval_run);
  eval_run->add_option("--model", model_path, "Model file")->required();
  eval_run->add_option("--test", test_path, "Test dataset")->required();
  auto* ck_opt = eval_run->add_option("--checkpoint", ck_path, "Checkpoint (CL-FISTA)");
  auto* pat_opt = eval_run->add_option("--pattern", pattern_path, "Pattern file (FISTA)");
  ck_opt->excludes(pat_opt);
  eval_run->add_option("--calibration", calib_path, "Dataset for the FISTA lambda choice");
  eval_run->add_option("--label", label, "Series name");
  eval_run->add_option("--out", result_out, "Output CSV")->required();

  auto* eval_cmp = eval_cmd->add_subcommand("compare", "Evaluate the comparison table on one test set");
  std::string preset = "paper", out_dir, jdps_ck, dpst_ck, dpsf_ck, crb_pattern;
  std::optional<std::size_t> n_random;
  std::optional<std::uint64_t> random_seed;
  add_config(eval_cmp);
  eval_cmp->add_option("--preset", preset, "Method set")->check(CLI::IsMember({"paper"}));
  eval_cmp->add_option("--model", model_path, "Model file")->required();
  eval_cmp->add_option("--test", test_path, "Test dataset")->required();
  eval_cmp->add_option("--calibration", calib_path, "Dataset for the FISTA lambda choice")->required();
  eval_cmp->add_option("--jdps", jdps_ck, "J-DPS checkpoint")->required();
  eval_cmp->add_option("--dps-t", dpst_ck, "DPS-T checkpoint")->required();
  eval_cmp->add_option("--dps-f", dpsf_ck, "DPS-F checkpoint")->required();
  eval_cmp->add_option("--crb", crb_pattern, "CRB pattern file")->required();
  eval_cmp->add_option("--random", n_random, "Number of RANDOM (3,4,9) patterns to add");
  eval_cmp->add_option("--random-seed", random_seed, "Base seed of the RANDOM patterns");
  eval_cmp->add_option("--out-dir", out_dir, "Output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e, out, err);
    return rc == 0 ? exit_code::kOk : exit_code::kUsage;
  }

  try {
    const RunConfig rc = RunConfig::load(config_path);

    if (model_build->parsed()) {
      const auto m = rc.model.build();
      save_model(m, model_out);
      out << "model " << m.n_rows() << "x" << m.n_pixels() << " " << model_hash(m) << "\n";
      return exit_code::kOk;
    }

    if (ds_gen->parsed()) {
      const auto m = detail::load_checked_model(model_path);
      const double sigma = ds_sigma ? *ds_sigma : rc.sigma(m);
      const auto ds = generate_dataset(m, rc.scenes, ds_n, sigma, ds_seed);
      save_dataset(ds, m.n_pixels(), ds_out);
      const auto fh = detail::file_hash(ds_out);
      detail::write_text(ds_out + ".manifest", dataset_manifest(ds, model_hash(m), fh));
      out << "dataset " << ds.size() << " scenes, sigma " << sigma << ", " << fh << "\n";
      return exit_code::kOk;
    }

    for (const auto& [cmd, method] : train_cmds) {
      if (!cmd->parsed()) continue;
      const auto m = detail::load_checked_model(model_path);
      const auto data = detail::load_checked_dataset(data_path, m);
      std::optional<std::array<std::size_t, 3>> cnt;
      if (!counts.empty()) cnt = std::array<std::size_t, 3>{counts[0], counts[1], counts[2]};
      std::ofstream log;
      if (!log_path.empty()) {
        if (auto parent = std::filesystem::path(log_path).parent_path(); !parent.empty()) {
          std::filesystem::create_directories(parent);
        }
        log.open(log_path, std::ios::binary);
        if (!log) throw IoError("cannot write " + log_path);
      }
      const auto ck = train_method(m, data, rc, method, train_seed, [&](const TrainLogRecord& r) {
        if (log) log << r.to_json() << "\n";
      }, cnt);
      save_checkpoint(ck, ck_out);
      out << method_name(method) << " checkpoint " << detail::file_hash(ck_out) << "\n" << ck.pattern().to_text();
      return exit_code::kOk;
    }

    if (crb_cmd->parsed()) {
      const auto m = detail::load_checked_model(model_path);
      const auto res = crb_baseline(m, rc.scenes, rc.sigma(m), rc.crb);
      save_pattern(res.pattern, pattern_out);
      out << "crb minmax " << res.search.value << " over " << res.search.evaluated << " pairs"
          << (res.band_fallback ? " (band fallback)" : "") << "\n"
          << res.pattern.to_text();
      return exit_code::kOk;
    }

    const FistaEval fe = FistaEval::from_config(rc.raw, rc.net.n_layer);

    if (eval_run->parsed()) {
      const auto m = detail::load_checked_model(model_path);
      const auto test = detail::load_checked_dataset(test_path, m);
      EvalResult r;
      if (!ck_path.empty()) {
        r = evaluate_checkpoint(detail::load_checked_checkpoint(ck_path, model_hash(m)), test, label);
      } else if (!pattern_path.empty()) {
        if (calib_path.empty()) throw ParameterError("--pattern needs --calibration for the FISTA lambda");
        if (!std::filesystem::exists(pattern_path)) throw IoError("pattern file not found: " + pattern_path);
        const auto calib = detail::load_checked_dataset(calib_path, m);
        r = evaluate_pattern_fista(m, load_pattern(pattern_path), test, calib, fe, label);
      } else {
        throw ParameterError("eval run needs --checkpoint or --pattern");
      }
      detail::write_text(result_out, cdf_csv({r}));
      out << r.label << " median mse " << r.median_mse() << "\n";
      return exit_code::kOk;
    }

    if (eval_cmp->parsed()) {
      const auto m = detail::load_checked_model(model_path);
      const auto mh = model_hash(m);
      const auto test = detail::load_checked_dataset(test_path, m);
      const auto calib = detail::load_checked_dataset(calib_path, m);
      for (const auto* p : {&jdps_ck, &dpst_ck, &dpsf_ck, &crb_pattern}) {
        if (!std::filesystem::exists(*p)) throw IoError("file not found: " + *p);
      }
      std::vector<EvalResult> results;
      for (const auto& spec : paper_preset()) {
        switch (spec.method) {
          case Method::kJdps: results.push_back(evaluate_checkpoint(detail::load_checked_checkpoint(jdps_ck, mh), test, spec.name())); break;
          case Method::kDpsT: results.push_back(evaluate_checkpoint(detail::load_checked_checkpoint(dpst_ck, mh), test, spec.name())); break;
          case Method::kDpsF: results.push_back(evaluate_checkpoint(detail::load_checked_checkpoint(dpsf_ck, mh), test, spec.name())); break;
          case Method::kCrb: results.push_back(evaluate_pattern_fista(m, load_pattern(crb_pattern), test, calib, fe, spec.name())); break;
          default: break;
        }
      }
      const std::size_t nr = n_random.value_or(rc.n_random);
      const std::uint64_t rs = random_seed.value_or(rc.random_seed);
      for (std::size_t k = 0; k < nr; ++k) {
        const auto p = random_pattern(m, 3, 4, 9, rs + k);
        results.push_back(evaluate_pattern_fista(m, p, test, calib, fe, "RANDOM-" + std::to_string(k)));
      }
      const std::filesystem::path dir(out_dir);
      const auto csv = dir / "cdf.csv", svg = dir / "cdf.svg", rep = dir / "report.txt", man = dir / "manifest.json";
      detail::write_text(csv, cdf_csv(results));
      detail::write_text(svg, cdf_svg(results));
      const std::string report = comparison_report(results);
      detail::write_text(rep, report);
      std::map<std::string, std::string> inputs{{"model", mh},
                                                {"test", detail::file_hash(test_path)},
                                                {"calibration", detail::file_hash(calib_path)},
                                                {"jdps", detail::file_hash(jdps_ck)},
                                                {"dps_t", detail::file_hash(dpst_ck)},
                                                {"dps_f", detail::file_hash(dpsf_ck)},
                                                {"crb", detail::file_hash(crb_pattern)}};
      std::map<std::string, std::string> outputs{{"cdf.csv", detail::file_hash(csv.string())},
                                                 {"cdf.svg", detail::file_hash(svg.string())},
                                                 {"report.txt", detail::file_hash(rep.string())}};
      detail::write_text(man, output_manifest(inputs, outputs));
      out << report;
      return exit_code::kOk;
    }
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return exit_code::kIo;
  } catch (const FormatError& e) {
    err << "error: " << e.what() << "\n";
    return exit_code::kFormat;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return exit_code::kFormat;
  } catch (const ParameterError& e) {
    err << "error: " << e.what() << "\n";
    return exit_code::kUsage;
  } catch (const NumericalError& e) {
    err << "error: " << e.what() << "\n";
    return exit_code::kNumerical;
  } catch (const ResourceError& e) {
    err << "error: " << e.what() << "\n";
    return exit_code::kResource;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return exit_code::kFailure;
  }
  return exit_code::kFailure;
}

}  // namespace fmcsub

#endif  // FMCSUB_CLI_HPP

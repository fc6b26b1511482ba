// Copyright 2026 The frkmap Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "frk/config.hpp"
#include "frk/em.hpp"
#include "frk/error.hpp"
#include "frk/evaluation.hpp"
#include "frk/io.hpp"
#include "frk/moments.hpp"
#include "frk/multicell.hpp"
#include "frk/predict.hpp"
#include "frk/synthetic.hpp"

namespace frk {
namespace logging {

enum class Level { quiet = 0, warn = 1, info = 2, debug = 3 };

inline Level level() {
  static const Level lvl = [] {
    const char* v = std::getenv("FRK_LOG");
    if (!v) return Level::warn;
    const std::string s(v);
    if (s == "quiet") return Level::quiet;
    if (s == "info") return Level::info;
    if (s == "debug") return Level::debug;
    return Level::warn;
  }();
  return lvl;
}

inline void emit(Level at, const std::string& msg) {
  if (level() >= at) {
    std::fprintf(stderr, "frkmap: %s\n", msg.c_str());
  }
}

inline void warn(const std::string& msg) { emit(Level::warn, msg); }
inline void info(const std::string& msg) { emit(Level::info, msg); }
inline void debug(const std::string& msg) { emit(Level::debug, msg); }

}  // namespace logging

namespace cli {

namespace detail {

inline Location parse_point(const std::string& text, const char* flag) {
  const auto tok = frk::detail::split_csv(text);
  if (tok.size() != 2) {
    throw InvalidParameter(std::string(flag) + " expects 'x,y'");
  }
  return {frk::detail::parse_double(tok[0], flag, 1, "x"),
          frk::detail::parse_double(tok[1], flag, 1, "y")};
}

inline BoundingBox parse_bbox(const std::string& text, const char* flag) {
  const auto tok = frk::detail::split_csv(text);
  if (tok.size() != 4) {
    throw InvalidParameter(std::string(flag) +
                           " expects 'min_x,min_y,max_x,max_y'");
  }
  BoundingBox b{frk::detail::parse_double(tok[0], flag, 1, "min_x"),
                frk::detail::parse_double(tok[1], flag, 1, "min_y"),
                frk::detail::parse_double(tok[2], flag, 1, "max_x"),
                frk::detail::parse_double(tok[3], flag, 1, "max_y")};
  validate_box(b);
  return b;
}

/// Options shared by the single-cell fitting subcommands.
struct TrendFlags {
  std::string tx{};
  double min_dist{1.0};
  double azimuth{0.0};
  double psi3db{65.0};
  double am{30.0};
  bool has_azimuth{false};

  TrendSpec to_spec() const {
    TrendSpec spec;
    spec.tx_location = parse_point(tx, "--tx");
    spec.min_dist = min_dist;
    if (has_azimuth) {
      spec.gain_model = AntennaSpec{spec.tx_location, azimuth, psi3db, am};
    }
    return spec;
  }
};

inline void add_trend_flags(CLI::App* sub, TrendFlags& f) {
  sub->add_option("--tx", f.tx, "transmitter location 'x,y' (required)")
      ->required();
  sub->add_option("--min-dist", f.min_dist,
                  "distance floor in meters before the log (default 1)");
  CLI::Option* az = sub->add_option(
      "--azimuth", f.azimuth,
      "antenna boresight azimuth in degrees; enables the gain trend column");
  sub->add_option("--psi3db", f.psi3db,
                  "antenna half-power beamwidth in degrees (default 65)")
      ->needs(az);
  sub->add_option("--am", f.am,
                  "antenna maximum attenuation in dB (default 30)")
      ->needs(az);
  sub->callback([&f, az] { f.has_azimuth = az->count() > 0; });
}

struct EmFlags {
  EmConfig cfg{};
};

inline void add_em_flags(CLI::App* sub, EmFlags& f) {
  sub->add_option("--em-tol", f.cfg.tol,
                  "parameter-change stopping tolerance (default 1e-5)");
  sub->add_option("--em-patience", f.cfg.patience,
                  "consecutive small-change iterations before stopping "
                  "(default 100)");
  sub->add_option("--em-max-iter", f.cfg.max_iter,
                  "iteration cap (default 5000)");
  sub->add_option("--em-backtrack", f.cfg.backtrack_max,
                  "max step halvings in the phi update (default 50)");
  sub->add_option("--phi-init-ratio", f.cfg.phi_over_tau_init,
                  "initial correlation range = tau / this (default 5)");
}

}  // namespace detail

/// Runs the command line given args without the program name. Returns the
/// process exit code.
inline int run(std::vector<std::string> args) {
  CLI::App app{
      "frkmap: radio coverage maps from geo-located power measurements by "
      "fixed-rank kriging"};
  app.require_subcommand(1);

  // --- simulate ---------------------------------------------------------
  auto* sim = app.add_subcommand(
      "simulate", "generate synthetic measurement data sets");
  std::string sim_model = "frk";
  std::string sim_out, sim_bbox = "0,0,950,950", sim_tx, sim_config;
  std::uint64_t sim_seed = 1;
  long sim_n = 2000;
  double sim_grid_step = 0.0;
  double sim_pt = -49.55, sim_kappa = 2.73, sim_sigma2 = 3.0;
  double sim_tau = 50.0, sim_inv_beta = 12.5, sim_phi = 3.63;
  double sim_min_dist = 1.0;
  bool sim_noisy_selection = false;
  sim->add_option("--model", sim_model,
                  "truth model: logdist | lognormal | frk | multicell")
      ->check(CLI::IsMember({"logdist", "lognormal", "frk", "multicell"}));
  sim->add_option("--out", sim_out, "output measurement CSV")->required();
  CLI::Option* sim_seed_opt =
      sim->add_option("--seed", sim_seed, "RNG seed (default 1)");
  sim->add_option("--bbox", sim_bbox, "area 'min_x,min_y,max_x,max_y'");
  CLI::Option* sim_n_opt =
      sim->add_option("--n", sim_n, "number of uniform random locations");
  sim->add_option("--grid-step", sim_grid_step,
                  "regular grid spacing instead of random locations")
      ->excludes(sim_n_opt);
  sim->add_option("--tx", sim_tx, "transmitter 'x,y' (default: bbox center)");
  sim->add_option("--pt", sim_pt, "transmit power p_t in dB");
  sim->add_option("--kappa", sim_kappa, "path-loss exponent");
  sim->add_option("--sigma2", sim_sigma2,
                  "noise variance (lognormal: shadowing variance)");
  sim->add_option("--tau", sim_tau, "basis support radius (frk truth)");
  sim->add_option("--inv-beta", sim_inv_beta,
                  "random-effect scale 1/beta (frk truth)");
  sim->add_option("--phi", sim_phi, "log correlation range (frk truth)");
  sim->add_option("--min-dist", sim_min_dist, "trend distance floor");
  sim->add_option("--config", sim_config,
                  "scenario JSON (required for --model multicell)");
  sim->add_flag("--noisy-selection", sim_noisy_selection,
                "multicell: pick the serving cell on noisy values");
  sim->callback([&] {
    SamplePlan plan;
    plan.bbox = detail::parse_bbox(sim_bbox, "--bbox");
    if (sim_grid_step > 0.0) {
      plan.count = 0;
      plan.grid_step = sim_grid_step;
    } else {
      plan.count = sim_n;
    }
    if (sim_model == "multicell") {
      if (sim_config.empty()) {
        throw InvalidParameter("--model multicell requires --config");
      }
      const ScenarioConfig cfg = load_scenario_config(sim_config);
      const std::vector<TrueCell> layout = scenario_truth(cfg);
      plan.bbox = cfg.bbox;
      const std::uint64_t seed =
          sim_seed_opt->count() > 0 ? sim_seed : cfg.seed;
      const MulticellSample sample =
          gen_multicell(layout, plan, cfg.tau, seed, sim_noisy_selection);
      write_measurements(sim_out, sample.obs);
      logging::info("simulate: wrote " + std::to_string(sample.obs.size()) +
                    " labeled measurements (" +
                    std::to_string(sample.n_uncovered) +
                    " uncovered locations skipped) to " + sim_out);
      return;
    }
    TrendSpec trend;
    trend.tx_location = sim_tx.empty() ? plan.bbox.center()
                                       : detail::parse_point(sim_tx, "--tx");
    trend.min_dist = sim_min_dist;
    if (sim_model == "logdist" || sim_model == "lognormal") {
      const double shadow = sim_model == "logdist" ? 0.0 : sim_sigma2;
      const std::vector<Measurement> obs =
          gen_lognormal(plan, trend, sim_pt, sim_kappa, shadow, sim_seed);
      write_measurements(sim_out, obs);
      logging::info("simulate: wrote " + std::to_string(obs.size()) +
                    " measurements to " + sim_out);
      return;
    }
    // frk truth: random effects on the full (unpruned) candidate grid.
    BasisSet basis;
    basis.tau = sim_tau;
    basis.centers = candidate_grid(plan.bbox, sim_tau);
    ModelParams params;
    params.alpha = Eigen::Vector2d(sim_pt, sim_kappa);
    params.sigma2 = sim_sigma2;
    if (!(sim_inv_beta > 0.0)) {
      throw InvalidParameter("--inv-beta must be positive");
    }
    params.beta = 1.0 / sim_inv_beta;
    params.phi = sim_phi;
    const FrkSample sample = gen_frk(plan, trend, basis, params, sim_seed);
    write_measurements(sim_out, sample.obs);
    logging::info("simulate: wrote " + std::to_string(sample.obs.size()) +
                  " measurements (r=" + std::to_string(basis.rank()) +
                  " basis truth) to " + sim_out);
  });

  // --- fit ---------------------------------------------------------------
  auto* fit = app.add_subcommand(
      "fit", "fit the low-rank model to a measurement CSV by EM");
  std::string fit_data, fit_out, fit_trace;
  double fit_tau = 0.0;
  detail::TrendFlags fit_trend;
  detail::EmFlags fit_em_flags;
  fit->add_option("--data", fit_data, "measurement CSV")->required();
  fit->add_option("--tau", fit_tau, "basis support radius in meters")
      ->required();
  detail::add_trend_flags(fit, fit_trend);
  detail::add_em_flags(fit, fit_em_flags);
  fit->add_option("--out", fit_out, "output model JSON")->required();
  fit->add_option("--trace", fit_trace, "optional EM trace JSON");
  fit->callback([&] {
    const std::vector<Measurement> obs = read_measurements(fit_data);
    const TrendSpec trend = fit_trend.to_spec();
    const BasisSet basis = build_basis_set(
        bounding_box(measurement_locations(obs)), fit_tau,
        measurement_locations(obs));
    const EmFit result = fit_em(obs, basis, trend, fit_em_flags.cfg);
    save_model(fit_out, result.model);
    if (!fit_trace.empty()) {
      save_json(fit_trace, em_trace_to_json(result.trace));
    }
    if (!result.model.converged) {
      logging::warn("fit: EM hit max_iter without meeting the stopping rule; "
                    "wrote the last iterate");
    }
    logging::info(
        "fit: r=" + std::to_string(basis.rank()) + " iterations=" +
        std::to_string(result.model.iterations) + " sigma2=" +
        frk::detail::format_double(result.model.params.sigma2) + " -> " +
        fit_out);
  });

  // --- fit-moments ---------------------------------------------------
  auto* fitm = app.add_subcommand(
      "fit-moments",
      "method-of-moments estimation of (sigma2, K) with PD diagnostics");
  std::string fitm_data, fitm_out;
  double fitm_tau = 0.0;
  long fitm_bins = 0;
  bool fitm_repair = false, fitm_strict_bins = false;
  detail::TrendFlags fitm_trend;
  fitm->add_option("--data", fitm_data, "measurement CSV")->required();
  fitm->add_option("--tau", fitm_tau, "basis support radius in meters")
      ->required();
  detail::add_trend_flags(fitm, fitm_trend);
  fitm->add_option("--bins", fitm_bins,
                   "bin count M (default: 4 r clipped to (r, N/4])");
  fitm->add_flag("--repair", fitm_repair,
                 "lift non-positive eigenvalues of K_hat to a small floor");
  fitm->add_flag("--error-empty-bins", fitm_strict_bins,
                 "treat empty bins as an error instead of dropping them");
  fitm->add_option("--out", fitm_out, "output report JSON")->required();
  fitm->callback([&] {
    const std::vector<Measurement> obs = read_measurements(fitm_data);
    const TrendSpec trend = fitm_trend.to_spec();
    const std::vector<Location> locs = measurement_locations(obs);
    const BasisSet basis = build_basis_set(bounding_box(locs), fitm_tau, locs);
    const DesignMatrices dm = build_design_matrices(obs, basis, trend);
    const Eigen::Index m_bins =
        fitm_bins > 0 ? static_cast<Eigen::Index>(fitm_bins)
                      : default_bin_count(dm.r(), dm.n());
    BinOptions bo;
    bo.drop_empty = !fitm_strict_bins;
    const MomentsBinning mb = bin_observations(obs, dm, m_bins, bo);
    const Eigen::MatrixXd shm = sigma_hat_m(mb.dbar, mb.vbar);
    const Eigen::MatrixXd s_m = bin_rows(dm.S, mb.binning);
    FitMomentsOptions fo;
    fo.repair_non_pd = fitm_repair;
    const MomentsResult res = fit_moments(mb, shm, s_m, fo);
    save_json(fitm_out, moments_to_json(res, mb.binning.m()));
    if (!res.diagnostics.k_hat_pd) {
      logging::warn(
          "fit-moments: K_hat is not positive definite; it is reported for "
          "diagnostics and must not be used for prediction" +
          std::string(res.repaired ? " (repaired copy included)" : ""));
    }
    logging::info("fit-moments: M=" + std::to_string(mb.binning.m()) +
                  " sigma2_hat=" +
                  frk::detail::format_double(res.sigma2_hat) + " -> " +
                  fitm_out);
  });

  // --- predict -------------------------------------------------------
  auto* pred = app.add_subcommand(
      "predict", "evaluate a fitted model on a regular grid");
  std::string pred_model, pred_out, pred_bbox;
  double pred_res = 0.0;
  bool pred_noise = false;
  std::size_t pred_cap = 2000000;
  pred->add_option("--model", pred_model, "model JSON from 'fit'")->required();
  pred->add_option("--out", pred_out, "output grid CSV")->required();
  pred->add_option("--resolution", pred_res, "cell size in meters")
      ->required();
  pred->add_option("--bbox", pred_bbox,
                   "grid area (default: the fitted data's bounding box)");
  pred->add_flag("--include-noise", pred_noise,
                 "add the fitted noise variance to every cell variance");
  pred->add_option("--max-points", pred_cap,
                   "refuse larger grids (default 2e6 cells)");
  pred->callback([&] {
    const FittedModel model = load_model(pred_model);
    BoundingBox box;
    if (!pred_bbox.empty()) {
      box = detail::parse_bbox(pred_bbox, "--bbox");
    } else if (model.data_bbox) {
      box = *model.data_bbox;
    } else {
      throw InvalidParameter(
          "--bbox is required: the model stores no data bounding box");
    }
    GridOptions opt;
    opt.add_noise_variance = pred_noise;
    opt.max_points = pred_cap;
    const PredictionGrid grid = predict_grid(box, pred_res, model, opt);
    write_grid(pred_out, grid);
    logging::info("predict: " + std::to_string(grid.nx) + "x" +
                  std::to_string(grid.ny) + " cells -> " + pred_out);
  });

  // --- crossval --------------------------------------------------------
  auto* cv = app.add_subcommand(
      "crossval", "k-fold cross-validated prediction error");
  std::string cv_data, cv_method, cv_out;
  double cv_tau = 0.0;
  int cv_k = 5;
  std::uint64_t cv_seed = 1;
  bool cv_timing = false;
  detail::TrendFlags cv_trend;
  detail::EmFlags cv_em_flags;
  cv->add_option("--data", cv_data, "measurement CSV")->required();
  cv->add_option("--method", cv_method, "lognormal | frk")
      ->required()
      ->check(CLI::IsMember({"lognormal", "frk"}));
  cv->add_option("--tau", cv_tau, "basis support radius (frk only)");
  cv->add_option("--k", cv_k, "number of folds (default 5)");
  cv->add_option("--seed", cv_seed, "fold shuffle seed (default 1)");
  detail::add_trend_flags(cv, cv_trend);
  detail::add_em_flags(cv, cv_em_flags);
  cv->add_option("--out", cv_out, "output report JSON")->required();
  cv->add_flag("--emit-timing", cv_timing,
               "include per-fold wall-clock timing (breaks byte-for-byte "
               "reproducibility)");
  cv->callback([&] {
    const std::vector<Measurement> obs = read_measurements(cv_data);
    const TrendSpec trend = cv_trend.to_spec();
    CvMethod method;
    if (cv_method == "frk") {
      method.kind = CvMethod::Kind::frk;
      if (!(cv_tau > 0.0)) {
        throw InvalidParameter("--method frk requires --tau > 0");
      }
      method.tau = cv_tau;
      method.em = cv_em_flags.cfg;
    }
    const CvReport rep = cross_validate(obs, trend, method, cv_k, cv_seed);
    save_json(cv_out, cv_report_to_json(rep, cv_timing));
    long failed = 0;
    for (const FoldResult& f : rep.folds) {
      failed += f.failed ? 1 : 0;
    }
    if (failed > 0) {
      logging::warn("crossval: " + std::to_string(failed) +
                    " fold(s) failed; they are excluded from the mean");
    }
    logging::info("crossval: mean RMSE " +
                  frk::detail::format_double(rep.mean_rmse) + " -> " + cv_out);
  });

  // --- multicell-fit -----------------------------------------------
  auto* mcf = app.add_subcommand(
      "multicell-fit", "fit one model per cell from labeled measurements");
  std::string mcf_data, mcf_config, mcf_out;
  bool mcf_omni = false;
  mcf->add_option("--data", mcf_data, "measurement CSV with cid column")
      ->required();
  mcf->add_option("--config", mcf_config, "scenario JSON with the cell list")
      ->required();
  mcf->add_flag("--omni", mcf_omni,
                "fit omnidirectional trends (no antenna-gain column)");
  mcf->add_option("--out", mcf_out, "output multicell model JSON")->required();
  mcf->callback([&] {
    const std::vector<Measurement> obs = read_measurements(mcf_data);
    const ScenarioConfig cfg = load_scenario_config(mcf_config);
    MulticellConfig mc;
    mc.area = cfg.bbox;
    mc.tau = cfg.tau;
    mc.em = cfg.em;
    mc.min_dist = cfg.min_dist;
    mc.directional_gain = !mcf_omni;
    const MulticellFit result = fit_cells(obs, scenario_cells(cfg), mc);
    for (const std::string& w : result.warnings) {
      logging::warn("multicell-fit: " + w);
    }
    save_multicell(mcf_out, result.cells);
    logging::info("multicell-fit: fitted " +
                  std::to_string(result.cells.size()) + " cells -> " +
                  mcf_out);
  });

  // --- multicell-predict ------------------------------------------
  auto* mcp = app.add_subcommand(
      "multicell-predict",
      "best-serving-cell map and/or cid error rate from a multicell model");
  std::string mcp_model, mcp_out, mcp_bbox, mcp_test, mcp_report;
  double mcp_res = 0.0;
  bool mcp_nodomains = false;
  std::size_t mcp_cap = 2000000;
  mcp->add_option("--model", mcp_model, "multicell model JSON")->required();
  CLI::Option* mcp_out_opt =
      mcp->add_option("--out", mcp_out, "output grid CSV with cid_hat");
  CLI::Option* mcp_res_opt = mcp->add_option(
      "--resolution", mcp_res, "cell size in meters (with --out)");
  mcp->add_option("--bbox", mcp_bbox, "grid area (with --out)");
  mcp_out_opt->needs(mcp_res_opt);
  mcp_res_opt->needs(mcp_out_opt);
  mcp->add_flag("--ignore-domains", mcp_nodomains,
                "let every cell compete everywhere (no coverage wedges)");
  CLI::Option* mcp_test_opt = mcp->add_option(
      "--test", mcp_test, "labeled test CSV for the cid error rate");
  mcp->add_option("--report", mcp_report, "output cid error report JSON")
      ->needs(mcp_test_opt);
  mcp->add_option("--max-points", mcp_cap,
                  "refuse larger grids (default 2e6 cells)");
  mcp->callback([&] {
    const std::vector<CellModel> cells = load_multicell(mcp_model);
    MulticellPredictOptions opt;
    opt.ignore_domains = mcp_nodomains;
    if (mcp_out.empty() && mcp_test.empty()) {
      throw InvalidParameter(
          "multicell-predict needs --out (grid) and/or --test (error rate)");
    }
    if (!mcp_out.empty()) {
      BoundingBox box;
      if (!mcp_bbox.empty()) {
        box = detail::parse_bbox(mcp_bbox, "--bbox");
      } else {
        bool first = true;
        for (const CellModel& c : cells) {
          if (!c.model.data_bbox) continue;
          if (first) {
            box = *c.model.data_bbox;
            first = false;
          } else {
            box.min_x = std::min(box.min_x, c.model.data_bbox->min_x);
            box.min_y = std::min(box.min_y, c.model.data_bbox->min_y);
            box.max_x = std::max(box.max_x, c.model.data_bbox->max_x);
            box.max_y = std::max(box.max_y, c.model.data_bbox->max_y);
          }
        }
        if (first) {
          throw InvalidParameter(
              "--bbox is required: the models store no data bounding boxes");
        }
      }
      const MulticellGrid grid =
          predict_cells_grid(box, mcp_res, cells, opt, mcp_cap);
      write_grid(mcp_out, grid);
      logging::info("multicell-predict: " + std::to_string(grid.nx) + "x" +
                    std::to_string(grid.ny) + " cells -> " + mcp_out);
    }
    if (!mcp_test.empty()) {
      const std::vector<Measurement> test = read_measurements(mcp_test);
      const CidEval ev = cid_error_rate(test, cells, opt);
      if (!mcp_report.empty()) {
        save_json(mcp_report, cid_eval_to_json(ev));
      }
      logging::info("multicell-predict: cid error rate " +
                    frk::detail::format_double(ev.error_rate) + " (" +
                    std::to_string(ev.n_errors) + "/" +
                    std::to_string(ev.n_total) + ", uncovered " +
                    std::to_string(ev.n_uncovered) + ")");
    }
  });

  // --- diagnose ------------------------------------------------------
  auto* diag = app.add_subcommand(
      "diagnose",
      "moments-based definiteness diagnostics without the full fit output");
  std::string diag_data, diag_out;
  double diag_tau = 0.0;
  long diag_bins = 0;
  detail::TrendFlags diag_trend;
  diag->add_option("--data", diag_data, "measurement CSV")->required();
  diag->add_option("--tau", diag_tau, "basis support radius in meters")
      ->required();
  detail::add_trend_flags(diag, diag_trend);
  diag->add_option("--bins", diag_bins,
                   "bin count M (default: 4 r clipped to (r, N/4])");
  diag->add_option("--out", diag_out, "output diagnostics JSON")->required();
  diag->callback([&] {
    const std::vector<Measurement> obs = read_measurements(diag_data);
    const TrendSpec trend = diag_trend.to_spec();
    const std::vector<Location> locs = measurement_locations(obs);
    const BasisSet basis = build_basis_set(bounding_box(locs), diag_tau, locs);
    const DesignMatrices dm = build_design_matrices(obs, basis, trend);
    const Eigen::Index m_bins =
        diag_bins > 0 ? static_cast<Eigen::Index>(diag_bins)
                      : default_bin_count(dm.r(), dm.n());
    const MomentsBinning mb = bin_observations(obs, dm, m_bins);
    const Eigen::MatrixXd shm = sigma_hat_m(mb.dbar, mb.vbar);
    const Eigen::MatrixXd s_m = bin_rows(dm.S, mb.binning);
    const MomentsResult res = fit_moments(mb, shm, s_m);
    std::size_t occ_min = mb.binning.members.front().size();
    std::size_t occ_max = occ_min;
    for (const auto& mem : mb.binning.members) {
      occ_min = std::min(occ_min, mem.size());
      occ_max = std::max(occ_max, mem.size());
    }
    nlohmann::json j;
    j["schema"] = "frk.diagnostics/1";
    j["m"] = mb.binning.m();
    j["r"] = dm.r();
    j["n"] = dm.n();
    j["bin_occupancy"] = {{"min", occ_min}, {"max", occ_max}};
    j["sigma2_hat"] = res.sigma2_hat;
    j["diagnostics"] = moments_to_json(res, mb.binning.m())["diagnostics"];
    save_json(diag_out, j);
    logging::info("diagnose: M=" + std::to_string(mb.binning.m()) +
                  " k_hat_pd=" +
                  std::string(res.diagnostics.k_hat_pd ? "true" : "false") +
                  " -> " + diag_out);
  });

  // CLI11's vector parse consumes from the back.
  std::reverse(args.begin(), args.end());
  try {
    app.parse(args);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const frk::ParseError& e) {
    std::fprintf(stderr, "frkmap: input error: %s\n", e.what());
    return 2;
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "frkmap: config error: %s\n", e.what());
    return 2;
  } catch (const InvalidParameter& e) {
    std::fprintf(stderr, "frkmap: input error: %s\n", e.what());
    return 2;
  } catch (const IoError& e) {
    std::fprintf(stderr, "frkmap: io error: %s\n", e.what());
    return 3;
  } catch (const Error& e) {
    // DegenerateDesign, SingularCovariance, EmptyBasis, NumericalFailure.
    std::fprintf(stderr, "frkmap: numeric error: %s\n", e.what());
    return 4;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "frkmap: internal error: %s\n", e.what());
    return 5;
  }
  return 0;
}

inline int run(int argc, char** argv) {
  std::vector<std::string> args;
  args.reserve(static_cast<std::size_t>(argc > 0 ? argc - 1 : 0));
  for (int i = 1; i < argc; ++i) {
    args.emplace_back(argv[i]);
  }
  return run(std::move(args));
}

}  // namespace cli
}  // namespace frk

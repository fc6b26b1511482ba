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

#include <initializer_list>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "frk/antenna.hpp"
#include "frk/em.hpp"
#include "frk/error.hpp"
#include "frk/io.hpp"
#include "frk/multicell.hpp"
#include "frk/synthetic.hpp"

namespace frk {

/// One cell of a scenario: identity, antenna, domain, plus the true field
/// parameters used when the scenario is simulated (ignored when fitting).
struct CellConfig {
  std::string cid{};
  AntennaSpec antenna{};
  CellDomain domain{};
  ModelParams true_params{};  // alpha = (p_t, kappa, varsigma)
  bool has_true_params{false};
};

/// Parsed scenario/run configuration. Unknown keys anywhere in the file
/// are an error: misspelled options must not be silently ignored.
struct ScenarioConfig {
  BoundingBox bbox{0.0, 0.0, 4000.0, 3000.0};
  double tau{150.0};
  std::uint64_t seed{1};
  double min_dist{1.0};
  double noise_variance{3.0};
  int k_folds{5};
  EmConfig em{};
  std::vector<CellConfig> cells{};
  std::map<std::string, std::string> output{};
};

inline constexpr const char* kScenarioSchema = "frk.scenario/1";

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& obj,
                                std::initializer_list<const char*> allowed,
                                const std::string& where) {
  for (const auto& item : obj.items()) {
    bool known = false;
    for (const char* k : allowed) {
      if (item.key() == k) {
        known = true;
        break;
      }
    }
    if (!known) {
      throw ConfigError(where + ": unknown key '" + item.key() + "'");
    }
  }
}

inline double config_number(const nlohmann::json& obj, const char* key,
                            double fallback, const std::string& where) {
  if (!obj.contains(key)) {
    return fallback;
  }
  if (!obj[key].is_number()) {
    throw ConfigError(where + ": '" + std::string(key) + "' must be a number");
  }
  return obj[key].get<double>();
}

}  // namespace detail

inline ScenarioConfig parse_scenario_config(const nlohmann::json& j,
                                            const std::string& where) {
  if (!j.is_object()) {
    throw ConfigError(where + ": scenario config must be a JSON object");
  }
  detail::require_schema(j, kScenarioSchema, where);
  detail::reject_unknown_keys(
      j,
      {"schema", "bbox", "tau", "seed", "min_dist", "noise_variance",
       "k_folds", "em", "cells", "output"},
      where);

  ScenarioConfig cfg;
  if (j.contains("bbox")) {
    const auto& b = j["bbox"];
    if (!b.is_array() || b.size() != 4) {
      throw ConfigError(where + ": 'bbox' must be [min_x, min_y, max_x, max_y]");
    }
    cfg.bbox = {b[0].get<double>(), b[1].get<double>(), b[2].get<double>(),
                b[3].get<double>()};
    validate_box(cfg.bbox);
  }
  cfg.tau = detail::config_number(j, "tau", cfg.tau, where);
  if (!(cfg.tau > 0.0)) {
    throw ConfigError(where + ": 'tau' must be positive");
  }
  if (j.contains("seed")) {
    if (!j["seed"].is_number_unsigned()) {
      throw ConfigError(where + ": 'seed' must be a non-negative integer");
    }
    cfg.seed = j["seed"].get<std::uint64_t>();
  }
  cfg.min_dist = detail::config_number(j, "min_dist", cfg.min_dist, where);
  if (!(cfg.min_dist > 0.0)) {
    throw ConfigError(where + ": 'min_dist' must be positive");
  }
  cfg.noise_variance =
      detail::config_number(j, "noise_variance", cfg.noise_variance, where);
  if (!(cfg.noise_variance >= 0.0)) {
    throw ConfigError(where + ": 'noise_variance' must be non-negative");
  }
  if (j.contains("k_folds")) {
    if (!j["k_folds"].is_number_integer()) {
      throw ConfigError(where + ": 'k_folds' must be an integer");
    }
    cfg.k_folds = j["k_folds"].get<int>();
    if (cfg.k_folds < 2) {
      throw ConfigError(where + ": 'k_folds' must be >= 2");
    }
  }
  if (j.contains("em")) {
    const auto& em = j["em"];
    if (!em.is_object()) {
      throw ConfigError(where + ": 'em' must be an object");
    }
    detail::reject_unknown_keys(
        em, {"tol", "patience", "max_iter", "backtrack_max", "phi_over_tau_init"},
        where + ": em");
    cfg.em.tol = detail::config_number(em, "tol", cfg.em.tol, where);
    cfg.em.patience = static_cast<int>(detail::config_number(
        em, "patience", cfg.em.patience, where));
    cfg.em.max_iter = static_cast<int>(detail::config_number(
        em, "max_iter", cfg.em.max_iter, where));
    cfg.em.backtrack_max = static_cast<int>(detail::config_number(
        em, "backtrack_max", cfg.em.backtrack_max, where));
    cfg.em.phi_over_tau_init = detail::config_number(
        em, "phi_over_tau_init", cfg.em.phi_over_tau_init, where);
    validate_em_config(cfg.em);
  }
  if (j.contains("cells")) {
    if (!j["cells"].is_array()) {
      throw ConfigError(where + ": 'cells' must be an array");
    }
    for (const auto& cj : j["cells"]) {
      if (!cj.is_object()) {
        throw ConfigError(where + ": each cell must be an object");
      }
      detail::reject_unknown_keys(
          cj,
          {"cid", "site", "azimuth_deg", "psi_3db_deg", "a_m_db",
           "wedge_half_angle_deg", "max_radius_m", "p_t", "kappa", "varsigma",
           "sigma2", "inv_beta", "phi"},
          where + ": cells");
      CellConfig cell;
      if (!cj.contains("cid") || !cj["cid"].is_string()) {
        throw ConfigError(where + ": every cell needs a string 'cid'");
      }
      cell.cid = cj["cid"].get<std::string>();
      if (!cj.contains("site") || !cj["site"].is_array() ||
          cj["site"].size() != 2) {
        throw ConfigError(where + ": cell '" + cell.cid +
                          "' needs 'site': [x, y]");
      }
      cell.antenna.site = {cj["site"][0].get<double>(),
                           cj["site"][1].get<double>()};
      cell.antenna.azimuth_deg =
          detail::config_number(cj, "azimuth_deg", 0.0, where);
      cell.antenna.psi_3db_deg =
          detail::config_number(cj, "psi_3db_deg", 65.0, where);
      cell.antenna.a_m_db = detail::config_number(cj, "a_m_db", 30.0, where);
      validate_antenna(cell.antenna);
      cell.domain.wedge_half_angle_deg =
          detail::config_number(cj, "wedge_half_angle_deg", 90.0, where);
      if (cj.contains("max_radius_m") && !cj["max_radius_m"].is_null()) {
        cell.domain.max_radius_m = cj["max_radius_m"].get<double>();
      }
      validate_domain(cell.domain);
      const bool any_truth = cj.contains("p_t") || cj.contains("kappa") ||
                             cj.contains("varsigma") || cj.contains("sigma2") ||
                             cj.contains("inv_beta") || cj.contains("phi");
      if (any_truth) {
        cell.true_params.alpha = Eigen::Vector3d(
            detail::config_number(cj, "p_t", -49.55, where),
            detail::config_number(cj, "kappa", 2.73, where),
            detail::config_number(cj, "varsigma", 1.0, where));
        cell.true_params.sigma2 =
            detail::config_number(cj, "sigma2", cfg.noise_variance, where);
        const double inv_beta =
            detail::config_number(cj, "inv_beta", 12.5, where);
        if (!(inv_beta > 0.0)) {
          throw ConfigError(where + ": 'inv_beta' must be positive");
        }
        cell.true_params.beta = 1.0 / inv_beta;
        cell.true_params.phi = detail::config_number(cj, "phi", 3.63, where);
        validate_params(cell.true_params);
        cell.has_true_params = true;
      }
      cfg.cells.push_back(std::move(cell));
    }
    for (std::size_t i = 0; i < cfg.cells.size(); ++i) {
      for (std::size_t k = i + 1; k < cfg.cells.size(); ++k) {
        if (cfg.cells[i].cid == cfg.cells[k].cid) {
          throw ConfigError(where + ": duplicate cid '" + cfg.cells[i].cid +
                            "'");
        }
      }
    }
  }
  if (j.contains("output")) {
    const auto& out = j["output"];
    if (!out.is_object()) {
      throw ConfigError(where + ": 'output' must be an object");
    }
    detail::reject_unknown_keys(
        out, {"model", "grid", "report", "trace", "data"}, where + ": output");
    for (const auto& item : out.items()) {
      if (!item.value().is_string()) {
        throw ConfigError(where + ": output paths must be strings");
      }
      cfg.output[item.key()] = item.value().get<std::string>();
    }
  }
  return cfg;
}

inline ScenarioConfig load_scenario_config(const std::string& path) {
  return parse_scenario_config(detail::parse_json_file(path), path);
}

/// Ground-truth cells for simulation. Errors out when a cell lacks true
/// parameters.
inline std::vector<TrueCell> scenario_truth(const ScenarioConfig& cfg) {
  if (cfg.cells.empty()) {
    throw ConfigError("scenario has no cells to simulate");
  }
  std::vector<TrueCell> layout;
  for (const CellConfig& c : cfg.cells) {
    if (!c.has_true_params) {
      throw ConfigError("cell '" + c.cid +
                        "' has no true parameters; cannot simulate it");
    }
    TrueCell t;
    t.cid = c.cid;
    t.antenna = c.antenna;
    t.domain = c.domain;
    t.params = c.true_params;
    t.min_dist = cfg.min_dist;
    layout.push_back(std::move(t));
  }
  return layout;
}

/// Fit-side view of the scenario cells.
inline std::vector<CellSpec> scenario_cells(const ScenarioConfig& cfg) {
  if (cfg.cells.empty()) {
    throw ConfigError("scenario has no cells");
  }
  std::vector<CellSpec> cells;
  for (const CellConfig& c : cfg.cells) {
    cells.push_back({c.cid, c.antenna, c.domain});
  }
  return cells;
}

}  // namespace frk

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
#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "frk/antenna.hpp"
#include "frk/em.hpp"
#include "frk/error.hpp"
#include "frk/predict.hpp"
#include "frk/types.hpp"

namespace frk {

/// Static description of one sector to fit: identity, antenna, and the
/// coverage domain used at prediction time.
struct CellSpec {
  std::string cid{};
  AntennaSpec antenna{};
  CellDomain domain{};
};

/// One fitted sector.
struct CellModel {
  std::string cid{};
  AntennaSpec antenna{};
  CellDomain domain{};
  FittedModel model{};
};

struct MulticellConfig {
  /// Area over which the shared basis candidate grid is laid out.
  BoundingBox area{};
  double tau{0.0};
  EmConfig em{};
  double min_dist{1.0};
  /// Include the directional-gain trend column (fit varsigma). When false
  /// the cells are fitted with the omnidirectional two-column trend.
  bool directional_gain{true};
};

struct MulticellFit {
  std::vector<CellModel> cells{};
  std::vector<std::string> warnings{};
};

/// Fits one low-rank model per cell on that cell's own measurements. All
/// cells share the same candidate center grid (then prune against their
/// own data), so fits are independent: reordering cells or removing other
/// cells' data never changes a cell's fit. Undersized cells are skipped
/// with a warning rather than failing the whole fit.
inline MulticellFit fit_cells(const std::vector<Measurement>& obs,
                              const std::vector<CellSpec>& cells,
                              const MulticellConfig& cfg) {
  if (cells.empty()) {
    throw InvalidParameter("no cells to fit");
  }
  validate_box(cfg.area);
  if (!(cfg.tau > 0.0)) {
    throw InvalidParameter("basis support radius tau must be positive");
  }
  std::map<std::string, std::vector<Measurement>> by_cid;
  for (const Measurement& m : obs) {
    if (!m.cid) {
      throw InvalidParameter(
          "multicell fitting requires a cid on every measurement");
    }
    by_cid[*m.cid].push_back(m);
  }
  for (std::size_t i = 0; i < cells.size(); ++i) {
    for (std::size_t j = i + 1; j < cells.size(); ++j) {
      if (cells[i].cid == cells[j].cid) {
        throw InvalidParameter("duplicate cid in cell list: " + cells[i].cid);
      }
    }
  }

  const std::vector<Location> candidates = candidate_grid(cfg.area, cfg.tau);
  MulticellFit out;
  for (const CellSpec& spec : cells) {
    const auto it = by_cid.find(spec.cid);
    TrendSpec trend{spec.antenna.site, {}, cfg.min_dist};
    if (cfg.directional_gain) {
      trend.gain_model = spec.antenna;
    }
    const std::size_t need = static_cast<std::size_t>(trend.dim()) + 2;
    if (it == by_cid.end() || it->second.size() < need) {
      out.warnings.push_back("cell " + spec.cid +
                             " skipped: fewer than p + 2 measurements");
      continue;
    }
    BasisSet basis;
    basis.tau = cfg.tau;
    basis.centers = prune_centers(candidates, cfg.tau,
                                  measurement_locations(it->second));
    if (basis.centers.empty()) {
      out.warnings.push_back("cell " + spec.cid +
                             " skipped: no basis center near its data");
      continue;
    }
    EmFit fit = fit_em(it->second, basis, trend, cfg.em);
    out.cells.push_back(
        {spec.cid, spec.antenna, spec.domain, std::move(fit.model)});
  }
  if (out.cells.empty()) {
    throw InvalidParameter("every cell was skipped; nothing was fitted");
  }
  return out;
}

/// Serving-cell prediction at one location. `covered` is false when no
/// cell's domain contains the location (a distinguished value, not an
/// error); otherwise the best cell is the one with the highest predicted
/// power, ties broken by lowest cid.
struct CellPrediction {
  bool covered{false};
  std::string cid{};
  double z_hat{std::numeric_limits<double>::quiet_NaN()};
  double var{std::numeric_limits<double>::quiet_NaN()};
};

struct MulticellPredictOptions {
  /// Ignore the per-cell domains and let every cell compete everywhere.
  bool ignore_domains{false};
};

inline CellPrediction predict_cid_and_power(
    const Location& loc, const std::vector<CellModel>& cells,
    const MulticellPredictOptions& opt = {}) {
  if (cells.empty()) {
    throw InvalidParameter("no fitted cells to predict from");
  }
  CellPrediction best;
  for (const CellModel& cell : cells) {
    if (!opt.ignore_domains &&
        !in_domain(loc, cell.antenna.site, cell.antenna.azimuth_deg,
                   cell.domain)) {
      continue;
    }
    const Prediction p = predict_point(loc, cell.model);
    if (!best.covered || p.z_hat > best.z_hat ||
        (p.z_hat == best.z_hat && cell.cid < best.cid)) {
      best.covered = true;
      best.cid = cell.cid;
      best.z_hat = p.z_hat;
      best.var = p.var;
    }
  }
  return best;
}

/// Serving-cell raster with the same layout conventions as PredictionGrid.
struct MulticellGrid {
  BoundingBox bbox{};
  double resolution{0.0};
  int nx{0};
  int ny{0};
  std::vector<CellPrediction> cells{};

  Location point(int ix, int iy) const {
    return {bbox.min_x + (ix + 0.5) * resolution,
            bbox.min_y + (iy + 0.5) * resolution};
  }
};

inline MulticellGrid predict_cells_grid(const BoundingBox& bbox,
                                        double resolution,
                                        const std::vector<CellModel>& cells,
                                        const MulticellPredictOptions& opt = {},
                                        std::size_t max_points = 2000000) {
  validate_box(bbox);
  if (!(resolution > 0.0)) {
    throw InvalidParameter("grid resolution must be positive");
  }
  MulticellGrid g;
  g.bbox = bbox;
  g.resolution = resolution;
  g.nx = std::max(1, static_cast<int>(std::ceil(bbox.width() / resolution)));
  g.ny = std::max(1, static_cast<int>(std::ceil(bbox.height() / resolution)));
  const std::size_t total =
      static_cast<std::size_t>(g.nx) * static_cast<std::size_t>(g.ny);
  if (total > max_points) {
    throw InvalidParameter("prediction grid exceeds the configured point cap");
  }
  g.cells.reserve(total);
  for (int iy = 0; iy < g.ny; ++iy) {
    for (int ix = 0; ix < g.nx; ++ix) {
      g.cells.push_back(predict_cid_and_power(g.point(ix, iy), cells, opt));
    }
  }
  return g;
}

/// Serving-cell detection quality on labeled measurements. Locations the
/// fitted layout does not cover count as errors and are also reported
/// separately.
struct CidEval {
  long n_total{0};
  long n_errors{0};
  long n_uncovered{0};
  double error_rate{0.0};
};

inline CidEval cid_error_rate(const std::vector<Measurement>& test,
                              const std::vector<CellModel>& cells,
                              const MulticellPredictOptions& opt = {}) {
  if (test.empty()) {
    throw InvalidParameter("empty test set");
  }
  CidEval ev;
  for (const Measurement& m : test) {
    if (!m.cid) {
      throw InvalidParameter("cid error rate requires labeled measurements");
    }
    ++ev.n_total;
    const CellPrediction p = predict_cid_and_power(m.loc, cells, opt);
    if (!p.covered) {
      ++ev.n_uncovered;
      ++ev.n_errors;
    } else if (p.cid != *m.cid) {
      ++ev.n_errors;
    }
  }
  ev.error_rate = static_cast<double>(ev.n_errors) /
                  static_cast<double>(ev.n_total);
  return ev;
}

}  // namespace frk

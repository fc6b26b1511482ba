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

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "frk/antenna.hpp"
#include "frk/basis.hpp"
#include "frk/covariance.hpp"
#include "frk/design.hpp"
#include "frk/error.hpp"
#include "frk/types.hpp"

namespace frk {

/// Where to place synthetic measurement locations: `count` > 0 draws that
/// many points uniformly in the box; otherwise `grid_step` > 0 places them
/// on an inclusive regular grid of that spacing.
struct SamplePlan {
  BoundingBox bbox{};
  long count{0};
  double grid_step{0.0};
};

/// Draw order within each generator is fixed (locations, then field
/// coefficients, then per-point noise), so a given seed always produces
/// the same data on a given platform.
inline std::vector<Location> sample_locations(const SamplePlan& plan,
                                              std::mt19937_64& rng) {
  validate_box(plan.bbox);
  std::vector<Location> pts;
  if (plan.count > 0) {
    std::uniform_real_distribution<double> ux(plan.bbox.min_x, plan.bbox.max_x);
    std::uniform_real_distribution<double> uy(plan.bbox.min_y, plan.bbox.max_y);
    pts.reserve(static_cast<std::size_t>(plan.count));
    for (long i = 0; i < plan.count; ++i) {
      const double x = ux(rng);
      const double y = uy(rng);
      pts.push_back({x, y});
    }
  } else if (plan.grid_step > 0.0) {
    const double eps = 1e-9 * plan.grid_step;
    for (double y = plan.bbox.min_y; y <= plan.bbox.max_y + eps;
         y += plan.grid_step) {
      for (double x = plan.bbox.min_x; x <= plan.bbox.max_x + eps;
           x += plan.grid_step) {
        pts.push_back({x, y});
      }
    }
  } else {
    throw InvalidParameter("sample plan needs count > 0 or grid_step > 0");
  }
  return pts;
}

/// Log-distance data with optional log-normal shadowing:
/// y = p_t - 10 kappa log10(max(dist, min_dist)) + N(0, shadow_var).
/// shadow_var = 0 gives the deterministic path-loss law.
inline std::vector<Measurement> gen_lognormal(const SamplePlan& plan,
                                              const TrendSpec& trend,
                                              double p_t, double kappa,
                                              double shadow_var,
                                              std::uint64_t seed) {
  if (shadow_var < 0.0) {
    throw InvalidParameter("shadowing variance must be non-negative");
  }
  std::mt19937_64 rng(seed);
  const std::vector<Location> pts = sample_locations(plan, rng);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double sd = std::sqrt(shadow_var);
  std::vector<Measurement> obs;
  obs.reserve(pts.size());
  for (const Location& loc : pts) {
    const double d = std::max(distance(loc, trend.tx_location), trend.min_dist);
    double v = p_t - 10.0 * kappa * std::log10(d);
    if (sd > 0.0) {
      v += sd * gauss(rng);
    }
    obs.push_back({loc, v, {}});
  }
  return obs;
}

/// A draw from the low-rank model itself: trend + s(x)^T eta + noise, with
/// eta ~ N(0, K(beta, phi)). Returns the drawn eta so tests can compare
/// against the exact field.
struct FrkSample {
  std::vector<Measurement> obs{};
  Eigen::VectorXd eta{};
};

inline FrkSample gen_frk(const SamplePlan& plan, const TrendSpec& trend,
                         const BasisSet& basis, const ModelParams& params,
                         std::uint64_t seed) {
  validate_params(params);
  if (params.alpha.size() != trend.dim()) {
    throw InvalidParameter("trend coefficient count does not match the trend spec");
  }
  const Eigen::MatrixXd k = covariance_K(basis, params.beta, params.phi);
  Eigen::LLT<Eigen::MatrixXd> llt(k);
  if (llt.info() != Eigen::Success) {
    throw NumericalFailure("random-effect covariance is not positive definite");
  }

  std::mt19937_64 rng(seed);
  const std::vector<Location> pts = sample_locations(plan, rng);
  std::normal_distribution<double> gauss(0.0, 1.0);

  FrkSample out;
  Eigen::VectorXd z(basis.rank());
  for (Eigen::Index l = 0; l < basis.rank(); ++l) {
    z(l) = gauss(rng);
  }
  out.eta = llt.matrixL() * z;

  const double sd = std::sqrt(params.sigma2);
  out.obs.reserve(pts.size());
  for (const Location& loc : pts) {
    const double v = trend_vector(loc, trend).dot(params.alpha) +
                     basis_vector(loc, basis).dot(out.eta) + sd * gauss(rng);
    out.obs.push_back({loc, v, {}});
  }
  return out;
}

/// Ground-truth description of one synthetic cell: identity, antenna,
/// coverage domain, and the true field parameters. alpha is
/// (p_t, kappa, varsigma); the gain column uses the cell's antenna.
struct TrueCell {
  std::string cid{};
  AntennaSpec antenna{};
  CellDomain domain{};
  ModelParams params{};
  double min_dist{1.0};
};

/// Multicell draw: independent low-rank fields per cell on a shared
/// unpruned candidate grid with spacing tau, measurement = the serving
/// cell's noisy value, serving cell = argmax of the noiseless fields over
/// the cells whose domain covers the point (ties broken by lowest cid;
/// noisy_selection switches the argmax to the noisy values). Points
/// covered by no cell are skipped and counted.
struct MulticellSample {
  std::vector<Measurement> obs{};
  std::vector<Eigen::VectorXd> eta{};   // per cell, in layout order
  Eigen::MatrixXd true_z{};             // kept points x cells, noiseless fields
  long n_uncovered{0};
};

inline MulticellSample gen_multicell(const std::vector<TrueCell>& layout,
                                     const SamplePlan& plan, double tau,
                                     std::uint64_t seed,
                                     bool noisy_selection = false) {
  if (layout.empty()) {
    throw InvalidParameter("multicell layout must contain at least one cell");
  }
  BasisSet shared;
  shared.tau = tau;
  shared.centers = candidate_grid(plan.bbox, tau);

  std::mt19937_64 rng(seed);
  const std::vector<Location> pts = sample_locations(plan, rng);
  std::normal_distribution<double> gauss(0.0, 1.0);

  MulticellSample out;
  const std::size_t c = layout.size();
  std::vector<Eigen::MatrixXd> chol(c);
  for (std::size_t j = 0; j < c; ++j) {
    const TrueCell& cell = layout[j];
    validate_params(cell.params);
    if (cell.params.alpha.size() != 3) {
      throw InvalidParameter(
          "multicell truth requires 3 trend coefficients (p_t, kappa, varsigma)");
    }
    const Eigen::MatrixXd k =
        covariance_K(shared, cell.params.beta, cell.params.phi);
    Eigen::LLT<Eigen::MatrixXd> llt(k);
    if (llt.info() != Eigen::Success) {
      throw NumericalFailure("random-effect covariance is not positive definite");
    }
    chol[j] = llt.matrixL();
  }
  out.eta.resize(c);
  for (std::size_t j = 0; j < c; ++j) {
    Eigen::VectorXd z(shared.rank());
    for (Eigen::Index l = 0; l < shared.rank(); ++l) {
      z(l) = gauss(rng);
    }
    out.eta[j] = chol[j] * z;
  }

  std::vector<double> zs(c), noisy(c);
  std::vector<char> eligible(c);
  Eigen::MatrixXd true_rows(static_cast<Eigen::Index>(pts.size()),
                            static_cast<Eigen::Index>(c));
  Eigen::Index kept = 0;
  for (const Location& loc : pts) {
    const Eigen::VectorXd s = basis_vector(loc, shared);
    for (std::size_t j = 0; j < c; ++j) {
      const TrueCell& cell = layout[j];
      TrendSpec trend{cell.antenna.site, cell.antenna, cell.min_dist};
      zs[j] = trend_vector(loc, trend).dot(cell.params.alpha) + s.dot(out.eta[j]);
      noisy[j] = zs[j] + std::sqrt(cell.params.sigma2) * gauss(rng);
      eligible[j] = in_domain(loc, cell.antenna.site, cell.antenna.azimuth_deg,
                              cell.domain)
                        ? 1
                        : 0;
    }
    std::size_t best = c;  // sentinel: uncovered
    for (std::size_t j = 0; j < c; ++j) {
      if (!eligible[j]) {
        continue;
      }
      const double vj = noisy_selection ? noisy[j] : zs[j];
      if (best == c) {
        best = j;
        continue;
      }
      const double vb = noisy_selection ? noisy[best] : zs[best];
      if (vj > vb || (vj == vb && layout[j].cid < layout[best].cid)) {
        best = j;
      }
    }
    if (best == c) {
      ++out.n_uncovered;
      continue;
    }
    out.obs.push_back({loc, noisy[best], layout[best].cid});
    for (std::size_t j = 0; j < c; ++j) {
      true_rows(kept, static_cast<Eigen::Index>(j)) = zs[j];
    }
    ++kept;
  }
  out.true_z = true_rows.topRows(kept);
  return out;
}

/// Canonical 4-site / 12-sector synthetic scenario on a 4 km x 3 km map:
/// three sectors per site at azimuths 30/150/270 degrees, directional
/// antennas, moderate shadowing. Used by tests and the CLI walkthrough.
inline std::vector<TrueCell> default_multicell_layout() {
  const std::vector<Location> sites = {
      {1000.0, 1000.0}, {3000.0, 1000.0}, {1000.0, 2000.0}, {3000.0, 2000.0}};
  const std::vector<double> azimuths = {30.0, 150.0, 270.0};
  std::vector<TrueCell> layout;
  int site_idx = 0;
  for (const Location& site : sites) {
    int sec_idx = 0;
    for (const double az : azimuths) {
      TrueCell cell;
      cell.cid = "s" + std::to_string(site_idx + 1) + "c" +
                 std::to_string(sec_idx + 1);
      cell.antenna = AntennaSpec{site, az, 65.0, 30.0};
      cell.domain = CellDomain{90.0, {}};
      cell.params.alpha = Eigen::Vector3d(-49.55, 2.73, 1.0);
      cell.params.sigma2 = 3.0;
      cell.params.beta = 1.0 / 12.5;
      cell.params.phi = 3.63;
      layout.push_back(std::move(cell));
      ++sec_idx;
    }
    ++site_idx;
  }
  return layout;
}

inline BoundingBox default_multicell_bbox() { return {0.0, 0.0, 4000.0, 3000.0}; }

}  // namespace frk

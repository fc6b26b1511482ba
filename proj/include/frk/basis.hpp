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

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <vector>

#include "frk/error.hpp"
#include "frk/geometry.hpp"

namespace frk {

/// A set of bi-square basis functions, all with the same support radius
/// `tau`, centered on (a pruned subset of) a regular grid.
struct BasisSet {
  std::vector<Location> centers{};
  double tau{0.0};

  Eigen::Index rank() const { return static_cast<Eigen::Index>(centers.size()); }
};

/// Bi-square kernel: [1 - (d/tau)^2]^2 for d <= tau, else 0.
inline double bisquare_eval(const Location& loc, const Location& center,
                            double tau) {
  if (!(tau > 0.0)) {
    throw InvalidParameter("basis support radius tau must be positive");
  }
  const double d2 = squared_distance(loc, center);
  const double t2 = tau * tau;
  if (d2 > t2) {
    return 0.0;
  }
  const double u = 1.0 - d2 / t2;
  return u * u;
}

/// Evaluates every basis function at one location: the s(x) vector.
inline Eigen::VectorXd basis_vector(const Location& loc, const BasisSet& basis) {
  Eigen::VectorXd s(basis.rank());
  for (Eigen::Index l = 0; l < basis.rank(); ++l) {
    s(l) = bisquare_eval(loc, basis.centers[static_cast<std::size_t>(l)], basis.tau);
  }
  return s;
}

/// Number of grid columns/rows used for center placement over `area`:
/// the area is padded by tau/2 per side and tiled with tau-spaced cells.
struct GridDims {
  int nx{0};
  int ny{0};
};

inline GridDims basis_grid_dims(const BoundingBox& area, double tau) {
  if (!(tau > 0.0)) {
    throw InvalidParameter("basis support radius tau must be positive");
  }
  validate_box(area);
  const BoundingBox padded = area.expanded(tau / 2.0);
  GridDims dims;
  dims.nx = std::max(1, static_cast<int>(std::ceil(padded.width() / tau)));
  dims.ny = std::max(1, static_cast<int>(std::ceil(padded.height() / tau)));
  return dims;
}

/// Full (unpruned) candidate grid of centers: tau-spaced points starting
/// half a cell inside the padded area. Its size is the maximum attainable
/// rank for this area and tau.
inline std::vector<Location> candidate_grid(const BoundingBox& area, double tau) {
  const GridDims dims = basis_grid_dims(area, tau);
  const BoundingBox padded = area.expanded(tau / 2.0);
  std::vector<Location> centers;
  centers.reserve(static_cast<std::size_t>(dims.nx) * static_cast<std::size_t>(dims.ny));
  for (int j = 0; j < dims.ny; ++j) {
    for (int i = 0; i < dims.nx; ++i) {
      centers.push_back({padded.min_x + tau / 2.0 + i * tau,
                         padded.min_y + tau / 2.0 + j * tau});
    }
  }
  return centers;
}

/// Keeps only the candidate centers with at least one observation within
/// distance tau, so every basis function overlaps some data.
inline std::vector<Location> prune_centers(std::vector<Location> candidates,
                                           double tau,
                                           const std::vector<Location>& obs) {
  const double t2 = tau * tau;
  std::vector<Location> kept;
  kept.reserve(candidates.size());
  for (const Location& c : candidates) {
    for (const Location& p : obs) {
      if (squared_distance(c, p) <= t2) {
        kept.push_back(c);
        break;
      }
    }
  }
  return kept;
}

/// Builds the basis for `area`: grid placement followed by pruning against
/// the observation locations. Throws EmptyBasis when nothing survives.
inline BasisSet build_basis_set(const BoundingBox& area, double tau,
                                const std::vector<Location>& obs) {
  BasisSet basis;
  basis.tau = tau;
  basis.centers = prune_centers(candidate_grid(area, tau), tau, obs);
  if (basis.centers.empty()) {
    throw EmptyBasis(
        "no basis center has an observation within tau; "
        "check that the observations lie inside the area");
  }
  return basis;
}

}  // namespace frk

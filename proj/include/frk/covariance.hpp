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
#include <cmath>

#include "frk/basis.hpp"
#include "frk/error.hpp"

namespace frk {

/// Pairwise Euclidean distances between basis centers (r x r, symmetric,
/// zero diagonal). Precomputed once per fit; K only depends on it.
inline Eigen::MatrixXd center_distance_matrix(const BasisSet& basis) {
  const Eigen::Index r = basis.rank();
  Eigen::MatrixXd delta(r, r);
  for (Eigen::Index i = 0; i < r; ++i) {
    delta(i, i) = 0.0;
    for (Eigen::Index j = i + 1; j < r; ++j) {
      const double d = distance(basis.centers[static_cast<std::size_t>(i)],
                                basis.centers[static_cast<std::size_t>(j)]);
      delta(i, j) = d;
      delta(j, i) = d;
    }
  }
  return delta;
}

/// Exponential correlation K-tilde(phi) = exp(-delta * e^{-phi}) applied
/// entrywise to a precomputed distance matrix.
inline Eigen::MatrixXd correlation_from_distances(const Eigen::MatrixXd& delta,
                                                  double phi) {
  if (!std::isfinite(phi)) {
    throw InvalidParameter("covariance range parameter phi must be finite");
  }
  const double inv_range = std::exp(-phi);
  if (!std::isfinite(inv_range)) {
    throw InvalidParameter("exp(-phi) overflows; phi is too negative");
  }
  return (-delta.array() * inv_range).exp().matrix();
}

inline Eigen::MatrixXd correlation_matrix(const BasisSet& basis, double phi) {
  return correlation_from_distances(center_distance_matrix(basis), phi);
}

/// Random-effect covariance K(beta, phi) = K-tilde(phi) / beta. Duplicate
/// centers make K-tilde exactly singular and are rejected.
inline Eigen::MatrixXd covariance_K(const BasisSet& basis, double beta,
                                    double phi) {
  if (!(beta > 0.0) || !std::isfinite(beta)) {
    throw InvalidParameter("covariance precision beta must be positive and finite");
  }
  const Eigen::MatrixXd delta = center_distance_matrix(basis);
  const Eigen::Index r = basis.rank();
  for (Eigen::Index i = 0; i < r; ++i) {
    for (Eigen::Index j = i + 1; j < r; ++j) {
      if (delta(i, j) <= 0.0) {
        throw SingularCovariance(
            "duplicate basis centers make the covariance singular");
      }
    }
  }
  return correlation_from_distances(delta, phi) / beta;
}

}  // namespace frk

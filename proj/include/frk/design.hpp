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
#include <Eigen/Eigenvalues>
#include <cmath>
#include <optional>
#include <vector>

#include "frk/antenna.hpp"
#include "frk/basis.hpp"
#include "frk/error.hpp"
#include "frk/types.hpp"

namespace frk {

/// Condition-number threshold above which the trend design is rejected.
inline constexpr double kDesignConditionLimit = 1e12;

/// Deterministic trend specification: the transmitter position, an optional
/// directional-gain column, and the floor applied to distances before the
/// log (keeps the log-distance regressor finite at the transmitter).
struct TrendSpec {
  Location tx_location{};
  std::optional<AntennaSpec> gain_model{};
  double min_dist{1.0};

  Eigen::Index dim() const { return gain_model ? 3 : 2; }
};

/// t(x) = (1, -10 log10(max(dist, min_dist)) [, gain(x)]). The fitted
/// coefficients against these columns are the transmit power, the path-loss
/// exponent, and the gain scale.
inline Eigen::VectorXd trend_vector(const Location& loc, const TrendSpec& spec) {
  if (!(spec.min_dist > 0.0)) {
    throw InvalidParameter("trend distance floor min_dist must be positive");
  }
  Eigen::VectorXd t(spec.dim());
  const double d = std::max(distance(loc, spec.tx_location), spec.min_dist);
  t(0) = 1.0;
  t(1) = -10.0 * std::log10(d);
  if (spec.gain_model) {
    t(2) = antenna_gain(loc, *spec.gain_model);
  }
  return t;
}

/// Dense design matrices for one data set: T (N x p) trend columns and
/// S (N x r) basis evaluations, plus the basis they were built from.
struct DesignMatrices {
  Eigen::MatrixXd T{};
  Eigen::MatrixXd S{};
  BasisSet basis{};
  TrendSpec trend{};

  Eigen::Index n() const { return T.rows(); }
  Eigen::Index p() const { return T.cols(); }
  Eigen::Index r() const { return S.cols(); }
};

/// Condition number of the p x p Gram matrix T^T T (ratio of extreme
/// eigenvalues; +inf when the smallest is not strictly positive).
inline double trend_gram_condition(const Eigen::MatrixXd& ttt) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(ttt);
  if (es.info() != Eigen::Success) {
    return std::numeric_limits<double>::infinity();
  }
  const double lo = es.eigenvalues().minCoeff();
  const double hi = es.eigenvalues().maxCoeff();
  if (!(lo > 0.0)) {
    return std::numeric_limits<double>::infinity();
  }
  return hi / lo;
}

/// Builds T and S for the observations. Rejects designs where the trend
/// columns are (numerically) collinear, e.g. all observations equidistant
/// from the transmitter.
inline DesignMatrices build_design_matrices(const std::vector<Measurement>& obs,
                                            const BasisSet& basis,
                                            const TrendSpec& spec) {
  const Eigen::Index n = static_cast<Eigen::Index>(obs.size());
  const Eigen::Index p = spec.dim();
  if (n < p + 1) {
    throw InvalidParameter("need at least p + 1 observations to build the design");
  }
  if (basis.rank() == 0) {
    throw EmptyBasis("basis set has no centers");
  }
  DesignMatrices dm;
  dm.basis = basis;
  dm.trend = spec;
  dm.T.resize(n, p);
  dm.S.resize(n, basis.rank());
  const double t2 = basis.tau * basis.tau;
  for (Eigen::Index i = 0; i < n; ++i) {
    const Measurement& m = obs[static_cast<std::size_t>(i)];
    dm.T.row(i) = trend_vector(m.loc, spec).transpose();
    for (Eigen::Index l = 0; l < basis.rank(); ++l) {
      const double d2 =
          squared_distance(m.loc, basis.centers[static_cast<std::size_t>(l)]);
      if (d2 > t2) {
        dm.S(i, l) = 0.0;
      } else {
        const double u = 1.0 - d2 / t2;
        dm.S(i, l) = u * u;
      }
    }
  }
  const Eigen::MatrixXd ttt = dm.T.transpose() * dm.T;
  const double cond = trend_gram_condition(ttt);
  if (!(cond < kDesignConditionLimit)) {
    throw DegenerateDesign(
        "trend design is numerically rank deficient (cond(T^T T) >= 1e12); "
        "the observations do not identify the trend coefficients");
  }
  return dm;
}

}  // namespace frk

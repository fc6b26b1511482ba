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
#include <optional>
#include <string>
#include <vector>

#include "frk/error.hpp"
#include "frk/geometry.hpp"

namespace frk {

/// One geo-located received-power sample. `value` is in dB (e.g. RSRP in
/// dBm); `cid` identifies the serving cell when known.
struct Measurement {
  Location loc{};
  double value{0.0};
  std::optional<std::string> cid{};
};

/// Parameters of the low-rank spatial model: trend coefficients alpha
/// (transmit power, path-loss exponent, and optionally the antenna-gain
/// scale), nugget variance sigma2, and the exponential-covariance shape
/// (beta, phi) with K = exp(-dist / exp(phi)) / beta.
struct ModelParams {
  Eigen::VectorXd alpha{};
  double sigma2{1.0};
  double beta{1.0};
  double phi{0.0};

  /// Flat vector (alpha..., sigma2, beta, phi) used for convergence norms.
  Eigen::VectorXd as_vector() const {
    Eigen::VectorXd v(alpha.size() + 3);
    v.head(alpha.size()) = alpha;
    v(alpha.size()) = sigma2;
    v(alpha.size() + 1) = beta;
    v(alpha.size() + 2) = phi;
    return v;
  }
};

inline void validate_params(const ModelParams& p) {
  if (p.alpha.size() < 2 || p.alpha.size() > 3) {
    throw InvalidParameter("trend coefficient vector must have 2 or 3 entries");
  }
  if (!p.alpha.allFinite()) {
    throw InvalidParameter("trend coefficients must be finite");
  }
  if (!(p.sigma2 > 0.0) || !std::isfinite(p.sigma2)) {
    throw InvalidParameter("noise variance sigma2 must be positive and finite");
  }
  if (!(p.beta > 0.0) || !std::isfinite(p.beta)) {
    throw InvalidParameter("covariance precision beta must be positive and finite");
  }
  if (!std::isfinite(p.phi)) {
    throw InvalidParameter("covariance range parameter phi must be finite");
  }
}

inline Eigen::VectorXd measurement_values(const std::vector<Measurement>& obs) {
  Eigen::VectorXd y(static_cast<Eigen::Index>(obs.size()));
  for (std::size_t i = 0; i < obs.size(); ++i) {
    y(static_cast<Eigen::Index>(i)) = obs[i].value;
  }
  return y;
}

inline std::vector<Location> measurement_locations(
    const std::vector<Measurement>& obs) {
  std::vector<Location> pts;
  pts.reserve(obs.size());
  for (const Measurement& m : obs) {
    pts.push_back(m.loc);
  }
  return pts;
}

}  // namespace frk

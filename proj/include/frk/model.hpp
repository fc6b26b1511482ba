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
#include <optional>

#include "frk/covariance.hpp"
#include "frk/design.hpp"
#include "frk/error.hpp"
#include "frk/types.hpp"

namespace frk {

/// Everything needed to predict: the deterministic trend, the basis, the
/// fitted parameters, and the posterior of the random effects given the
/// training data (mean vector and r x r covariance). Caching the posterior
/// makes every later prediction O(r) / O(r^2) with no access to the data.
struct FittedModel {
  TrendSpec trend{};
  BasisSet basis{};
  ModelParams params{};
  Eigen::VectorXd eta_mean{};
  Eigen::MatrixXd eta_cov{};
  bool converged{true};
  int iterations{0};
  std::optional<BoundingBox> data_bbox{};
};

inline void validate_model(const FittedModel& m) {
  validate_params(m.params);
  if (m.params.alpha.size() != m.trend.dim()) {
    throw InvalidParameter("trend coefficient count does not match the trend spec");
  }
  const Eigen::Index r = m.basis.rank();
  if (r == 0) {
    throw EmptyBasis("fitted model has an empty basis");
  }
  if (m.eta_mean.size() != r || m.eta_cov.rows() != r || m.eta_cov.cols() != r) {
    throw InvalidParameter("posterior dimensions do not match the basis rank");
  }
}

/// Model conditioned on no data: the random effects keep their prior
/// N(0, K(beta, phi)), so predictions revert to the trend with the full
/// prior variance.
inline FittedModel prior_model(const TrendSpec& trend, const BasisSet& basis,
                               const ModelParams& params) {
  FittedModel m;
  m.trend = trend;
  m.basis = basis;
  m.params = params;
  m.eta_mean = Eigen::VectorXd::Zero(basis.rank());
  m.eta_cov = covariance_K(basis, params.beta, params.phi);
  m.converged = true;
  m.iterations = 0;
  validate_model(m);
  return m;
}

}  // namespace frk

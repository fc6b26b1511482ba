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
#include <vector>

#include "frk/error.hpp"
#include "frk/model.hpp"

namespace frk {

/// Kriging output at one location: the predicted field value (dB) and its
/// posterior variance. The variance covers the smooth field Z, not the
/// measurement noise; add params.sigma2 to predict a noisy observation.
struct Prediction {
  double z_hat{0.0};
  double var{0.0};
};

namespace detail {

/// Indices and values of the basis functions whose support contains `loc`.
/// The bi-square support radius keeps this list short, so predictions cost
/// O(r) for the scan plus O(nnz^2) for the variance.
struct SupportEval {
  std::vector<Eigen::Index> idx{};
  std::vector<double> val{};
};

inline SupportEval eval_support(const Location& loc, const BasisSet& basis) {
  SupportEval ev;
  const double t2 = basis.tau * basis.tau;
  for (Eigen::Index l = 0; l < basis.rank(); ++l) {
    const double d2 =
        squared_distance(loc, basis.centers[static_cast<std::size_t>(l)]);
    if (d2 <= t2) {
      const double u = 1.0 - d2 / t2;
      ev.idx.push_back(l);
      ev.val.push_back(u * u);
    }
  }
  return ev;
}

}  // namespace detail

/// Posterior mean of Z at `loc`: trend plus the basis expansion of the
/// posterior random-effect mean. Outside every basis support this reverts
/// to the trend alone.
inline double predict_mean(const Location& loc, const FittedModel& m) {
  double z = trend_vector(loc, m.trend).dot(m.params.alpha);
  const detail::SupportEval ev = detail::eval_support(loc, m.basis);
  for (std::size_t k = 0; k < ev.idx.size(); ++k) {
    z += ev.val[k] * m.eta_mean(ev.idx[k]);
  }
  return z;
}

/// Posterior covariance of Z between two locations: s(a)^T cov[eta|Y] s(b).
inline double predict_covariance(const Location& a, const Location& b,
                                 const FittedModel& m) {
  const detail::SupportEval ea = detail::eval_support(a, m.basis);
  const detail::SupportEval eb = detail::eval_support(b, m.basis);
  double c = 0.0;
  for (std::size_t i = 0; i < ea.idx.size(); ++i) {
    for (std::size_t j = 0; j < eb.idx.size(); ++j) {
      c += ea.val[i] * eb.val[j] * m.eta_cov(ea.idx[i], eb.idx[j]);
    }
  }
  return c;
}

/// Mean and variance at one location. Tiny negative variances from
/// rounding are clipped to 0; anything below -1e-10 is a real failure.
inline Prediction predict_point(const Location& loc, const FittedModel& m) {
  Prediction out;
  const detail::SupportEval ev = detail::eval_support(loc, m.basis);
  out.z_hat = trend_vector(loc, m.trend).dot(m.params.alpha);
  double var = 0.0;
  for (std::size_t i = 0; i < ev.idx.size(); ++i) {
    out.z_hat += ev.val[i] * m.eta_mean(ev.idx[i]);
    for (std::size_t j = 0; j < ev.idx.size(); ++j) {
      var += ev.val[i] * ev.val[j] * m.eta_cov(ev.idx[i], ev.idx[j]);
    }
  }
  if (var < 0.0) {
    if (var < -1e-10) {
      throw NumericalFailure(
          "prediction variance is negative beyond rounding tolerance");
    }
    var = 0.0;
  }
  out.var = var;
  return out;
}

/// Regular prediction raster: cells of side `resolution` covering `bbox`,
/// predictions at cell centers, stored row-major with iy * nx + ix and
/// iy = 0 at min_y.
struct PredictionGrid {
  BoundingBox bbox{};
  double resolution{0.0};
  int nx{0};
  int ny{0};
  std::vector<Prediction> cells{};

  Location point(int ix, int iy) const {
    return {bbox.min_x + (ix + 0.5) * resolution,
            bbox.min_y + (iy + 0.5) * resolution};
  }
  const Prediction& at(int ix, int iy) const {
    return cells[static_cast<std::size_t>(iy) * static_cast<std::size_t>(nx) +
                 static_cast<std::size_t>(ix)];
  }
};

struct GridOptions {
  /// Add the fitted noise variance to every cell (predict an observation
  /// rather than the smooth field).
  bool add_noise_variance{false};
  /// Refuse to allocate grids beyond this many cells.
  std::size_t max_points{2000000};
};

inline PredictionGrid predict_grid(const BoundingBox& bbox, double resolution,
                                   const FittedModel& m,
                                   const GridOptions& opt = {}) {
  validate_box(bbox);
  if (!(resolution > 0.0)) {
    throw InvalidParameter("grid resolution must be positive");
  }
  PredictionGrid g;
  g.bbox = bbox;
  g.resolution = resolution;
  g.nx = std::max(1, static_cast<int>(std::ceil(bbox.width() / resolution)));
  g.ny = std::max(1, static_cast<int>(std::ceil(bbox.height() / resolution)));
  const std::size_t total =
      static_cast<std::size_t>(g.nx) * static_cast<std::size_t>(g.ny);
  if (total > opt.max_points) {
    throw InvalidParameter("prediction grid exceeds the configured point cap");
  }
  g.cells.reserve(total);
  for (int iy = 0; iy < g.ny; ++iy) {
    for (int ix = 0; ix < g.nx; ++ix) {
      Prediction p = predict_point(g.point(ix, iy), m);
      if (opt.add_noise_variance) {
        p.var += m.params.sigma2;
      }
      g.cells.push_back(p);
    }
  }
  return g;
}

}  // namespace frk

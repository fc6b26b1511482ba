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
#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <vector>

#include "frk/design.hpp"
#include "frk/error.hpp"
#include "frk/low_rank.hpp"
#include "frk/types.hpp"

namespace frk {

/// Hard spatial binning of the observations: each observation is assigned
/// to the nearest center of a regular sub-grid (weight 1 for its bin, 0
/// elsewhere). Bins left empty are dropped, so `members[l]` is never empty.
struct Binning {
  std::vector<Location> bin_centers{};
  std::vector<std::vector<Eigen::Index>> members{};

  Eigen::Index m() const { return static_cast<Eigen::Index>(bin_centers.size()); }

  /// The 0/1 binning weight w_l(i).
  double weight(Eigen::Index l, Eigen::Index i) const {
    const auto& mem = members[static_cast<std::size_t>(l)];
    return std::find(mem.begin(), mem.end(), i) != mem.end() ? 1.0 : 0.0;
  }
};

/// Binning plus the detrended data it aggregates: OLS residuals D, per-bin
/// mean residuals dbar, and per-bin mean squared residuals vbar.
struct MomentsBinning {
  Binning binning{};
  Eigen::VectorXd residuals{};  // D, length N
  Eigen::VectorXd dbar{};       // length M
  Eigen::VectorXd vbar{};       // length M
};

struct BinOptions {
  /// Drop empty bins (default). When false, an empty bin is an error.
  bool drop_empty{true};
};

/// Default bin count: 4 r, clipped to (r, N/4]. Errors out when even the
/// minimum feasible count r + 1 exceeds N / 4.
inline Eigen::Index default_bin_count(Eigen::Index r, Eigen::Index n) {
  const Eigen::Index hi = n / 4;
  if (hi <= r) {
    throw InvalidParameter(
        "not enough observations to bin: need more than 4 r observations "
        "so that a bin count in (r, N/4] exists");
  }
  return std::clamp<Eigen::Index>(4 * r, r + 1, hi);
}

namespace detail {

/// Per-bin aggregation of a residual vector: mean and mean square.
inline void aggregate_residuals(const Eigen::VectorXd& d, const Binning& bins,
                                Eigen::VectorXd& dbar, Eigen::VectorXd& vbar) {
  const Eigen::Index m = bins.m();
  dbar.resize(m);
  vbar.resize(m);
  for (Eigen::Index l = 0; l < m; ++l) {
    const auto& mem = bins.members[static_cast<std::size_t>(l)];
    double s = 0.0;
    double s2 = 0.0;
    for (const Eigen::Index i : mem) {
      s += d(i);
      s2 += d(i) * d(i);
    }
    const double cnt = static_cast<double>(mem.size());
    dbar(l) = s / cnt;
    vbar(l) = s2 / cnt;
  }
}

}  // namespace detail

/// Detrends the observations by trend-only OLS and aggregates the residuals
/// over `m_bins` nearest-center grid bins covering the data bounding box.
inline MomentsBinning bin_observations(const std::vector<Measurement>& obs,
                                       const DesignMatrices& dm,
                                       Eigen::Index m_bins,
                                       const BinOptions& opt = {}) {
  const Eigen::Index n = dm.n();
  if (static_cast<Eigen::Index>(obs.size()) != n) {
    throw InvalidParameter("observation count does not match the design");
  }
  if (m_bins < 2 || m_bins > n) {
    throw InvalidParameter("bin count must be in [2, N]");
  }

  // OLS residuals D = y - T (T^T T)^{-1} T^T y.
  const Eigen::VectorXd y = measurement_values(obs);
  const DesignStats st = DesignStats::compute(dm);
  const Eigen::VectorXd alpha = st.solve_trend(dm.T.transpose() * y);
  MomentsBinning out;
  out.residuals = y - dm.T * alpha;

  // Grid of bin centers over the data bounding box, roughly square cells.
  const BoundingBox box = bounding_box(measurement_locations(obs));
  const double w = box.width();
  const double h = box.height();
  int mx = 1;
  int my = 1;
  if (w <= 0.0 && h <= 0.0) {
    throw InvalidParameter("cannot bin observations that share one location");
  } else if (w <= 0.0) {
    my = static_cast<int>(m_bins);
  } else if (h <= 0.0) {
    mx = static_cast<int>(m_bins);
  } else {
    const double aspect = w / h;
    mx = std::max(1, static_cast<int>(std::lround(
                         std::sqrt(static_cast<double>(m_bins) * aspect))));
    my = std::max(1, static_cast<int>(std::ceil(
                         static_cast<double>(m_bins) / static_cast<double>(mx))));
  }
  const double dx = w > 0.0 ? w / mx : 1.0;
  const double dy = h > 0.0 ? h / my : 1.0;

  std::vector<std::vector<Eigen::Index>> cells(
      static_cast<std::size_t>(mx) * static_cast<std::size_t>(my));
  for (Eigen::Index i = 0; i < n; ++i) {
    const Location& p = obs[static_cast<std::size_t>(i)].loc;
    const int ix = std::clamp(
        static_cast<int>(std::floor((p.x - box.min_x) / dx)), 0, mx - 1);
    const int iy = std::clamp(
        static_cast<int>(std::floor((p.y - box.min_y) / dy)), 0, my - 1);
    cells[static_cast<std::size_t>(iy) * static_cast<std::size_t>(mx) +
          static_cast<std::size_t>(ix)]
        .push_back(i);
  }

  for (int iy = 0; iy < my; ++iy) {
    for (int ix = 0; ix < mx; ++ix) {
      auto& mem = cells[static_cast<std::size_t>(iy) * static_cast<std::size_t>(mx) +
                        static_cast<std::size_t>(ix)];
      if (mem.empty()) {
        if (!opt.drop_empty) {
          throw InvalidParameter("empty bin and drop_empty is disabled");
        }
        continue;
      }
      out.binning.bin_centers.push_back(
          {box.min_x + (ix + 0.5) * dx, box.min_y + (iy + 0.5) * dy});
      out.binning.members.push_back(std::move(mem));
    }
  }
  if (out.binning.m() < 2) {
    throw InvalidParameter("binning produced fewer than 2 non-empty bins");
  }
  detail::aggregate_residuals(out.residuals, out.binning, out.dbar, out.vbar);
  return out;
}

/// Binned moment matrix: off-diagonal dbar_l dbar_k, diagonal vbar_l.
/// Always positive semidefinite because vbar_l >= dbar_l^2 per bin.
inline Eigen::MatrixXd sigma_hat_m(const Eigen::VectorXd& dbar,
                                   const Eigen::VectorXd& vbar) {
  if (dbar.size() != vbar.size() || dbar.size() < 2) {
    throw InvalidParameter("dbar and vbar must have equal length >= 2");
  }
  Eigen::MatrixXd s = dbar * dbar.transpose();
  s.diagonal() = vbar;
  return s;
}

/// Averages the rows of a matrix over the bins: row l of the result is the
/// mean of the rows whose observations fall in bin l. Applied to S this
/// yields the binned basis matrix S_M.
inline Eigen::MatrixXd bin_rows(const Eigen::MatrixXd& x, const Binning& bins) {
  Eigen::MatrixXd out(bins.m(), x.cols());
  for (Eigen::Index l = 0; l < bins.m(); ++l) {
    const auto& mem = bins.members[static_cast<std::size_t>(l)];
    Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(x.cols());
    for (const Eigen::Index i : mem) {
      acc += x.row(i);
    }
    out.row(l) = acc / static_cast<double>(mem.size());
  }
  return out;
}

/// Positive-(semi)definiteness report for the moments estimator.
struct Prop1Report {
  bool psd_ok{false};                // Sigma_hat_M is PSD (up to rounding)
  double sigma2_lower_bound{0.0};    // provable lower bound on sigma2_hat
  bool sigma2_bound_ok{false};       // sigma2_hat >= that bound
  double lambda_min_projected{0.0};  // lambda_min(Q^T Sigma_hat_M Q)
  bool k_hat_pd{false};              // sigma2_hat < lambda_min_projected
  double k_hat_margin{0.0};          // lambda_min_projected - sigma2_hat
  bool remark_ok{false};  // every bin has >= 2 members with distinct residuals
};

struct MomentsResult {
  double sigma2_hat{0.0};
  Eigen::MatrixXd k_hat{};
  Eigen::MatrixXd sigma_hat_m{};
  Prop1Report diagnostics{};
  bool repaired{false};
  Eigen::MatrixXd k_hat_repaired{};  // empty unless repaired
};

/// Evaluates the definiteness guarantees on a completed moments fit.
/// `q` is the thin orthonormal factor of S_M; `mb`, when given, enables the
/// per-bin distinct-residuals check.
inline Prop1Report prop1_diagnostics(const Eigen::MatrixXd& sigma_hat_m_mat,
                                     double sigma2_hat,
                                     const Eigen::MatrixXd& q,
                                     const MomentsBinning* mb = nullptr) {
  const Eigen::Index m = sigma_hat_m_mat.rows();
  const Eigen::Index r = q.cols();
  if (q.rows() != m || sigma_hat_m_mat.cols() != m) {
    throw InvalidParameter("dimension mismatch in prop1_diagnostics");
  }
  Prop1Report rep;

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sigma_hat_m_mat);
  if (es.info() != Eigen::Success) {
    throw NumericalFailure("eigendecomposition of Sigma_hat_M failed");
  }
  const Eigen::VectorXd lam = es.eigenvalues();  // ascending
  const double scale = std::max(1.0, lam.cwiseAbs().maxCoeff());
  rep.psd_ok = lam.minCoeff() >= -1e-10 * scale;

  // Lower bound on sigma2_hat: the smallest eigenvalue whose eigenspace is
  // not contained in the column span of Q. Eigenvalues are grouped into
  // clusters (repeated eigenvalues share an eigenspace); a cluster
  // qualifies when some eigenvector leaves the span, i.e. the smallest
  // singular value of Q^T U is below 1.
  double bound = std::numeric_limits<double>::infinity();
  Eigen::Index start = 0;
  while (start < m) {
    Eigen::Index stop = start + 1;
    while (stop < m && lam(stop) - lam(stop - 1) <= 1e-8 * scale) {
      ++stop;
    }
    const Eigen::MatrixXd u = es.eigenvectors().middleCols(start, stop - start);
    bool leaves_span = false;
    if (stop - start > r) {
      leaves_span = true;  // eigenspace larger than rank(Q) must leave it
    } else {
      Eigen::JacobiSVD<Eigen::MatrixXd> svd(q.transpose() * u);
      const double smin = svd.singularValues().size() > 0
                              ? svd.singularValues().minCoeff()
                              : 0.0;
      leaves_span = smin < 1.0 - 1e-8;
    }
    if (leaves_span) {
      bound = std::min(bound, lam(start));
    }
    start = stop;
  }
  rep.sigma2_lower_bound = std::isfinite(bound) ? bound : 0.0;
  rep.sigma2_bound_ok = sigma2_hat >= rep.sigma2_lower_bound - 1e-8 * scale;

  Eigen::MatrixXd proj = q.transpose() * sigma_hat_m_mat * q;
  proj = 0.5 * (proj + proj.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> esp(proj);
  if (esp.info() != Eigen::Success) {
    throw NumericalFailure("eigendecomposition of Q^T Sigma_hat_M Q failed");
  }
  rep.lambda_min_projected = esp.eigenvalues().minCoeff();
  rep.k_hat_margin = rep.lambda_min_projected - sigma2_hat;
  rep.k_hat_pd = rep.k_hat_margin > 0.0;

  if (mb) {
    rep.remark_ok = true;
    for (const auto& mem : mb->binning.members) {
      bool distinct = false;
      for (std::size_t a = 1; a < mem.size() && !distinct; ++a) {
        distinct = mb->residuals(mem[a]) != mb->residuals(mem[0]);
      }
      if (!distinct) {
        rep.remark_ok = false;
        break;
      }
    }
  }
  return rep;
}

struct FitMomentsOptions {
  /// Lift the eigenvalues of a non-PD K_hat to a small positive floor.
  /// Off by default: a non-PD K_hat is reported, not silently fixed.
  bool repair_non_pd{false};
};

/// Method-of-moments estimation of (sigma2, K) from the binned residual
/// moments: QR-factor S_M = Q R, read sigma2 off the component of
/// Sigma_hat_M orthogonal to the span of Q, and invert the in-span part
/// for K. Exact when Sigma_hat_M = sigma2 I + S_M K S_M^T.
inline MomentsResult fit_moments(const MomentsBinning& mb,
                                 const Eigen::MatrixXd& sigma_hat_m_mat,
                                 const Eigen::MatrixXd& s_m,
                                 const FitMomentsOptions& opt = {}) {
  const Eigen::Index m = s_m.rows();
  const Eigen::Index r = s_m.cols();
  if (sigma_hat_m_mat.rows() != m || sigma_hat_m_mat.cols() != m) {
    throw InvalidParameter("Sigma_hat_M dimensions do not match S_M");
  }
  if (m <= r) {
    throw InvalidParameter(
        "need more bins than basis functions (M > r) for the moments fit");
  }

  Eigen::HouseholderQR<Eigen::MatrixXd> qr(s_m);
  const Eigen::MatrixXd q =
      qr.householderQ() * Eigen::MatrixXd::Identity(m, r);
  const Eigen::MatrixXd r_full =
      qr.matrixQR().topRows(r).triangularView<Eigen::Upper>();
  const double r_scale = r_full.diagonal().cwiseAbs().maxCoeff();
  if (!(r_full.diagonal().cwiseAbs().minCoeff() > 1e-12 * std::max(1.0, r_scale))) {
    throw DegenerateDesign(
        "binned basis matrix S_M is rank deficient; the moments estimator "
        "requires S_M to have full column rank");
  }

  MomentsResult res;
  res.sigma_hat_m = sigma_hat_m_mat;
  const Eigen::MatrixXd proj = q.transpose() * sigma_hat_m_mat * q;
  res.sigma2_hat = (sigma_hat_m_mat.trace() - proj.trace()) /
                   static_cast<double>(m - r);

  // K_hat = R^{-1} Q^T (Sigma_hat_M - sigma2_hat I) Q R^{-T}.
  Eigen::MatrixXd core = proj;
  core.diagonal().array() -= res.sigma2_hat;
  Eigen::MatrixXd k = r_full.triangularView<Eigen::Upper>().solve(core);
  k = r_full.triangularView<Eigen::Upper>()
          .solve(k.transpose())
          .transpose()
          .eval();
  res.k_hat = 0.5 * (k + k.transpose());

  res.diagnostics = prop1_diagnostics(sigma_hat_m_mat, res.sigma2_hat, q, &mb);

  if (opt.repair_non_pd && !res.diagnostics.k_hat_pd) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(res.k_hat);
    if (es.info() != Eigen::Success) {
      throw NumericalFailure("eigendecomposition of K_hat failed");
    }
    double eps = 1e-8 * std::abs(res.k_hat.trace()) / static_cast<double>(r);
    if (!(eps > 0.0)) {
      eps = 1e-12;
    }
    const Eigen::VectorXd lifted = es.eigenvalues().cwiseMax(eps);
    res.k_hat_repaired = es.eigenvectors() * lifted.asDiagonal() *
                         es.eigenvectors().transpose();
    res.repaired = true;
  }
  return res;
}

}  // namespace frk

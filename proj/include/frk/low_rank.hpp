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
#include <cassert>
#include <cmath>

#include "frk/covariance.hpp"
#include "frk/design.hpp"
#include "frk/error.hpp"
#include "frk/types.hpp"

namespace frk {

namespace detail {

// Debug tripwire: the low-rank code paths must never materialize an N x N
// matrix. Called wherever a matrix whose shape depends on N is allocated.
inline void guard_not_n_by_n(Eigen::Index rows, Eigen::Index cols,
                             Eigen::Index n_obs) {
  (void)rows;
  (void)cols;
  (void)n_obs;
  assert(!(n_obs > 1 && rows == n_obs && cols == n_obs) &&
         "low-rank path allocated an N x N matrix");
}

}  // namespace detail

/// Precomputed data-side Gram matrices reused across EM iterations:
/// S^T S (the only O(r^2 N) product) and the trend normal equations.
struct DesignStats {
  Eigen::MatrixXd sts{};                      // r x r
  Eigen::MatrixXd ttt{};                      // p x p
  Eigen::LDLT<Eigen::MatrixXd> ttt_ldlt{};    // factorization of T^T T
  double ttt_cond{0.0};

  static DesignStats compute(const DesignMatrices& dm) {
    DesignStats st;
    st.sts.noalias() = dm.S.transpose() * dm.S;
    st.ttt.noalias() = dm.T.transpose() * dm.T;
    st.ttt_cond = trend_gram_condition(st.ttt);
    if (!(st.ttt_cond < kDesignConditionLimit)) {
      throw DegenerateDesign(
          "trend design is numerically rank deficient (cond(T^T T) >= 1e12)");
    }
    st.ttt_ldlt.compute(st.ttt);
    return st;
  }

  /// Ordinary least squares for the trend: solves T^T T a = T^T y.
  Eigen::VectorXd solve_trend(const Eigen::VectorXd& tty) const {
    return ttt_ldlt.solve(tty);
  }
};

/// Factorized view of Sigma = sigma2 I_N + S K(beta, phi) S^T. Everything
/// is expressed through the r x r inner matrix A = sigma2 beta Ktilde^{-1}
/// + S^T S, so solves and determinants cost O(r^2 N + r^3) and no N x N
/// matrix is ever formed.
class LowRankSigma {
 public:
  /// `delta` is the basis-center distance matrix; `sts` is S^T S.
  LowRankSigma(const Eigen::MatrixXd& delta, const Eigen::MatrixXd& sts,
               const ModelParams& p)
      : sigma2_(p.sigma2), beta_(p.beta), r_(delta.rows()) {
    validate_low_rank_params(p);
    ktilde_ = correlation_from_distances(delta, p.phi);
    ktilde_llt_.compute(ktilde_);
    if (ktilde_llt_.info() != Eigen::Success) {
      throw NumericalFailure(
          "basis-center correlation matrix is not positive definite");
    }
    log_det_ktilde_ = 2.0 * ktilde_llt_.matrixLLT().diagonal().array().log().sum();
    Eigen::MatrixXd inner = sts;
    inner.noalias() +=
        sigma2_ * beta_ * ktilde_llt_.solve(Eigen::MatrixXd::Identity(r_, r_));
    inner = 0.5 * (inner + inner.transpose()).eval();  // enforce symmetry
    inner_llt_.compute(inner);
    if (inner_llt_.info() != Eigen::Success) {
      throw NumericalFailure(
          "inner r x r system sigma2 beta Ktilde^{-1} + S^T S is singular");
    }
    log_det_inner_ = 2.0 * inner_llt_.matrixLLT().diagonal().array().log().sum();
  }

  double sigma2() const { return sigma2_; }
  double beta() const { return beta_; }
  Eigen::Index rank() const { return r_; }
  const Eigen::MatrixXd& ktilde() const { return ktilde_; }
  const Eigen::LLT<Eigen::MatrixXd>& ktilde_llt() const { return ktilde_llt_; }
  double log_det_ktilde() const { return log_det_ktilde_; }

  /// ln det Sigma = (N - r) ln sigma2 + ln det A + ln det K, with
  /// ln det K = ln det Ktilde - r ln beta.
  double log_det_sigma(Eigen::Index n_obs) const {
    return (static_cast<double>(n_obs) - static_cast<double>(r_)) *
               std::log(sigma2_) +
           log_det_inner_ + log_det_ktilde_ -
           static_cast<double>(r_) * std::log(beta_);
  }

  /// Solves A w = rhs for the inner system.
  Eigen::MatrixXd inner_solve(const Eigen::MatrixXd& rhs) const {
    return inner_llt_.solve(rhs);
  }

  /// Sigma^{-1} v given v and the design, via
  /// Sigma^{-1} = sigma2^{-1} (I - S A^{-1} S^T).
  Eigen::VectorXd solve(const Eigen::MatrixXd& S, const Eigen::VectorXd& v) const {
    detail::guard_not_n_by_n(v.size(), 1, S.rows());
    Eigen::VectorXd stv = S.transpose() * v;
    Eigen::VectorXd out = v;
    out.noalias() -= S * inner_llt_.solve(stv);
    return out / sigma2_;
  }

  /// Quadratic form res^T Sigma^{-1} res from res's squared norm and
  /// S^T res, without touching any N-sized temporary.
  double quad_form(double res_sq_norm, const Eigen::VectorXd& st_res) const {
    const double correction = st_res.dot(inner_llt_.solve(st_res));
    return (res_sq_norm - correction) / sigma2_;
  }

 private:
  static void validate_low_rank_params(const ModelParams& p) {
    if (!(p.sigma2 > 0.0) || !std::isfinite(p.sigma2)) {
      throw InvalidParameter("noise variance sigma2 must be positive and finite");
    }
    if (!(p.beta > 0.0) || !std::isfinite(p.beta)) {
      throw InvalidParameter("covariance precision beta must be positive and finite");
    }
  }

  double sigma2_;
  double beta_;
  Eigen::Index r_;
  Eigen::MatrixXd ktilde_;
  Eigen::LLT<Eigen::MatrixXd> ktilde_llt_;
  Eigen::LLT<Eigen::MatrixXd> inner_llt_;
  double log_det_ktilde_{0.0};
  double log_det_inner_{0.0};
};

/// Sigma^{-1} v for Sigma = sigma2 I + S K S^T. O(r^2 N + r^3) time,
/// O(rN) memory.
inline Eigen::VectorXd apply_sigma_inverse(const Eigen::VectorXd& v,
                                           const DesignMatrices& dm,
                                           const ModelParams& params) {
  if (v.size() != dm.n()) {
    throw InvalidParameter("vector length does not match the design");
  }
  Eigen::MatrixXd sts;
  sts.noalias() = dm.S.transpose() * dm.S;
  const LowRankSigma sigma(center_distance_matrix(dm.basis), sts, params);
  return sigma.solve(dm.S, v);
}

/// Marginal Gaussian log-likelihood of the observations:
/// -1/2 [N ln 2 pi + ln det Sigma + (y - T alpha)^T Sigma^{-1} (y - T alpha)].
/// The 2 pi constant is retained so values are comparable across N.
inline double log_likelihood(const Eigen::VectorXd& y, const DesignMatrices& dm,
                             const ModelParams& params) {
  if (y.size() != dm.n()) {
    throw InvalidParameter("observation vector length does not match the design");
  }
  if (params.alpha.size() != dm.p()) {
    throw InvalidParameter("trend coefficient count does not match the design");
  }
  Eigen::MatrixXd sts;
  sts.noalias() = dm.S.transpose() * dm.S;
  const LowRankSigma sigma(center_distance_matrix(dm.basis), sts, params);
  const Eigen::VectorXd res = y - dm.T * params.alpha;
  const Eigen::VectorXd st_res = dm.S.transpose() * res;
  const double n = static_cast<double>(dm.n());
  constexpr double kLn2Pi = 1.8378770664093454836;
  return -0.5 * (n * kLn2Pi + sigma.log_det_sigma(dm.n()) +
                 sigma.quad_form(res.squaredNorm(), st_res));
}

}  // namespace frk

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
#include <limits>
#include <memory>
#include <optional>
#include <vector>

#include "frk/covariance.hpp"
#include "frk/design.hpp"
#include "frk/error.hpp"
#include "frk/low_rank.hpp"
#include "frk/model.hpp"
#include "frk/types.hpp"

namespace frk {

/// Floors keeping the variance components strictly positive when the data
/// push them to zero (pure-trend data, noiseless data).
inline constexpr double kSigma2Floor = 1e-6;
inline constexpr double kInvBetaFloor = 1e-6;

/// EM controls. `tol` and `patience` implement the stopping rule: stop once
/// the Euclidean norm of the raw parameter change stays below `tol` for
/// `patience` consecutive iterations. `phi_over_tau_init` sets the initial
/// correlation range to tau / phi_over_tau_init.
struct EmConfig {
  double tol{1e-5};
  int patience{100};
  int max_iter{5000};
  int backtrack_max{50};
  double phi_over_tau_init{5.0};
};

inline void validate_em_config(const EmConfig& cfg) {
  if (!(cfg.tol > 0.0)) throw InvalidParameter("EM tolerance must be positive");
  if (cfg.patience < 1) throw InvalidParameter("EM patience must be >= 1");
  if (cfg.max_iter < 1) throw InvalidParameter("EM max_iter must be >= 1");
  if (cfg.backtrack_max < 1) {
    throw InvalidParameter("EM backtrack_max must be >= 1");
  }
  if (!(cfg.phi_over_tau_init > 0.0)) {
    throw InvalidParameter("phi_over_tau_init must be positive");
  }
}

/// Posterior of the random effects given the data at fixed parameters:
/// mean E[eta|Y], covariance cov[eta|Y], and the posterior second moment
/// E[eta eta^T|Y] = cov + mean mean^T.
struct PosteriorEta {
  Eigen::VectorXd mean{};
  Eigen::MatrixXd cov{};
  Eigen::MatrixXd second_moment{};
};

/// One EM iteration as recorded in the trace. `newton_step` is the accepted
/// damping factor a of the phi update (0 means the step was rejected and
/// phi kept). `q_value` is Q(theta_{l+1}; theta_l).
struct EmIteration {
  int iter{0};
  ModelParams params{};
  double log_likelihood{0.0};
  double q_value{std::numeric_limits<double>::quiet_NaN()};
  double newton_step{std::numeric_limits<double>::quiet_NaN()};
  double delta_norm{std::numeric_limits<double>::quiet_NaN()};
};

struct EmTrace {
  std::vector<EmIteration> iterations{};
  bool converged{false};
};

struct EmFit {
  FittedModel model{};
  EmTrace trace{};
};

namespace detail {

/// E[eta|Y] = A^{-1} S^T (y - T alpha) and cov = sigma2 A^{-1}, where A is
/// the inner matrix of the low-rank solver. Equivalent to the textbook
/// K S^T Sigma^{-1} forms but costs O(r^3) given S^T(y - T alpha).
inline PosteriorEta posterior_eta(const LowRankSigma& sigma,
                                  const Eigen::VectorXd& st_res) {
  PosteriorEta post;
  post.mean = sigma.inner_solve(st_res);
  const Eigen::Index r = st_res.size();
  Eigen::MatrixXd cov =
      sigma.sigma2() * sigma.inner_solve(Eigen::MatrixXd::Identity(r, r));
  post.cov = 0.5 * (cov + cov.transpose());
  post.second_moment = post.cov;
  post.second_moment.noalias() += post.mean * post.mean.transpose();
  return post;
}

/// Expected complete-data log-likelihood Q(theta; theta_tilde) given the
/// posterior at theta_tilde, up to the dropped additive constant
/// -((N + r)/2) ln 2 pi. `ktilde_llt`/`log_det_ktilde` must factorize
/// Ktilde(theta.phi). Returns nullopt when the value is not finite.
inline std::optional<double> q_given_eta(const ModelParams& theta,
                                         const PosteriorEta& eta,
                                         const Eigen::VectorXd& y,
                                         const DesignMatrices& dm,
                                         const DesignStats& st,
                                         const Eigen::LLT<Eigen::MatrixXd>& ktilde_llt,
                                         double log_det_ktilde) {
  const double n = static_cast<double>(dm.n());
  const double r = static_cast<double>(dm.r());
  const Eigen::VectorXd res = y - dm.T * theta.alpha;
  const Eigen::VectorXd st_res = dm.S.transpose() * res;
  const double tr_sts_v = (st.sts.array() * eta.second_moment.array()).sum();
  const double tr_kinv_v = theta.beta * ktilde_llt.solve(eta.second_moment).trace();
  const double log_det_k = log_det_ktilde - r * std::log(theta.beta);
  const double q = -0.5 * n * std::log(theta.sigma2) - 0.5 * log_det_k -
                   0.5 * res.squaredNorm() / theta.sigma2 -
                   0.5 * (tr_sts_v / theta.sigma2 + tr_kinv_v) +
                   st_res.dot(eta.mean) / theta.sigma2;
  if (!std::isfinite(q)) {
    return std::nullopt;
  }
  return q;
}

/// Builds Ktilde(phi) and evaluates Q; nullopt when the correlation matrix
/// is not positive definite or the value is not finite. Used by the phi
/// backtracking line search, which must treat such trial points as
/// rejected rather than fatal.
inline std::optional<double> try_q(const ModelParams& theta,
                                   const PosteriorEta& eta,
                                   const Eigen::VectorXd& y,
                                   const DesignMatrices& dm,
                                   const DesignStats& st,
                                   const Eigen::MatrixXd& delta) {
  const double inv_range = std::exp(-theta.phi);
  if (!std::isfinite(inv_range)) {
    return std::nullopt;
  }
  Eigen::MatrixXd ktilde = (-delta.array() * inv_range).exp().matrix();
  Eigen::LLT<Eigen::MatrixXd> llt(ktilde);
  if (llt.info() != Eigen::Success) {
    return std::nullopt;
  }
  const double log_det = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  return q_given_eta(theta, eta, y, dm, st, llt, log_det);
}

struct PhiStep {
  double phi{0.0};
  double step{0.0};  // accepted damping a; 0 when no move was accepted
};

/// Damped Newton update of phi maximizing Q along the parameter sweep.
/// G is the gradient trace Tr[(beta_next Ktilde^{-1} V - I) Ktilde^{-1}
/// (Delta o Ktilde)] and H its curvature companion; both are evaluated at
/// the current phi. The step phi - a G / H is halved from a = 1 until
/// Q(alpha_next, sigma2_next, beta_next, phi(a)) >= Q(theta_l; theta_l).
inline PhiStep update_phi_impl(const Eigen::VectorXd& y,
                               const DesignMatrices& dm, const DesignStats& st,
                               const Eigen::MatrixXd& delta,
                               const Eigen::MatrixXd& ktilde,
                               const Eigen::LLT<Eigen::MatrixXd>& ktilde_llt,
                               const ModelParams& current,
                               const PosteriorEta& eta,
                               const Eigen::VectorXd& alpha_next,
                               double sigma2_next, double beta_next,
                               const EmConfig& cfg) {
  const Eigen::Index r = dm.r();
  const Eigen::MatrixXd& v = eta.second_moment;

  // W = Ktilde^{-1} V; B = beta_next W - I.
  const Eigen::MatrixXd w = ktilde_llt.solve(v);
  Eigen::MatrixXd b = beta_next * w;
  b.diagonal().array() -= 1.0;

  // P = Ktilde^{-1} (Delta o Ktilde).
  const Eigen::MatrixXd dk = delta.cwiseProduct(ktilde);
  const Eigen::MatrixXd p = ktilde_llt.solve(dk);
  const double g = (b.array() * p.transpose().array()).sum();  // Tr(B P)

  // H = -G + e^{-phi} [ Tr(B Ktilde^{-1}(Delta o Delta o Ktilde))
  //                     + Tr(P^2 (I - 2 beta_next Ktilde^{-1} V)) ].
  const Eigen::MatrixXd ddk = delta.cwiseProduct(dk);
  const Eigen::MatrixXd kinv_ddk = ktilde_llt.solve(ddk);
  const double t2 = (b.array() * kinv_ddk.transpose().array()).sum();
  Eigen::MatrixXd m3 = -2.0 * beta_next * w;
  m3.diagonal().array() += 1.0;
  Eigen::MatrixXd pm3;
  pm3.noalias() = p * m3;
  const double t3 = (p.array() * pm3.transpose().array()).sum();
  const double h = -g + std::exp(-current.phi) * (t2 + t3);

  if (g == 0.0) {
    return {current.phi, 1.0};  // already stationary in phi
  }
  if (!std::isfinite(g) || !std::isfinite(h) || h == 0.0) {
    return {current.phi, 0.0};
  }

  const double log_det_ktilde =
      2.0 * ktilde_llt.matrixLLT().diagonal().array().log().sum();
  const std::optional<double> q_ref = q_given_eta(
      current, eta, y, dm, st, ktilde_llt, log_det_ktilde);
  if (!q_ref) {
    return {current.phi, 0.0};
  }

  ModelParams cand = current;
  cand.alpha = alpha_next;
  cand.sigma2 = sigma2_next;
  cand.beta = beta_next;
  double a = 1.0;
  for (int t = 0; t <= cfg.backtrack_max; ++t) {
    const double phi_try = current.phi - a * g / h;
    if (std::isfinite(phi_try)) {
      cand.phi = phi_try;
      const std::optional<double> q_try = try_q(cand, eta, y, dm, st, delta);
      if (q_try && *q_try >= *q_ref) {
        return {phi_try, a};
      }
    }
    a *= 0.5;
  }
  return {current.phi, 0.0};
}

inline double floor_sigma2(double v) { return std::max(v, kSigma2Floor); }

inline double clamp_beta(double beta) {
  if (!std::isfinite(beta) || !(beta > 0.0)) {
    throw NumericalFailure("beta update produced a non-positive value");
  }
  return std::min(beta, 1.0 / kInvBetaFloor);  // floors 1/beta at kInvBetaFloor
}

}  // namespace detail

/// Data-driven initialization: OLS trend, residual variance split evenly
/// between the nugget and the random-effect scale (both floored), and an
/// initial correlation range of tau / phi_over_tau_init.
inline ModelParams init_params(const Eigen::VectorXd& y,
                               const DesignMatrices& dm, double tau,
                               double phi_over_tau_init = 5.0) {
  if (!(tau > 0.0)) {
    throw InvalidParameter("basis support radius tau must be positive");
  }
  if (!(phi_over_tau_init > 0.0)) {
    throw InvalidParameter("phi_over_tau_init must be positive");
  }
  const DesignStats st = DesignStats::compute(dm);
  ModelParams p;
  p.alpha = st.solve_trend(dm.T.transpose() * y);
  const double v = (y - dm.T * p.alpha).squaredNorm() / static_cast<double>(dm.n());
  p.sigma2 = detail::floor_sigma2(0.5 * v);
  p.beta = 1.0 / std::max(0.5 * v, kInvBetaFloor);
  p.phi = std::log(tau / phi_over_tau_init);
  return p;
}

/// Posterior of the random effects at fixed parameters.
inline PosteriorEta e_step(const Eigen::VectorXd& y, const DesignMatrices& dm,
                           const ModelParams& params) {
  if (y.size() != dm.n()) {
    throw InvalidParameter("observation vector length does not match the design");
  }
  if (params.alpha.size() != dm.p()) {
    throw InvalidParameter("trend coefficient count does not match the design");
  }
  const DesignStats st = DesignStats::compute(dm);
  const LowRankSigma sigma(center_distance_matrix(dm.basis), st.sts, params);
  const Eigen::VectorXd res = y - dm.T * params.alpha;
  return detail::posterior_eta(sigma, dm.S.transpose() * res);
}

/// M-step for the trend: OLS of y - S E[eta|Y] on the trend columns.
inline Eigen::VectorXd update_alpha(const Eigen::VectorXd& y,
                                    const DesignMatrices& dm,
                                    const PosteriorEta& eta) {
  const DesignStats st = DesignStats::compute(dm);
  Eigen::VectorXd adj = y;
  adj.noalias() -= dm.S * eta.mean;
  return st.solve_trend(dm.T.transpose() * adj);
}

/// M-step for the nugget:
/// (||y - T alpha_next - S E[eta|Y]||^2 + Tr(S^T S cov[eta|Y])) / N, floored.
inline double update_sigma2(const Eigen::VectorXd& y, const DesignMatrices& dm,
                            const Eigen::VectorXd& alpha_next,
                            const PosteriorEta& eta) {
  Eigen::VectorXd res = y;
  res.noalias() -= dm.T * alpha_next;
  res.noalias() -= dm.S * eta.mean;
  Eigen::MatrixXd sts;
  sts.noalias() = dm.S.transpose() * dm.S;
  const double tr = (sts.array() * eta.cov.array()).sum();
  return detail::floor_sigma2(
      (res.squaredNorm() + tr) / static_cast<double>(dm.n()));
}

/// M-step for the scale: beta_next = r / Tr(Ktilde^{-1} E[eta eta^T|Y]),
/// clamped so 1/beta stays above its floor.
inline double update_beta(const PosteriorEta& eta,
                          const Eigen::MatrixXd& ktilde) {
  Eigen::LLT<Eigen::MatrixXd> llt(ktilde);
  if (llt.info() != Eigen::Success) {
    throw NumericalFailure(
        "basis-center correlation matrix is not positive definite");
  }
  const double tr = llt.solve(eta.second_moment).trace();
  return detail::clamp_beta(static_cast<double>(ktilde.rows()) / tr);
}

struct PhiUpdate {
  double phi{0.0};
  double step{0.0};
};

/// Damped Newton M-step for phi (see detail::update_phi_impl). The
/// candidate Q values are compared against Q at the current parameters, so
/// an accepted step never decreases Q; a rejected search keeps phi.
inline PhiUpdate update_phi(const Eigen::VectorXd& y, const DesignMatrices& dm,
                            const ModelParams& current, const PosteriorEta& eta,
                            const Eigen::VectorXd& alpha_next,
                            double sigma2_next, double beta_next,
                            const EmConfig& cfg = {}) {
  validate_em_config(cfg);
  const DesignStats st = DesignStats::compute(dm);
  const Eigen::MatrixXd delta = center_distance_matrix(dm.basis);
  const Eigen::MatrixXd ktilde = correlation_from_distances(delta, current.phi);
  Eigen::LLT<Eigen::MatrixXd> llt(ktilde);
  if (llt.info() != Eigen::Success) {
    throw NumericalFailure(
        "basis-center correlation matrix is not positive definite");
  }
  const detail::PhiStep s = detail::update_phi_impl(
      y, dm, st, delta, ktilde, llt, current, eta, alpha_next, sigma2_next,
      beta_next, cfg);
  return {s.phi, s.step};
}

/// Expected complete-data log-likelihood Q(theta; theta_tilde), dropping
/// the additive constant -((N + r)/2) ln 2 pi that no update depends on.
inline double q_function(const ModelParams& theta,
                         const ModelParams& theta_tilde,
                         const Eigen::VectorXd& y, const DesignMatrices& dm) {
  const DesignStats st = DesignStats::compute(dm);
  const Eigen::MatrixXd delta = center_distance_matrix(dm.basis);
  const LowRankSigma sigma_tilde(delta, st.sts, theta_tilde);
  const Eigen::VectorXd res = y - dm.T * theta_tilde.alpha;
  const PosteriorEta eta =
      detail::posterior_eta(sigma_tilde, dm.S.transpose() * res);
  const std::optional<double> q = detail::try_q(theta, eta, y, dm, st, delta);
  if (!q) {
    throw NumericalFailure("Q-function is not finite at the given parameters");
  }
  return *q;
}

/// Conditions a model with fixed parameters on the data (no fitting):
/// useful for prediction with externally chosen parameters.
inline FittedModel condition_on(const std::vector<Measurement>& obs,
                                const BasisSet& basis, const TrendSpec& spec,
                                const ModelParams& params) {
  const DesignMatrices dm = build_design_matrices(obs, basis, spec);
  const Eigen::VectorXd y = measurement_values(obs);
  const PosteriorEta eta = e_step(y, dm, params);
  FittedModel m;
  m.trend = spec;
  m.basis = basis;
  m.params = params;
  m.eta_mean = eta.mean;
  m.eta_cov = eta.cov;
  m.converged = true;
  m.iterations = 0;
  m.data_bbox = bounding_box(measurement_locations(obs));
  validate_model(m);
  return m;
}

/// Fits the low-rank model by EM. Every iteration runs the sweep
/// alpha -> sigma2 -> beta -> phi against the posterior at the current
/// parameters; each sub-update maximizes (or for phi, never decreases) the
/// Q-function, so the marginal log-likelihood trace is non-decreasing.
/// Stops when the parameter change norm stays below cfg.tol for
/// cfg.patience consecutive iterations; otherwise returns the last iterate
/// with converged=false.
inline EmFit fit_em(const std::vector<Measurement>& obs, const BasisSet& basis,
                    const TrendSpec& spec, const EmConfig& cfg = {},
                    const std::optional<ModelParams>& init = {}) {
  validate_em_config(cfg);
  if (static_cast<Eigen::Index>(obs.size()) <= spec.dim() + 1) {
    throw InvalidParameter("EM needs more than p + 1 observations");
  }
  const DesignMatrices dm = build_design_matrices(obs, basis, spec);
  const Eigen::VectorXd y = measurement_values(obs);
  const DesignStats st = DesignStats::compute(dm);
  const Eigen::MatrixXd delta = center_distance_matrix(dm.basis);
  for (Eigen::Index i = 0; i < delta.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < delta.cols(); ++j) {
      if (delta(i, j) <= 0.0) {
        throw SingularCovariance(
            "duplicate basis centers make the covariance singular");
      }
    }
  }

  ModelParams params =
      init ? *init : init_params(y, dm, basis.tau, cfg.phi_over_tau_init);
  if (params.alpha.size() != dm.p()) {
    throw InvalidParameter("initial trend coefficient count does not match");
  }
  validate_params(params);

  const double n = static_cast<double>(dm.n());
  constexpr double kLn2Pi = 1.8378770664093454836;
  const auto marginal_ll = [&](const LowRankSigma& sig,
                               const Eigen::VectorXd& res,
                               const Eigen::VectorXd& st_res) {
    return -0.5 * (n * kLn2Pi + sig.log_det_sigma(dm.n()) +
                   sig.quad_form(res.squaredNorm(), st_res));
  };

  EmTrace trace;
  auto sig = std::make_unique<LowRankSigma>(delta, st.sts, params);
  {
    const Eigen::VectorXd res = y - dm.T * params.alpha;
    const Eigen::VectorXd st_res = dm.S.transpose() * res;
    EmIteration it0;
    it0.iter = 0;
    it0.params = params;
    it0.log_likelihood = marginal_ll(*sig, res, st_res);
    trace.iterations.push_back(std::move(it0));
  }

  int stable = 0;
  int iters_done = 0;
  bool converged = false;
  for (int l = 1; l <= cfg.max_iter; ++l) {
    // E-step at the current parameters.
    const Eigen::VectorXd res = y - dm.T * params.alpha;
    const Eigen::VectorXd st_res = dm.S.transpose() * res;
    const PosteriorEta eta = detail::posterior_eta(*sig, st_res);

    // M-step sweep; each update conditions on the ones before it.
    Eigen::VectorXd adj = y;
    adj.noalias() -= dm.S * eta.mean;
    const Eigen::VectorXd alpha_next = st.solve_trend(dm.T.transpose() * adj);

    Eigen::VectorXd res_next = adj - dm.T * alpha_next;
    const double tr_cov = (st.sts.array() * eta.cov.array()).sum();
    const double sigma2_next =
        detail::floor_sigma2((res_next.squaredNorm() + tr_cov) / n);

    const double tr_kinv_v =
        sig->ktilde_llt().solve(eta.second_moment).trace();
    const double beta_next =
        detail::clamp_beta(static_cast<double>(dm.r()) / tr_kinv_v);

    const detail::PhiStep phi_step = detail::update_phi_impl(
        y, dm, st, delta, sig->ktilde(), sig->ktilde_llt(), params, eta,
        alpha_next, sigma2_next, beta_next, cfg);

    ModelParams next;
    next.alpha = alpha_next;
    next.sigma2 = sigma2_next;
    next.beta = beta_next;
    next.phi = phi_step.phi;

    auto sig_next = std::make_unique<LowRankSigma>(delta, st.sts, next);
    const Eigen::VectorXd res1 = y - dm.T * next.alpha;
    const Eigen::VectorXd st_res1 = dm.S.transpose() * res1;

    EmIteration rec;
    rec.iter = l;
    rec.params = next;
    rec.log_likelihood = marginal_ll(*sig_next, res1, st_res1);
    const std::optional<double> q_next =
        detail::q_given_eta(next, eta, y, dm, st, sig_next->ktilde_llt(),
                            sig_next->log_det_ktilde());
    rec.q_value = q_next ? *q_next : std::numeric_limits<double>::quiet_NaN();
    rec.newton_step = phi_step.step;
    rec.delta_norm = (next.as_vector() - params.as_vector()).norm();
    trace.iterations.push_back(rec);

    params = next;
    sig = std::move(sig_next);
    iters_done = l;

    if (rec.delta_norm < cfg.tol) {
      if (++stable >= cfg.patience) {
        converged = true;
        break;
      }
    } else {
      stable = 0;
    }
  }
  trace.converged = converged;

  const Eigen::VectorXd res = y - dm.T * params.alpha;
  const PosteriorEta eta_final =
      detail::posterior_eta(*sig, dm.S.transpose() * res);

  FittedModel model;
  model.trend = spec;
  model.basis = basis;
  model.params = params;
  model.eta_mean = eta_final.mean;
  model.eta_cov = eta_final.cov;
  model.converged = converged;
  model.iterations = iters_done;
  model.data_bbox = bounding_box(measurement_locations(obs));
  return {std::move(model), std::move(trace)};
}

}  // namespace frk

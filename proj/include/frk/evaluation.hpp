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

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "frk/em.hpp"
#include "frk/error.hpp"
#include "frk/predict.hpp"
#include "frk/types.hpp"

namespace frk {

inline double rmse(const std::vector<double>& pred,
                   const std::vector<double>& truth) {
  if (pred.size() != truth.size() || pred.empty()) {
    throw InvalidParameter("RMSE needs two equal-length non-empty vectors");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double e = pred[i] - truth[i];
    acc += e * e;
  }
  return std::sqrt(acc / static_cast<double>(pred.size()));
}

/// Uniform random k-fold split: a seeded shuffle of 0..n-1 chopped into k
/// contiguous blocks. Folds partition the index set; sizes differ by at
/// most one. k = n gives leave-one-out.
struct Fold {
  std::vector<Eigen::Index> train{};
  std::vector<Eigen::Index> test{};
};

inline std::vector<Fold> kfold_split(Eigen::Index n, int k,
                                     std::uint64_t seed) {
  if (k < 2) {
    throw InvalidParameter("k-fold cross-validation needs k >= 2");
  }
  if (n < k) {
    throw InvalidParameter("cannot split fewer observations than folds");
  }
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);

  std::vector<Fold> folds(static_cast<std::size_t>(k));
  for (int f = 0; f < k; ++f) {
    const std::size_t lo = static_cast<std::size_t>(
        (static_cast<long long>(n) * f) / k);
    const std::size_t hi = static_cast<std::size_t>(
        (static_cast<long long>(n) * (f + 1)) / k);
    Fold& fold = folds[static_cast<std::size_t>(f)];
    fold.test.assign(idx.begin() + static_cast<std::ptrdiff_t>(lo),
                     idx.begin() + static_cast<std::ptrdiff_t>(hi));
    fold.train.reserve(static_cast<std::size_t>(n) - (hi - lo));
    fold.train.insert(fold.train.end(), idx.begin(),
                      idx.begin() + static_cast<std::ptrdiff_t>(lo));
    fold.train.insert(fold.train.end(),
                      idx.begin() + static_cast<std::ptrdiff_t>(hi), idx.end());
  }
  return folds;
}

/// Log-distance baseline: OLS of the values on (1, -10 log10 dist), noise
/// variance = mean squared residual. The classical shadowing fit the
/// low-rank model is compared against.
struct LognormalFit {
  double p_t{0.0};
  double kappa{0.0};
  double sigma2{0.0};
};

inline LognormalFit fit_lognormal_baseline(const std::vector<Measurement>& obs,
                                           const TrendSpec& trend) {
  if (obs.size() < 3) {
    throw InvalidParameter("baseline fit needs at least 3 observations");
  }
  TrendSpec plain = trend;
  plain.gain_model.reset();  // baseline is always the two-column trend
  const Eigen::Index n = static_cast<Eigen::Index>(obs.size());
  Eigen::MatrixXd t(n, 2);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    t.row(i) = trend_vector(obs[static_cast<std::size_t>(i)].loc, plain)
                   .transpose();
    y(i) = obs[static_cast<std::size_t>(i)].value;
  }
  const Eigen::MatrixXd ttt = t.transpose() * t;
  if (!(trend_gram_condition(ttt) < kDesignConditionLimit)) {
    throw DegenerateDesign(
        "baseline design is rank deficient (all observations equidistant?)");
  }
  const Eigen::VectorXd a = ttt.ldlt().solve(t.transpose() * y);
  LognormalFit fit;
  fit.p_t = a(0);
  fit.kappa = a(1);
  fit.sigma2 = (y - t * a).squaredNorm() / static_cast<double>(n);
  return fit;
}

inline double predict_lognormal(const Location& loc, const TrendSpec& trend,
                                const LognormalFit& fit) {
  TrendSpec plain = trend;
  plain.gain_model.reset();
  const Eigen::VectorXd t = trend_vector(loc, plain);
  return fit.p_t * t(0) + fit.kappa * t(1);
}

/// Which predictor a cross-validation run evaluates.
struct CvMethod {
  enum class Kind { lognormal, frk };
  Kind kind{Kind::lognormal};
  double tau{0.0};   // frk only
  EmConfig em{};     // frk only
};

struct FoldResult {
  int fold{0};
  bool failed{false};
  std::string error{};
  double rmse{std::numeric_limits<double>::quiet_NaN()};
  long n_train{0};
  long n_test{0};
  double fit_seconds{0.0};
  /// Fitted scalars, format-agnostic (keys depend on the method).
  std::map<std::string, double> fitted{};
};

struct CvReport {
  std::string method{};
  int k{0};
  std::uint64_t seed{0};
  std::vector<FoldResult> folds{};
  /// Mean/std of the RMSE over the folds that succeeded (NaN when none).
  double mean_rmse{std::numeric_limits<double>::quiet_NaN()};
  double std_rmse{std::numeric_limits<double>::quiet_NaN()};
};

namespace detail {

inline void summarize_cv(CvReport& rep) {
  std::vector<double> ok;
  for (const FoldResult& f : rep.folds) {
    if (!f.failed) {
      ok.push_back(f.rmse);
    }
  }
  if (ok.empty()) {
    rep.mean_rmse = std::numeric_limits<double>::quiet_NaN();
    rep.std_rmse = std::numeric_limits<double>::quiet_NaN();
    return;
  }
  const double mean =
      std::accumulate(ok.begin(), ok.end(), 0.0) / static_cast<double>(ok.size());
  double var = 0.0;
  for (const double v : ok) {
    var += (v - mean) * (v - mean);
  }
  rep.mean_rmse = mean;
  rep.std_rmse =
      ok.size() > 1 ? std::sqrt(var / static_cast<double>(ok.size() - 1)) : 0.0;
}

}  // namespace detail

/// k-fold cross-validated prediction error. The low-rank method builds its
/// basis over the bounding box of the *full* data set (so every fold sees
/// the same candidate grid) pruned against the training fold. Folds whose
/// fit fails are reported with the error message and excluded from the
/// mean/std.
inline CvReport cross_validate(const std::vector<Measurement>& obs,
                               const TrendSpec& trend, const CvMethod& method,
                               int k, std::uint64_t seed) {
  const Eigen::Index n = static_cast<Eigen::Index>(obs.size());
  const std::vector<Fold> folds = kfold_split(n, k, seed);
  CvReport rep;
  rep.method = method.kind == CvMethod::Kind::frk ? "frk" : "lognormal";
  rep.k = k;
  rep.seed = seed;

  const BoundingBox area = bounding_box(measurement_locations(obs));

  for (int f = 0; f < k; ++f) {
    const Fold& fold = folds[static_cast<std::size_t>(f)];
    FoldResult res;
    res.fold = f;
    res.n_train = static_cast<long>(fold.train.size());
    res.n_test = static_cast<long>(fold.test.size());
    std::vector<Measurement> train;
    train.reserve(fold.train.size());
    for (const Eigen::Index i : fold.train) {
      train.push_back(obs[static_cast<std::size_t>(i)]);
    }
    const auto t0 = std::chrono::steady_clock::now();
    try {
      std::vector<double> pred;
      std::vector<double> truth;
      pred.reserve(fold.test.size());
      truth.reserve(fold.test.size());
      if (method.kind == CvMethod::Kind::lognormal) {
        const LognormalFit fit = fit_lognormal_baseline(train, trend);
        for (const Eigen::Index i : fold.test) {
          const Measurement& m = obs[static_cast<std::size_t>(i)];
          pred.push_back(predict_lognormal(m.loc, trend, fit));
          truth.push_back(m.value);
        }
        res.fitted = {{"p_t", fit.p_t},
                      {"kappa", fit.kappa},
                      {"sigma2", fit.sigma2}};
      } else {
        if (!(method.tau > 0.0)) {
          throw InvalidParameter("frk cross-validation needs tau > 0");
        }
        const BasisSet basis = build_basis_set(
            area, method.tau, measurement_locations(train));
        const EmFit fit = fit_em(train, basis, trend, method.em);
        for (const Eigen::Index i : fold.test) {
          const Measurement& m = obs[static_cast<std::size_t>(i)];
          pred.push_back(predict_mean(m.loc, fit.model));
          truth.push_back(m.value);
        }
        res.fitted = {{"p_t", fit.model.params.alpha(0)},
                      {"kappa", fit.model.params.alpha(1)},
                      {"sigma2", fit.model.params.sigma2},
                      {"inv_beta", 1.0 / fit.model.params.beta},
                      {"phi", fit.model.params.phi},
                      {"r", static_cast<double>(basis.rank())},
                      {"converged", fit.model.converged ? 1.0 : 0.0}};
        if (trend.gain_model) {
          res.fitted["varsigma"] = fit.model.params.alpha(2);
        }
      }
      res.rmse = rmse(pred, truth);
    } catch (const std::exception& e) {
      res.failed = true;
      res.error = e.what();
    }
    res.fit_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    rep.folds.push_back(std::move(res));
  }
  detail::summarize_cv(rep);
  return rep;
}

}  // namespace frk

#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>

#include "disentangle/estimate.hpp"
#include "disentangle/model.hpp"

namespace disentangle {

/// A disentangled interventional query: intervened treatments carry do()
/// values, the rest carry observed values; together they cover all K
/// treatments.
struct Query {
    Eigen::VectorXd c;
    std::map<int, double> intervened;
    std::map<int, double> observed;
};

/// E[Y | C=c; do(X_int); X_obs] = f_Y(c, x) + E[U_Y | u_obs], with the
/// correction from Gaussian conditioning on the observed treatments' noise.
/// An empty observed set means the correction is exactly zero.
double predict_outcome(const ThetaSet& theta, const CovMatrix& sigma, int covariate_dim, const Query& q);
double predict_outcome(const FitReport& fit, const Query& q);

/// E[Y | do(X_i = x_i), C=c] by Monte-Carlo marginalization of the other
/// treatments over their observational law given c.
double cate(const ThetaSet& theta, const CovMatrix& sigma, int covariate_dim, const Eigen::VectorXd& c,
            int i, double x_i, long n_mc, std::uint64_t seed);
double cate(const FitReport& fit, const Eigen::VectorXd& c, int i, double x_i, long n_mc,
            std::uint64_t seed);

/// Estimator for the two-treatment chain, fitted from a purely observational
/// regime plus a regime intervening on both treatments.
struct AsymmetricFit {
    StructuralEq cause_eq;    // f_i over C
    StructuralEq outcome_eq;  // f_Y over (C, X_i, X_j)
    double sigma_ii = 0.0;
    double sigma_yi = 0.0;
    int covariate_dim = 0;
};

AsymmetricFit fit_asymmetric(const Dataset& obs, const Dataset& joint);

/// E[Y | X_i = x_i, do(X_j = x_j), C=c]
///   = f_Y(c, x_i, x_j) + (sigma_Yi / sigma_ii) (x_i - f_i(c)).
double predict_asymmetric(const AsymmetricFit& est, const Eigen::VectorXd& c, double x_i, double x_j);

}  // namespace disentangle

#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "disentangle/gaussian.hpp"
#include "disentangle/model.hpp"

namespace disentangle {

struct FitOptions {
    double learning_rate = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    int max_outer = 50;
    int max_inner = 5000;
    double tol = 1e-6;             // absolute log-likelihood change across outer iterations
    double variance_floor = 1e-6;  // sigma_vv clamp inside the likelihood
    std::uint64_t seed = 0;        // reserved; the fit path is deterministic

    void validate() const;
};

/// Structural coefficients for all K+1 equations (treatments, then outcome).
struct ThetaSet {
    std::vector<Eigen::VectorXd> treatments;
    Eigen::VectorXd outcome;

    static ThetaSet zeros(int K, int covariate_dim);
};

/// Pooled multi-regime log-likelihood: per record, one univariate Gaussian
/// term per non-intervened treatment plus the outcome term, each with the
/// marginal variance sigma_vv (floored). Cross-correlations enter only
/// through the sigma step and inference-time conditioning.
double log_likelihood(const Dataset& data, const ThetaSet& theta, const CovMatrix& sigma,
                      double variance_floor = 1e-6);

/// Analytic gradient of log_likelihood in theta.
ThetaSet log_likelihood_grad(const Dataset& data, const ThetaSet& theta, const CovMatrix& sigma,
                             double variance_floor = 1e-6);

struct ThetaFitResult {
    ThetaSet theta;
    std::vector<bool> fitted;  // per equation; false = no contributing records, left at init
};

/// Maximize the pooled log-likelihood over theta with sigma frozen, by Adam
/// on the analytic gradient. Each equation is a weighted least-squares
/// problem, optimized independently; warm starts from `init` when given.
ThetaFitResult fit_theta(const Dataset& data, const CovMatrix& sigma, const FitOptions& opts,
                         const ThetaSet* init = nullptr);

/// Per-equation ordinary least squares (ridge 1e-8) on the records where the
/// equation's variable is not intervened; the outcome uses all records.
/// Independent of the iterative path — serves as its oracle.
ThetaSet closed_form_theta(const Dataset& data);

/// Residual table from theta-hat (cells masked where intervened), then
/// pairwise-complete covariance.
CovMatrix fit_sigma(const Dataset& data, const ThetaSet& theta);

struct FitReport {
    ThetaSet theta;
    CovMatrix sigma;
    std::vector<double> ll_trace;  // one entry per outer iteration, non-decreasing
    bool converged = false;
    int iterations = 0;

    FitReport() : sigma(CovMatrix::identity(1)) {}
    int K() const { return static_cast<int>(theta.treatments.size()); }
    int covariate_dim() const;
};

/// Alternating maximization: theta with sigma fixed, then closed-form sigma
/// from residuals, until the log-likelihood change drops below tolerance.
FitReport fit(const Dataset& data, const FitOptions& opts = {});

/// Pooled regression of the outcome on (C, X) across all regimes, ignoring
/// intervention flags and noise correlation.
Eigen::VectorXd fit_baseline(const Dataset& data);

}  // namespace disentangle

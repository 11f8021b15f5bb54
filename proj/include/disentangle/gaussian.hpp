#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "disentangle/errors.hpp"
#include "disentangle/rng.hpp"

namespace disentangle {

/// Symmetric positive semi-definite matrix (variances on the diagonal).
/// Exact zero eigenvalues are permitted: degenerate confounding is a
/// first-class citizen here.
class CovMatrix {
public:
    explicit CovMatrix(Eigen::MatrixXd m);

    static CovMatrix identity(int dim);
    static CovMatrix zero(int dim);

    int dim() const { return static_cast<int>(m_.rows()); }
    const Eigen::MatrixXd& mat() const { return m_; }
    double operator()(int i, int j) const { return m_(i, j); }

    /// Principal submatrix over the given index set.
    Eigen::MatrixXd principal(const std::vector<int>& idx) const;

private:
    Eigen::MatrixXd m_;
};

/// Per-sample noise residuals with a presence mask. A cell is absent where
/// the variable was intervened on in that record's regime; the outcome
/// column (last slot) is never absent.
class ResidualTable {
public:
    ResidualTable(Eigen::MatrixXd values, Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic> present);

    long rows() const { return values_.rows(); }
    int slots() const { return static_cast<int>(values_.cols()); }
    const Eigen::MatrixXd& values() const { return values_; }
    bool present(long r, int c) const { return present_(r, c) != 0; }

private:
    Eigen::MatrixXd values_;
    Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic> present_;
};

/// Clamp negative eigenvalues at zero. Leaves already-PSD input untouched.
Eigen::MatrixXd project_psd(const Eigen::MatrixXd& sym);

/// n i.i.d. rows from N(0, sigma). Rank-deficient sigma goes through a
/// spectral factorization with negative eigenvalues clamped at zero, so an
/// all-ones sigma yields perfectly correlated coordinates.
Eigen::MatrixXd sample_mvn(const CovMatrix& sigma, long n, CounterRng& rng);
Eigen::MatrixXd sample_mvn(const CovMatrix& sigma, long n, std::uint64_t seed);

/// E[U_target | U_given = u] = Sigma_{t,g} Sigma_{g,g}^{-1} u for the
/// zero-mean Gaussian. The given-submatrix gets ridge 1e-9*mu*I (mu = mean
/// diagonal) before solving so degenerate confounding conditions cleanly.
double cond_expectation(const CovMatrix& sigma, int target, const std::vector<int>& given,
                        const Eigen::VectorXd& u);

/// Solve weights w = Sigma_{g,g}^{-1} Sigma_{g,target}; the conditional mean
/// is then w.dot(u). Split out so per-query loops can hoist the solve.
Eigen::VectorXd cond_weights(const CovMatrix& sigma, int target, const std::vector<int>& given);

/// Pairwise-complete zero-mean covariance of the residual table, projected
/// onto the PSD cone. Entry (i,j) averages products over the rows where both
/// cells are present; a pair with fewer than two joint rows is an error.
CovMatrix mle_cov(const ResidualTable& residuals);

struct ShrinkResult {
    CovMatrix cov;
    double lambda;  // 0 when the input was already PSD
};

/// Shrink toward mu*I (mu = mean diagonal) with the smallest lambda in [0,1]
/// that lifts the minimum eigenvalue to at least 1e-8.
ShrinkResult psd_shrink(const Eigen::MatrixXd& raw);

}  // namespace disentangle

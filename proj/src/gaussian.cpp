#include "disentangle/gaussian.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace disentangle {

namespace {

constexpr double kSymTol = 1e-12;
constexpr double kEigTol = 1e-10;
constexpr double kShrinkTargetEig = 1e-8;
constexpr double kCondRidge = 1e-9;

std::string index_list(const std::vector<int>& idx) {
    std::ostringstream os;
    os << "{";
    for (std::size_t i = 0; i < idx.size(); ++i) os << (i ? "," : "") << idx[i];
    os << "}";
    return os.str();
}

}  // namespace

CovMatrix::CovMatrix(Eigen::MatrixXd m) : m_(std::move(m)) {
    if (m_.rows() == 0 || m_.rows() != m_.cols())
        throw InvalidCovarianceError("covariance must be square and non-empty");
    if (!m_.allFinite()) throw InvalidCovarianceError("covariance has non-finite entries");
    const double scale = std::max(1.0, m_.cwiseAbs().maxCoeff());
    const double asym = (m_ - m_.transpose()).cwiseAbs().maxCoeff();
    if (asym > kSymTol * scale)
        throw InvalidCovarianceError("covariance not symmetric (max asymmetry " + std::to_string(asym) + ")");
    m_ = ((m_ + m_.transpose()) / 2.0).eval();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m_, Eigen::EigenvaluesOnly);
    if (es.eigenvalues().minCoeff() < -kEigTol)
        throw InvalidCovarianceError("covariance indefinite (min eigenvalue " +
                                     std::to_string(es.eigenvalues().minCoeff()) + ")");
}

CovMatrix CovMatrix::identity(int dim) { return CovMatrix(Eigen::MatrixXd::Identity(dim, dim)); }

CovMatrix CovMatrix::zero(int dim) { return CovMatrix(Eigen::MatrixXd::Zero(dim, dim)); }

Eigen::MatrixXd CovMatrix::principal(const std::vector<int>& idx) const {
    Eigen::MatrixXd s(idx.size(), idx.size());
    for (std::size_t a = 0; a < idx.size(); ++a)
        for (std::size_t b = 0; b < idx.size(); ++b) s(a, b) = m_(idx[a], idx[b]);
    return s;
}

ResidualTable::ResidualTable(Eigen::MatrixXd values,
                             Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic> present)
    : values_(std::move(values)), present_(std::move(present)) {
    if (values_.rows() != present_.rows() || values_.cols() != present_.cols())
        throw Error("residual table and mask shapes differ");
    if (values_.cols() < 1) throw Error("residual table needs at least one slot");
    const int y = slots() - 1;
    for (long r = 0; r < rows(); ++r) {
        if (!present_(r, y)) throw Error("outcome residual masked at row " + std::to_string(r));
        for (int c = 0; c < slots(); ++c)
            if (present_(r, c) && !std::isfinite(values_(r, c)))
                throw InvalidDataError("non-finite residual at row " + std::to_string(r), r);
    }
}

Eigen::MatrixXd project_psd(const Eigen::MatrixXd& sym) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
    if (es.eigenvalues().minCoeff() >= 0.0) return sym;
    Eigen::VectorXd clamped = es.eigenvalues().cwiseMax(0.0);
    Eigen::MatrixXd out = es.eigenvectors() * clamped.asDiagonal() * es.eigenvectors().transpose();
    return ((out + out.transpose()) / 2.0).eval();
}

Eigen::MatrixXd sample_mvn(const CovMatrix& sigma, long n, CounterRng& rng) {
    const int d = sigma.dim();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sigma.mat());
    Eigen::VectorXd sqrt_eigs = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    // symmetric square root: basis-free, hence continuous in sigma, so draws
    // with a shared seed move smoothly under small covariance changes
    Eigen::MatrixXd factor =
        es.eigenvectors() * sqrt_eigs.asDiagonal() * es.eigenvectors().transpose();  // x = factor * z
    Eigen::MatrixXd out(n, d);
    Eigen::VectorXd z(d);
    for (long i = 0; i < n; ++i) {
        for (int j = 0; j < d; ++j) z(j) = rng.next_normal();
        out.row(i) = (factor * z).transpose();
    }
    return out;
}

Eigen::MatrixXd sample_mvn(const CovMatrix& sigma, long n, std::uint64_t seed) {
    CounterRng rng(seed, 0);
    return sample_mvn(sigma, n, rng);
}

Eigen::VectorXd cond_weights(const CovMatrix& sigma, int target, const std::vector<int>& given) {
    if (given.empty()) throw Error("cond_expectation: empty conditioning set");
    Eigen::MatrixXd s_gg = sigma.principal(given);
    Eigen::VectorXd s_gt(given.size());
    for (std::size_t a = 0; a < given.size(); ++a) s_gt(a) = sigma(given[a], target);

    const double mu = s_gg.diagonal().mean();
    if (mu <= 0.0)
        throw SingularConditioningError("conditioning submatrix has no variance for " + index_list(given), given);
    s_gg.diagonal().array() += kCondRidge * mu;

    Eigen::LDLT<Eigen::MatrixXd> ldlt(s_gg);
    Eigen::VectorXd w = ldlt.solve(s_gt);
    if (ldlt.info() != Eigen::Success || !w.allFinite() ||
        (s_gg * w - s_gt).cwiseAbs().maxCoeff() > 1e-6 * std::max(1.0, s_gt.cwiseAbs().maxCoeff()))
        throw SingularConditioningError("conditioning submatrix singular for " + index_list(given), given);
    return w;
}

double cond_expectation(const CovMatrix& sigma, int target, const std::vector<int>& given,
                        const Eigen::VectorXd& u) {
    if (static_cast<long>(given.size()) != u.size())
        throw Error("cond_expectation: residual vector length does not match conditioning set");
    if (!u.allFinite()) throw Error("cond_expectation: non-finite residual vector");
    return cond_weights(sigma, target, given).dot(u);
}

CovMatrix mle_cov(const ResidualTable& residuals) {
    const int d = residuals.slots();
    const long n = residuals.rows();
    Eigen::MatrixXd cov(d, d);
    for (int i = 0; i < d; ++i) {
        for (int j = i; j < d; ++j) {
            double sum = 0.0;
            long count = 0;
            for (long r = 0; r < n; ++r) {
                if (residuals.present(r, i) && residuals.present(r, j)) {
                    sum += residuals.values()(r, i) * residuals.values()(r, j);
                    ++count;
                }
            }
            if (count < 2)
                throw InsufficientOverlapError("columns (" + std::to_string(i) + "," + std::to_string(j) +
                                                   ") jointly observed in " + std::to_string(count) +
                                                   " rows (need >= 2)",
                                               i, j);
            cov(i, j) = cov(j, i) = sum / static_cast<double>(count);
        }
    }
    return CovMatrix(project_psd(cov));
}

ShrinkResult psd_shrink(const Eigen::MatrixXd& raw) {
    if (raw.rows() != raw.cols() || raw.rows() == 0)
        throw InvalidCovarianceError("psd_shrink: input must be square and non-empty");
    if (!raw.allFinite()) throw InvalidCovarianceError("psd_shrink: non-finite input");
    const double scale = std::max(1.0, raw.cwiseAbs().maxCoeff());
    if ((raw - raw.transpose()).cwiseAbs().maxCoeff() > kSymTol * scale)
        throw InvalidCovarianceError("psd_shrink: input not symmetric");

    auto min_eig = [](const Eigen::MatrixXd& m) {
        return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(m, Eigen::EigenvaluesOnly).eigenvalues().minCoeff();
    };
    if (min_eig(raw) >= 0.0) return {CovMatrix(raw), 0.0};

    const double mu = raw.diagonal().mean();
    if (mu < kShrinkTargetEig)
        throw UnshrinkableError("psd_shrink: mean diagonal " + std::to_string(mu) +
                                " cannot reach min eigenvalue 1e-8 for any lambda in [0,1]");
    const Eigen::MatrixXd mu_eye = mu * Eigen::MatrixXd::Identity(raw.rows(), raw.cols());
    auto blend = [&](double lam) { return ((1.0 - lam) * raw + lam * mu_eye).eval(); };

    double lo = 0.0, hi = 1.0;
    while (hi - lo > 1e-9) {
        const double mid = 0.5 * (lo + hi);
        (min_eig(blend(mid)) >= kShrinkTargetEig ? hi : lo) = mid;
    }
    return {CovMatrix(blend(hi)), hi};
}

}  // namespace disentangle

#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "disentangle/gaussian.hpp"

using namespace disentangle;

namespace {

// Random PSD matrix via A A^T / d + small diagonal.
Eigen::MatrixXd random_psd(int d, CounterRng& rng, double diag_boost = 0.05) {
    Eigen::MatrixXd a(d, d);
    for (int i = 0; i < d; ++i)
        for (int j = 0; j < d; ++j) a(i, j) = rng.next_normal();
    Eigen::MatrixXd s = a * a.transpose() / static_cast<double>(d);
    s.diagonal().array() += diag_boost;
    return s;
}

double min_eig(const Eigen::MatrixXd& m) {
    return Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(m, Eigen::EigenvaluesOnly).eigenvalues().minCoeff();
}

}  // namespace

TEST_CASE("covmatrix invariants") {
    CHECK_THROWS_AS(CovMatrix((Eigen::MatrixXd(2, 2) << 1, 0.5, 0.4, 1).finished()), InvalidCovarianceError);
    CHECK_THROWS_AS(CovMatrix((Eigen::MatrixXd(2, 2) << 1, 2, 2, 1).finished()), InvalidCovarianceError);
    // exact zero eigenvalues are fine (degenerate confounding)
    CHECK_NOTHROW(CovMatrix(Eigen::MatrixXd::Ones(3, 3)));
    CHECK_NOTHROW(CovMatrix::zero(4));
}

TEST_CASE("sample_mvn: zero covariance is a point mass") {
    auto draws = sample_mvn(CovMatrix::zero(3), 5, 7);
    CHECK(draws.rows() == 5);
    CHECK(draws.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("sample_mvn: all-ones covariance gives perfectly correlated coordinates") {
    const long n = 20000;
    auto draws = sample_mvn(CovMatrix(Eigen::MatrixXd::Ones(3, 3)), n, 11);
    // coordinates are equal almost surely under the common-factor law
    CHECK((draws.col(0) - draws.col(1)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((draws.col(0) - draws.col(2)).cwiseAbs().maxCoeff() < 1e-12);
    for (int a = 0; a < 3; ++a)
        for (int b = a + 1; b < 3; ++b) {
            const double corr = (draws.col(a).dot(draws.col(b)) / n) /
                                std::sqrt((draws.col(a).squaredNorm() / n) * (draws.col(b).squaredNorm() / n));
            CHECK(corr == doctest::Approx(1.0).epsilon(3.0 / std::sqrt(static_cast<double>(n))));
        }
}

TEST_CASE("sample_mvn: variance recovery at n=1e5") {
    const long n = 100000;
    auto draws = sample_mvn(CovMatrix((Eigen::MatrixXd(1, 1) << 4.0).finished()), n, 3);
    const double var = draws.col(0).squaredNorm() / static_cast<double>(n);
    CHECK(var > 3.9);
    CHECK(var < 4.1);
}

TEST_CASE("sample_mvn: empirical covariance converges for a 5x5 sigma") {
    CounterRng rng(99, 0);
    Eigen::MatrixXd s = random_psd(5, rng);
    s /= s.cwiseAbs().maxCoeff();  // entries <= 1
    const long n = 100000;
    auto draws = sample_mvn(CovMatrix(s), n, 17);
    Eigen::MatrixXd emp = draws.transpose() * draws / static_cast<double>(n);
    CHECK((emp - s).cwiseAbs().maxCoeff() <= 5.0 * std::sqrt(1.0 / n) * 10.0);
}

TEST_CASE("sample_mvn: deterministic in the seed") {
    const CovMatrix s(Eigen::MatrixXd::Identity(2, 2));
    auto a = sample_mvn(s, 50, 123);
    auto b = sample_mvn(s, 50, 123);
    CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);
    auto c = sample_mvn(s, 50, 124);
    CHECK((a - c).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("cond_expectation: independent noise contributes nothing") {
    Eigen::VectorXd u(2);
    u << 1.5, -0.3;
    CHECK(cond_expectation(CovMatrix::identity(3), 2, {0, 1}, u) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("cond_expectation: scalar case is sigma_Y1/sigma_11 * u") {
    Eigen::MatrixXd s(2, 2);
    s << 1.0, 0.5, 0.5, 1.0;
    Eigen::VectorXd u(1);
    u << 2.0;
    // target = noise slot 1 given slot 0: 0.5/1.0 * 2.0
    CHECK(cond_expectation(CovMatrix(s), 1, {0}, u) == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("cond_expectation: matches Monte-Carlo regression oracle at dim 3") {
    CounterRng rng(5, 0);
    const CovMatrix sigma(random_psd(3, rng, 0.2));
    const long n = 1000000;
    auto draws = sample_mvn(sigma, n, 21);

    // oracle: OLS of the target coordinate on the given ones (no intercept)
    Eigen::MatrixXd g = draws.leftCols(2);
    Eigen::VectorXd t = draws.col(2);
    Eigen::Vector2d beta = (g.transpose() * g).ldlt().solve(g.transpose() * t);

    Eigen::VectorXd u(2);
    u << 0.7, -1.1;
    const double expected = beta.dot(u);
    CHECK(std::abs(cond_expectation(sigma, 2, {0, 1}, u) - expected) < 0.01);
}

TEST_CASE("cond_expectation: linear in u") {
    CounterRng rng(31, 0);
    const CovMatrix sigma(random_psd(4, rng, 0.1));
    Eigen::VectorXd u(3), v(3);
    for (int i = 0; i < 3; ++i) {
        u(i) = rng.next_normal();
        v(i) = rng.next_normal();
    }
    const double alpha = 0.37, beta = -2.2;
    const double lhs = cond_expectation(sigma, 3, {0, 1, 2}, alpha * u + beta * v);
    const double rhs = alpha * cond_expectation(sigma, 3, {0, 1, 2}, u) +
                       beta * cond_expectation(sigma, 3, {0, 1, 2}, v);
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-10));
}

TEST_CASE("cond_expectation: degenerate conditioning works through the ridge") {
    // all-ones sigma: conditioning on two perfectly correlated slots
    const CovMatrix sigma(Eigen::MatrixXd::Ones(3, 3));
    Eigen::VectorXd u(2);
    u << 0.8, 0.8;  // consistent with the degenerate law
    CHECK(cond_expectation(sigma, 2, {0, 1}, u) == doctest::Approx(0.8).epsilon(1e-6));
}

TEST_CASE("cond_expectation: zero-variance conditioning set is singular") {
    Eigen::MatrixXd s = Eigen::MatrixXd::Zero(3, 3);
    s(2, 2) = 1.0;
    Eigen::VectorXd u(1);
    u << 0.0;
    CHECK_THROWS_AS(cond_expectation(CovMatrix(s), 2, {0}, u), SingularConditioningError);
    try {
        cond_expectation(CovMatrix(s), 2, {0}, u);
    } catch (const SingularConditioningError& e) {
        CHECK(e.indices == std::vector<int>{0});
    }
}

TEST_CASE("mle_cov: zero residuals give the zero matrix") {
    Eigen::MatrixXd values = Eigen::MatrixXd::Zero(10, 3);
    Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic> present =
        Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>::Ones(10, 3);
    CHECK(mle_cov(ResidualTable(values, present)).mat().cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("mle_cov: consistency against the generator at n=1e5") {
    CounterRng rng(77, 0);
    const CovMatrix sigma(random_psd(3, rng, 0.2));
    const long n = 100000;
    Eigen::MatrixXd draws = sample_mvn(sigma, n, 41);
    Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic> present =
        Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>::Ones(n, 3);
    auto est = mle_cov(ResidualTable(draws, present));
    CHECK((est.mat() - sigma.mat()).cwiseAbs().maxCoeff() <= 0.02);
}

TEST_CASE("mle_cov: fully observed table equals projected (1/n) R^T R exactly") {
    CounterRng rng(13, 0);
    const long n = 257;
    Eigen::MatrixXd r(n, 4);
    for (long i = 0; i < n; ++i)
        for (int j = 0; j < 4; ++j) r(i, j) = rng.next_normal();
    Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic> present =
        Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>::Ones(n, 4);
    auto est = mle_cov(ResidualTable(r, present));

    // independent accumulation in the same row order
    Eigen::MatrixXd naive = Eigen::MatrixXd::Zero(4, 4);
    for (int i = 0; i < 4; ++i)
        for (int j = i; j < 4; ++j) {
            double s = 0.0;
            for (long k = 0; k < n; ++k) s += r(k, i) * r(k, j);
            naive(i, j) = naive(j, i) = s / static_cast<double>(n);
        }
    naive = project_psd(naive);
    CHECK((est.mat() - naive).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("mle_cov: masked column uses only its unmasked rows") {
    CounterRng rng(15, 0);
    const long n = 2000;
    Eigen::MatrixXd r(n, 3);
    for (long i = 0; i < n; ++i)
        for (int j = 0; j < 3; ++j) r(i, j) = rng.next_normal();
    Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic> present =
        Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>::Ones(n, 3);
    for (long i = 0; i < n / 2; ++i) present(i, 1) = 0;  // mask column 1 on the first half

    auto est = mle_cov(ResidualTable(r, present));

    // entries not involving column 1 equal the full computation over all rows
    double s00 = 0.0, s02 = 0.0, s22 = 0.0;
    for (long k = 0; k < n; ++k) {
        s00 += r(k, 0) * r(k, 0);
        s02 += r(k, 0) * r(k, 2);
        s22 += r(k, 2) * r(k, 2);
    }
    CHECK(est(0, 0) == doctest::Approx(s00 / n).epsilon(1e-12));
    CHECK(est(0, 2) == doctest::Approx(s02 / n).epsilon(1e-12));
    CHECK(est(2, 2) == doctest::Approx(s22 / n).epsilon(1e-12));

    // entries involving column 1 average over the unmasked half only
    double s11 = 0.0;
    for (long k = n / 2; k < n; ++k) s11 += r(k, 1) * r(k, 1);
    CHECK(est(1, 1) == doctest::Approx(s11 / (n - n / 2)).epsilon(1e-12));
}

TEST_CASE("mle_cov: a pair without overlap names itself") {
    Eigen::MatrixXd values = Eigen::MatrixXd::Zero(4, 3);
    Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic> present(4, 3);
    present.setOnes();
    present.col(0).setZero();  // slot 0 intervened everywhere
    try {
        mle_cov(ResidualTable(values, present));
        FAIL("expected InsufficientOverlapError");
    } catch (const InsufficientOverlapError& e) {
        CHECK(e.col_a == 0);
    }
}

TEST_CASE("psd_shrink: PSD input returns unchanged with lambda 0") {
    auto res = psd_shrink(Eigen::MatrixXd::Identity(3, 3));
    CHECK(res.lambda == 0.0);
    CHECK((res.cov.mat() - Eigen::MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("psd_shrink: indefinite 2x2 hits lambda* = 1/2") {
    Eigen::MatrixXd raw(2, 2);
    raw << 1, 2, 2, 1;
    auto res = psd_shrink(raw);
    CHECK(res.lambda == doctest::Approx(0.5).epsilon(1e-6));
    const double me = min_eig(res.cov.mat());
    CHECK(me >= 0.0);
    CHECK(me <= 1e-6);
    CHECK(res.cov(0, 1) > 0.0);
    CHECK(res.cov(0, 1) < 2.0);
}

TEST_CASE("psd_shrink: uniform [-1,1] off-diagonals with unit diagonal") {
    CounterRng rng(8, 0);
    for (int rep = 0; rep < 20; ++rep) {
        Eigen::MatrixXd raw(5, 5);
        for (int i = 0; i < 5; ++i) {
            raw(i, i) = 1.0;
            for (int j = i + 1; j < 5; ++j) raw(i, j) = raw(j, i) = rng.next_uniform(-1.0, 1.0);
        }
        auto res = psd_shrink(raw);
        CHECK(min_eig(res.cov.mat()) >= 0.0);
        CHECK(res.lambda >= 0.0);
        CHECK(res.lambda <= 1.0);
    }
}

TEST_CASE("psd_shrink: idempotent") {
    CounterRng rng(9, 0);
    Eigen::MatrixXd raw(4, 4);
    for (int i = 0; i < 4; ++i) {
        raw(i, i) = 1.0;
        for (int j = i + 1; j < 4; ++j) raw(i, j) = raw(j, i) = rng.next_uniform(-1.0, 1.0);
    }
    auto once = psd_shrink(raw);
    auto twice = psd_shrink(once.cov.mat());
    CHECK(twice.lambda == 0.0);
    CHECK((twice.cov.mat() - once.cov.mat()).cwiseAbs().maxCoeff() <= 1e-9);
}

TEST_CASE("psd_shrink: unshrinkable when the mean diagonal cannot help") {
    Eigen::MatrixXd raw(2, 2);
    raw << -1, 2, 2, -1;
    CHECK_THROWS_AS(psd_shrink(raw), UnshrinkableError);
}

TEST_CASE("counter rng: streams are independent and reproducible") {
    CounterRng a(42, 1), b(42, 1), c(42, 2);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
    bool differs = false;
    CounterRng a2(42, 1);
    for (int i = 0; i < 100; ++i) differs |= (a2.next_u64() != c.next_u64());
    CHECK(differs);
}

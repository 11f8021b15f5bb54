#include <doctest.h>

#include <cmath>

#include "disentangle/infer.hpp"

using namespace disentangle;

namespace {

// Table-3 model M: X1 = U1, X2 = X1 + U2, Y = X1 X2 + U_Y, all-ones sigma.
AsymmetricPair table3_m() {
    Eigen::VectorXd t0 = Eigen::VectorXd::Zero(1);
    Eigen::VectorXd tj(2);
    tj << 0.0, 1.0;
    Eigen::VectorXd ty(4);
    ty << 0.0, 0.0, 0.0, 1.0;
    return AsymmetricPair(0, StructuralEq(PolyBasis{0}, t0), StructuralEq(PolyBasis{1}, tj),
                          StructuralEq(PolyBasis{2}, ty), CovMatrix(Eigen::MatrixXd::Ones(3, 3)),
                          StdNormalLaw{0});
}

FitReport make_fit(const ThetaSet& theta, const CovMatrix& sigma) {
    FitReport f;
    f.theta = theta;
    f.sigma = sigma;
    f.converged = true;
    f.iterations = 1;
    f.ll_trace = {0.0};
    return f;
}

ThetaSet theta_from_scm(const SymmetricAnm& scm) {
    ThetaSet t;
    for (const auto& eq : scm.treatment_eqs) t.treatments.push_back(eq.theta);
    t.outcome = scm.outcome_eq.theta;
    return t;
}

CategoricalLaw point_mass(const Eigen::VectorXd& c) {
    Eigen::MatrixXd support(1, c.size());
    support.row(0) = c.transpose();
    return CategoricalLaw{support, Eigen::VectorXd::Ones(1)};
}

}  // namespace

TEST_CASE("predict_outcome: all treatments intervened is the structural part exactly") {
    auto scm = random_scm(3, 2, {-1.5, 1.5}, {-0.8, 0.8}, 51);
    auto fit = make_fit(theta_from_scm(scm), scm.sigma);
    Query q;
    q.c = Eigen::Vector2d(0.4, -1.2);
    q.intervened = {{0, 1.0}, {1, -0.5}, {2, 2.0}};
    const Eigen::Vector3d x(1.0, -0.5, 2.0);
    CHECK(predict_outcome(fit, q) == true_mean(scm, q.c, x));
}

TEST_CASE("predict_outcome: diagonal sigma has zero correction") {
    auto scm = random_scm(2, 2, {-1, 1}, {0, 0}, 53);
    SymmetricAnm diag(2, 2, scm.treatment_eqs, scm.outcome_eq,
                      CovMatrix(Eigen::Vector3d(1.0, 0.5, 0.7).asDiagonal()), StdNormalLaw{2});
    auto fit = make_fit(theta_from_scm(diag), diag.sigma);
    Query q;
    q.c = Eigen::Vector2d(0.3, 0.9);
    q.intervened = {{0, 1.0}};
    q.observed = {{1, -2.0}};
    const Eigen::Vector2d x(1.0, -2.0);
    CHECK(std::abs(predict_outcome(fit, q) - true_mean(diag, q.c, x)) <= 1e-12);
}

TEST_CASE("predict_outcome: single observed treatment applies the scalar formula") {
    auto scm = random_scm(2, 1, {-1, 1}, {0, 0}, 57);
    Eigen::Matrix3d s;
    s << 1.0, 0.2, 0.6, 0.2, 0.8, 0.3, 0.6, 0.3, 1.2;
    SymmetricAnm conf(2, 1, scm.treatment_eqs, scm.outcome_eq, CovMatrix(s), StdNormalLaw{1});
    auto fit = make_fit(theta_from_scm(conf), conf.sigma);
    Query q;
    q.c = Eigen::VectorXd::Constant(1, 0.5);
    q.intervened = {{0, 1.4}};
    q.observed = {{1, 0.9}};
    const Eigen::Vector2d x(1.4, 0.9);
    const double u_obs = 0.9 - conf.treatment_eqs[1].eval(q.c);
    const double expected = true_mean(conf, q.c, x) + s(2, 1) / s(1, 1) * u_obs;
    CHECK(predict_outcome(fit, q) == doctest::Approx(expected).epsilon(1e-9));
}

TEST_CASE("predict_outcome: matches kernel-conditioned simulation from the true model") {
    // fixed covariates via a point-mass law; one treatment intervened, one observed
    auto base = random_scm(2, 2, {-1, 1}, {0, 0}, 61);
    Eigen::Matrix3d s;
    s << 1.0, 0.4, 0.5, 0.4, 0.9, 0.35, 0.5, 0.35, 1.1;
    Eigen::VectorXd c(2);
    c << 0.7, -0.4;
    SymmetricAnm scm(2, 2, base.treatment_eqs, base.outcome_eq, CovMatrix(s), point_mass(c));
    auto fit = make_fit(theta_from_scm(scm), scm.sigma);

    const double x0 = 1.1;
    const long n = 200000;
    Dataset draws = sample(scm, Regime::fixed({{0, x0}}), n, 71);

    // condition on X1 near its median draw
    const double x1_star = scm.treatment_eqs[1].eval(c) + 0.6;
    const double h = 0.05;
    double num = 0.0;
    long hits = 0;
    for (long r = 0; r < n; ++r) {
        if (std::abs(draws.treatments(r, 1) - x1_star) < h) {
            num += draws.outcome(r);
            ++hits;
        }
    }
    REQUIRE(hits > 1000);
    const double simulated = num / static_cast<double>(hits);

    Query q;
    q.c = c;
    q.intervened = {{0, x0}};
    q.observed = {{1, x1_star}};
    CHECK(std::abs(predict_outcome(fit, q) - simulated) <= 0.08);
}

TEST_CASE("predict_outcome: independent extra observed slot never moves the prediction") {
    auto scm = random_scm(3, 1, {-1, 1}, {0, 0}, 63);
    Eigen::MatrixXd s = Eigen::MatrixXd::Zero(4, 4);
    s(0, 0) = 1.0;
    s(3, 0) = s(0, 3) = 0.5;
    s(1, 1) = 0.7;  // slot 1 independent of everything
    s(2, 2) = 0.9;
    s(3, 3) = 1.3;
    s(2, 3) = s(3, 2) = 0.4;
    SymmetricAnm conf(3, 1, scm.treatment_eqs, scm.outcome_eq, CovMatrix(s), StdNormalLaw{1});
    auto fit = make_fit(theta_from_scm(conf), conf.sigma);

    // same x vector both times; treatment 1 flips from intervened to observed
    Query without;
    without.c = Eigen::VectorXd::Constant(1, -0.3);
    without.intervened = {{1, -2.4}, {2, 0.5}};
    without.observed = {{0, 1.7}};
    Query with_indep;
    with_indep.c = without.c;
    with_indep.intervened = {{2, 0.5}};
    with_indep.observed = {{0, 1.7}, {1, -2.4}};
    CHECK(std::abs(predict_outcome(fit, without) - predict_outcome(fit, with_indep)) <= 1e-10);
}

TEST_CASE("predict_outcome: correction ignores intervened values") {
    auto scm = random_scm(2, 1, {-1, 1}, {-0.6, 0.6}, 67);
    auto fit = make_fit(theta_from_scm(scm), scm.sigma);
    Eigen::VectorXd c = Eigen::VectorXd::Constant(1, 0.2);

    auto correction_at = [&](double do_value) {
        Query q;
        q.c = c;
        q.intervened = {{0, do_value}};
        q.observed = {{1, 1.5}};
        Query structural = q;
        structural.observed.clear();
        structural.intervened[1] = 1.5;
        return predict_outcome(fit, q) - predict_outcome(fit, structural);
    };
    CHECK(std::abs(correction_at(-3.0) - correction_at(4.5)) <= 1e-12);
}

TEST_CASE("cate: K=1 reduces to predict_outcome with empty observed set") {
    auto scm = random_scm(1, 2, {-1, 1}, {-0.5, 0.5}, 69);
    auto fit = make_fit(theta_from_scm(scm), scm.sigma);
    Query q;
    q.c = Eigen::Vector2d(0.1, 0.4);
    q.intervened = {{0, 0.8}};
    CHECK(cate(fit, q.c, 0, 0.8, 64, 5) == predict_outcome(fit, q));
}

TEST_CASE("cate: linear outcome with zero Y-row collapses to plug-in evaluation") {
    const int K = 3, m = 1;
    ThetaSet theta = ThetaSet::zeros(K, m);
    CounterRng rng(73, 0);
    for (auto& t : theta.treatments)
        for (long i = 0; i < t.size(); ++i) t(i) = rng.next_uniform(-1, 1);
    // linear-only outcome: intercept and linear terms, no interactions
    theta.outcome.setZero();
    theta.outcome(0) = 0.3;
    for (int i = 0; i < m + K; ++i) theta.outcome(1 + i) = rng.next_uniform(-1, 1);

    Eigen::MatrixXd s = Eigen::MatrixXd::Identity(K + 1, K + 1);
    s(0, 1) = s(1, 0) = 0.3;  // treatment noise may correlate; the Y row stays zero
    s(K, K) = 1.0;
    const CovMatrix sigma(s);

    Eigen::VectorXd c = Eigen::VectorXd::Constant(m, -0.7);
    const double x_i = 1.9;
    const long n_mc = 200000;
    const double got = cate(theta, sigma, m, c, 1, x_i, n_mc, 7);

    Query plug;
    plug.c = c;
    plug.intervened = {{1, x_i}};
    Eigen::VectorXd phi_c = features(PolyBasis{m}, c);
    plug.observed[0] = theta.treatments[0].dot(phi_c);
    plug.observed[2] = theta.treatments[2].dot(phi_c);
    const double expected = predict_outcome(theta, sigma, m, plug);
    CHECK(std::abs(got - expected) <= 3.0 * 1.5 / std::sqrt(static_cast<double>(n_mc)));
}

TEST_CASE("cate: agrees with direct simulation using the true model") {
    auto base = random_scm(2, 1, {-1, 1}, {0, 0}, 79);
    Eigen::Matrix3d s;
    s << 1.0, 0.5, 0.4, 0.5, 1.1, 0.3, 0.4, 0.3, 0.9;
    Eigen::VectorXd c = Eigen::VectorXd::Constant(1, 0.6);
    SymmetricAnm scm(2, 1, base.treatment_eqs, base.outcome_eq, CovMatrix(s), point_mass(c));
    auto fit = make_fit(theta_from_scm(scm), scm.sigma);

    const double x0 = -0.9;
    const long n = 100000;
    Dataset draws = sample(scm, Regime::fixed({{0, x0}}), n, 83);
    const double simulated = draws.outcome.mean();
    const double sd = std::sqrt((draws.outcome.array() - simulated).square().mean());

    const double got = cate(fit, c, 0, x0, 100000, 17);
    CHECK(std::abs(got - simulated) <= 3.0 * sd / std::sqrt(static_cast<double>(n)) + 0.02);
}

TEST_CASE("fit_asymmetric: reproduces the degenerate-confounding estimand") {
    auto m = table3_m();
    const long n = 10000;
    Dataset obs = sample(m, Regime::observational(), n, 91);
    Dataset joint = sample(m, Regime::sampled({0, 1}), n, 92);
    auto est = fit_asymmetric(obs, joint);

    CHECK(est.sigma_ii == doctest::Approx(1.0).epsilon(0.05));
    CHECK(est.sigma_yi == doctest::Approx(1.0).epsilon(0.05));

    for (auto [x1, b] : std::vector<std::pair<double, double>>{{1.0, 1.0}, {-1.0, 0.5}, {0.5, -1.0}}) {
        const double expected = x1 * b + x1;
        CHECK(std::abs(predict_asymmetric(est, Eigen::VectorXd(0), x1, b) - expected) <= 0.05);
    }
}

TEST_CASE("fit_asymmetric: zero confounding leaves no correction") {
    Eigen::Matrix3d s = Eigen::Vector3d(1.0, 0.5, 0.7).asDiagonal();
    AsymmetricPair m(0, StructuralEq(PolyBasis{0}, Eigen::VectorXd::Zero(1)),
                     StructuralEq(PolyBasis{1}, (Eigen::VectorXd(2) << 0, 1).finished()),
                     StructuralEq(PolyBasis{2}, (Eigen::VectorXd(4) << 0, 0, 0, 1).finished()),
                     CovMatrix(s), StdNormalLaw{0});
    const long n = 10000;
    auto est = fit_asymmetric(sample(m, Regime::observational(), n, 93),
                              sample(m, Regime::sampled({0, 1}), n, 94));
    const double se = std::sqrt(s(0, 0) * s(2, 2) / static_cast<double>(n));
    CHECK(std::abs(est.sigma_yi) <= 3.0 * se);
    // sigma_yi = 0 exactly reduces the prediction to the structural part
    est.sigma_yi = 0.0;
    CHECK(predict_asymmetric(est, Eigen::VectorXd(0), 1.3, 0.7) ==
          est.outcome_eq.eval((Eigen::VectorXd(2) << 1.3, 0.7).finished()));
}

TEST_CASE("predict_asymmetric: zero residual leaves the structural part") {
    auto m = table3_m();
    Dataset obs = sample(m, Regime::observational(), 5000, 95);
    Dataset joint = sample(m, Regime::sampled({0, 1}), 5000, 96);
    auto est = fit_asymmetric(obs, joint);
    const double x1 = est.cause_eq.eval(Eigen::VectorXd(0));  // x_i at its structural mean
    const double pred = predict_asymmetric(est, Eigen::VectorXd(0), x1, 2.0);
    CHECK(pred == est.outcome_eq.eval((Eigen::VectorXd(2) << x1, 2.0).finished()));
}

TEST_CASE("fit_asymmetric: regime validation") {
    auto m = table3_m();
    Dataset obs = sample(m, Regime::observational(), 100, 97);
    Dataset joint = sample(m, Regime::sampled({0, 1}), 100, 98);
    CHECK_THROWS_AS(fit_asymmetric(joint, joint), Error);
    CHECK_THROWS_AS(fit_asymmetric(obs, obs), Error);
    Dataset empty;
    empty.covariates.resize(0, 0);
    empty.treatments.resize(0, 2);
    empty.outcome.resize(0);
    empty.intervened.resize(0, 2);
    CHECK_THROWS_AS(fit_asymmetric(empty, joint), Error);
}

TEST_CASE("predict_asymmetric: vanished cause variance is singular") {
    AsymmetricFit est;
    est.covariate_dim = 0;
    est.cause_eq = StructuralEq(PolyBasis{0}, Eigen::VectorXd::Zero(1));
    est.outcome_eq = StructuralEq(PolyBasis{2}, Eigen::VectorXd::Zero(4));
    est.sigma_ii = 0.0;
    est.sigma_yi = 0.0;
    CHECK_THROWS_AS(predict_asymmetric(est, Eigen::VectorXd(0), 1.0, 1.0), SingularConditioningError);
}

TEST_CASE("query validation: overlap and coverage") {
    auto scm = random_scm(2, 1, {-1, 1}, {-0.5, 0.5}, 99);
    auto fit = make_fit(theta_from_scm(scm), scm.sigma);
    Query q;
    q.c = Eigen::VectorXd::Constant(1, 0.0);
    q.intervened = {{0, 1.0}};
    CHECK_THROWS_AS(predict_outcome(fit, q), Error);  // treatment 1 uncovered
    q.observed = {{0, 1.0}, {1, 0.0}};
    CHECK_THROWS_AS(predict_outcome(fit, q), Error);  // 0 both intervened and observed
}

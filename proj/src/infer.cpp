#include "disentangle/infer.hpp"

#include <cmath>

namespace disentangle {

namespace {

constexpr std::uint64_t kStreamCateMc = 20;
constexpr double kSigmaFloor = 1e-12;

void check_query(const Query& q, int covariate_dim, int K) {
    if (q.c.size() != covariate_dim) throw Error("query covariate dimension mismatch");
    if (static_cast<int>(q.intervened.size() + q.observed.size()) != K)
        throw Error("query must cover all " + std::to_string(K) + " treatments");
    for (const auto& [idx, v] : q.intervened) {
        if (idx < 0 || idx >= K) throw Error("query do() index out of range");
        if (q.observed.count(idx)) throw Error("treatment " + std::to_string(idx) + " both intervened and observed");
        if (!std::isfinite(v)) throw Error("non-finite query value");
    }
    for (const auto& [idx, v] : q.observed) {
        if (idx < 0 || idx >= K) throw Error("query observed index out of range");
        if (!std::isfinite(v)) throw Error("non-finite query value");
    }
}

}  // namespace

double predict_outcome(const ThetaSet& theta, const CovMatrix& sigma, int covariate_dim, const Query& q) {
    const int K = static_cast<int>(theta.treatments.size());
    check_query(q, covariate_dim, K);
    if (sigma.dim() != K + 1) throw Error("predict_outcome: sigma dimension must be K+1");

    Eigen::VectorXd cx(covariate_dim + K);
    cx.head(covariate_dim) = q.c;
    for (const auto& [idx, v] : q.intervened) cx(covariate_dim + idx) = v;
    for (const auto& [idx, v] : q.observed) cx(covariate_dim + idx) = v;
    const double f_y = theta.outcome.dot(features(PolyBasis{covariate_dim + K}, cx));
    if (q.observed.empty()) return f_y;

    const Eigen::VectorXd phi_c = features(PolyBasis{covariate_dim}, q.c);
    std::vector<int> given;
    Eigen::VectorXd u(q.observed.size());
    long a = 0;
    for (const auto& [idx, v] : q.observed) {
        given.push_back(idx);
        u(a++) = v - theta.treatments[idx].dot(phi_c);
    }
    return f_y + cond_expectation(sigma, K, given, u);
}

double predict_outcome(const FitReport& fit, const Query& q) {
    return predict_outcome(fit.theta, fit.sigma, fit.covariate_dim(), q);
}

double cate(const ThetaSet& theta, const CovMatrix& sigma, int covariate_dim, const Eigen::VectorXd& c,
            int i, double x_i, long n_mc, std::uint64_t seed) {
    const int K = static_cast<int>(theta.treatments.size());
    if (i < 0 || i >= K) throw Error("cate: treatment index out of range");
    if (n_mc < 1) throw Error("cate: n_mc must be >= 1");

    Query q;
    q.c = c;
    q.intervened[i] = x_i;
    if (K == 1) return predict_outcome(theta, sigma, covariate_dim, q);

    std::vector<int> others;
    for (int k = 0; k < K; ++k)
        if (k != i) others.push_back(k);
    const CovMatrix block(sigma.principal(others));

    const Eigen::VectorXd phi_c = features(PolyBasis{covariate_dim}, c);
    Eigen::VectorXd f_others(others.size());
    for (std::size_t a = 0; a < others.size(); ++a)
        f_others(a) = theta.treatments[others[a]].dot(phi_c);

    CounterRng rng(seed, kStreamCateMc);
    const Eigen::MatrixXd draws = sample_mvn(block, n_mc, rng);
    double acc = 0.0;
    for (long d = 0; d < n_mc; ++d) {
        for (std::size_t a = 0; a < others.size(); ++a) q.observed[others[a]] = f_others(a) + draws(d, a);
        acc += predict_outcome(theta, sigma, covariate_dim, q);
    }
    return acc / static_cast<double>(n_mc);
}

double cate(const FitReport& fit, const Eigen::VectorXd& c, int i, double x_i, long n_mc,
            std::uint64_t seed) {
    return cate(fit.theta, fit.sigma, fit.covariate_dim(), c, i, x_i, n_mc, seed);
}

AsymmetricFit fit_asymmetric(const Dataset& obs, const Dataset& joint) {
    if (obs.n() == 0 || joint.n() == 0) throw Error("fit_asymmetric: empty regime");
    if (obs.K() != 2 || joint.K() != 2) throw Error("fit_asymmetric: expected two treatments");
    if (obs.m() != joint.m()) throw Error("fit_asymmetric: covariate dimensions differ");
    for (long r = 0; r < obs.n(); ++r)
        if (obs.intervened(r, 0) || obs.intervened(r, 1))
            throw Error("fit_asymmetric: observational dataset contains interventions");
    for (long r = 0; r < joint.n(); ++r)
        if (!joint.intervened(r, 0) || !joint.intervened(r, 1))
            throw Error("fit_asymmetric: joint dataset must intervene on both treatments");

    const int m = obs.m();
    const PolyBasis bc{m};
    const PolyBasis by{m + 2};

    // f_i from the observational regime.
    Eigen::MatrixXd phi_obs(obs.n(), bc.dim());
    for (long r = 0; r < obs.n(); ++r)
        phi_obs.row(r) = features(bc, obs.covariates.row(r).transpose()).transpose();
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr_c(phi_obs);
    if (qr_c.rank() < bc.dim())
        throw UnderdeterminedError("cause equation design is rank deficient", "cause");
    Eigen::MatrixXd gram = phi_obs.transpose() * phi_obs;
    gram.diagonal().array() += 1e-8;
    Eigen::VectorXd theta_i =
        Eigen::LDLT<Eigen::MatrixXd>(gram).solve(phi_obs.transpose() * obs.treatments.col(0));

    // f_Y from the joint-interventional regime.
    Eigen::MatrixXd phi_joint(joint.n(), by.dim());
    Eigen::VectorXd cxx(m + 2);
    for (long r = 0; r < joint.n(); ++r) {
        cxx.head(m) = joint.covariates.row(r).transpose();
        cxx(m) = joint.treatments(r, 0);
        cxx(m + 1) = joint.treatments(r, 1);
        phi_joint.row(r) = features(by, cxx).transpose();
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr_y(phi_joint);
    if (qr_y.rank() < by.dim())
        throw UnderdeterminedError("outcome equation design is rank deficient", "outcome");
    Eigen::MatrixXd gram_y = phi_joint.transpose() * phi_joint;
    gram_y.diagonal().array() += 1e-8;
    Eigen::VectorXd theta_y =
        Eigen::LDLT<Eigen::MatrixXd>(gram_y).solve(phi_joint.transpose() * joint.outcome);

    AsymmetricFit est;
    est.covariate_dim = m;
    est.cause_eq = StructuralEq(bc, theta_i);
    est.outcome_eq = StructuralEq(by, theta_y);

    // sigma_ii and sigma_Yi from observational residuals (zero-mean products).
    double s_ii = 0.0, s_yi = 0.0;
    for (long r = 0; r < obs.n(); ++r) {
        const double u_i = obs.treatments(r, 0) - est.cause_eq.theta.dot(phi_obs.row(r).transpose());
        cxx.head(m) = obs.covariates.row(r).transpose();
        cxx(m) = obs.treatments(r, 0);
        cxx(m + 1) = obs.treatments(r, 1);
        const double u_y = obs.outcome(r) - est.outcome_eq.eval(cxx);
        s_ii += u_i * u_i;
        s_yi += u_i * u_y;
    }
    est.sigma_ii = s_ii / static_cast<double>(obs.n());
    est.sigma_yi = s_yi / static_cast<double>(obs.n());
    return est;
}

double predict_asymmetric(const AsymmetricFit& est, const Eigen::VectorXd& c, double x_i, double x_j) {
    if (c.size() != est.covariate_dim) throw Error("predict_asymmetric: covariate dimension mismatch");
    if (est.sigma_ii < kSigmaFloor)
        throw SingularConditioningError("cause noise variance below floor", {0});
    Eigen::VectorXd cxx(est.covariate_dim + 2);
    cxx.head(est.covariate_dim) = c;
    cxx(est.covariate_dim) = x_i;
    cxx(est.covariate_dim + 1) = x_j;
    const double correction = est.sigma_yi / est.sigma_ii * (x_i - est.cause_eq.eval(c));
    return est.outcome_eq.eval(cxx) + correction;
}

}  // namespace disentangle

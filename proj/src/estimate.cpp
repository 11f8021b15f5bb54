#include "disentangle/estimate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace disentangle {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;
constexpr double kOlsRidge = 1e-8;
constexpr double kAdamEps = 1e-8;

std::string equation_name(int eq, int K) { return eq == K ? "outcome" : "treatment " + std::to_string(eq); }

// Design matrix and target for one equation: rows are the records where the
// equation's variable is not intervened (all records for the outcome).
struct EquationData {
    Eigen::MatrixXd phi;
    Eigen::VectorXd target;
};

EquationData build_equation(const Dataset& data, int eq) {
    const int K = data.K();
    const int m = data.m();
    EquationData out;
    if (eq == K) {
        const PolyBasis basis{m + K};
        out.phi.resize(data.n(), basis.dim());
        out.target.resize(data.n());
        Eigen::VectorXd cx(m + K);
        for (long r = 0; r < data.n(); ++r) {
            cx.head(m) = data.covariates.row(r).transpose();
            cx.tail(K) = data.treatments.row(r).transpose();
            out.phi.row(r) = features(basis, cx).transpose();
            out.target(r) = data.outcome(r);
        }
        return out;
    }
    const PolyBasis basis{m};
    long rows = 0;
    for (long r = 0; r < data.n(); ++r)
        if (!data.intervened(r, eq)) ++rows;
    out.phi.resize(rows, basis.dim());
    out.target.resize(rows);
    long i = 0;
    for (long r = 0; r < data.n(); ++r) {
        if (data.intervened(r, eq)) continue;
        out.phi.row(i) = features(basis, data.covariates.row(r).transpose()).transpose();
        out.target(i) = data.treatments(r, eq);
        ++i;
    }
    return out;
}

Eigen::VectorXd ols_ridge(const Eigen::MatrixXd& phi, const Eigen::VectorXd& target,
                          const std::string& name) {
    const long p = phi.cols();
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(phi);
    if (qr.rank() < p)
        throw UnderdeterminedError("design matrix for " + name + " has rank " + std::to_string(qr.rank()) +
                                       " < " + std::to_string(p),
                                   name);
    Eigen::MatrixXd gram = phi.transpose() * phi;
    gram.diagonal().array() += kOlsRidge;
    return Eigen::LDLT<Eigen::MatrixXd>(gram).solve(phi.transpose() * target);
}

// Adam ascent on the per-equation weighted least-squares objective. Runs at
// the configured rate until the objective plateaus, then polishes with a
// halving schedule so the iterate settles onto the optimizer instead of
// oscillating at the step scale.
Eigen::VectorXd adam_weighted_ls(const Eigen::MatrixXd& phi, const Eigen::VectorXd& target,
                                 double sigma_vv, const FitOptions& opts, Eigen::VectorXd theta) {
    const double inv_sigma = 1.0 / sigma_vv;
    const long p = theta.size();
    auto objective = [&](const Eigen::VectorXd& th) {
        return -0.5 * inv_sigma * (target - phi * th).squaredNorm();
    };

    Eigen::VectorXd m = Eigen::VectorXd::Zero(p), v = Eigen::VectorXd::Zero(p);
    double lr = opts.learning_rate;
    Eigen::VectorXd best = theta;
    double best_obj = objective(theta);
    double prev_obj = best_obj;
    std::vector<double> trace{best_obj};
    const double grad_scale = std::max(1.0, (phi.transpose() * target).cwiseAbs().maxCoeff() * inv_sigma);
    const double grad_tol = 1e-9 * grad_scale;

    const int polish_budget = std::min(opts.max_inner / 2, 2200);
    const int polish_epoch = 60;
    bool polishing = false;
    int steps_since_halve = 0;
    int adam_step = 0;
    int decreasing = 0;
    int since_improve = 0;

    auto restart_from_best = [&](double rate_factor) {
        lr *= rate_factor;
        theta = best;
        prev_obj = best_obj;
        m.setZero();
        v.setZero();
        adam_step = 0;
        decreasing = 0;
        since_improve = 0;
        steps_since_halve = 0;
    };

    for (int step = 0; step < opts.max_inner; ++step) {
        const Eigen::VectorXd residual = target - phi * theta;
        const Eigen::VectorXd g = inv_sigma * (phi.transpose() * residual);
        if (g.cwiseAbs().maxCoeff() < grad_tol) break;

        ++adam_step;
        m = opts.beta1 * m + (1.0 - opts.beta1) * g;
        v = opts.beta2 * v + (1.0 - opts.beta2) * g.cwiseProduct(g).eval();
        const double bc1 = 1.0 - std::pow(opts.beta1, adam_step);
        const double bc2 = 1.0 - std::pow(opts.beta2, adam_step);
        theta += lr * ((m / bc1).array() / ((v / bc2).array().sqrt() + kAdamEps)).matrix();

        const double obj = objective(theta);
        trace.push_back(obj);
        if (!std::isfinite(obj))
            throw OptimizationFailureError("objective became non-finite", std::move(trace));
        if (obj < prev_obj - 1e-12 * (1.0 + std::abs(prev_obj))) {
            if (++decreasing >= 50)
                throw OptimizationFailureError("objective decreased for 50 consecutive steps",
                                               std::move(trace));
        } else {
            decreasing = 0;
        }
        prev_obj = obj;
        if (obj > best_obj) {
            best_obj = obj;
            best = theta;
            since_improve = 0;
        } else {
            ++since_improve;
        }

        if (!polishing) {
            if (since_improve >= polish_epoch || step >= opts.max_inner - polish_budget) {
                polishing = true;
                restart_from_best(0.5);
            }
        } else if (++steps_since_halve >= polish_epoch) {
            restart_from_best(0.5);
            if (lr < 1e-11) break;
        }
    }
    return best;
}

}  // namespace

void FitOptions::validate() const {
    if (!(tol > 0.0)) throw Error("FitOptions: tolerance must be > 0");
    if (!(learning_rate > 0.0)) throw Error("FitOptions: learning rate must be > 0");
    if (!(beta1 > 0.0 && beta1 < 1.0 && beta2 > 0.0 && beta2 < 1.0))
        throw Error("FitOptions: decay coefficients must lie in (0,1)");
    if (max_outer < 1 || max_inner < 1) throw Error("FitOptions: iteration limits must be >= 1");
    if (!(variance_floor > 0.0)) throw Error("FitOptions: variance floor must be > 0");
}

ThetaSet ThetaSet::zeros(int K, int covariate_dim) {
    ThetaSet t;
    t.treatments.assign(K, Eigen::VectorXd::Zero(PolyBasis{covariate_dim}.dim()));
    t.outcome = Eigen::VectorXd::Zero(PolyBasis{covariate_dim + K}.dim());
    return t;
}

double log_likelihood(const Dataset& data, const ThetaSet& theta, const CovMatrix& sigma,
                      double variance_floor) {
    const int K = data.K();
    const int m = data.m();
    if (static_cast<int>(theta.treatments.size()) != K || sigma.dim() != K + 1)
        throw Error("log_likelihood: parameter dimensions do not match dataset");
    const PolyBasis bx{m};
    const PolyBasis by{m + K};
    if (K > 0 && theta.treatments[0].size() != bx.dim()) throw Error("log_likelihood: treatment theta length");
    if (theta.outcome.size() != by.dim()) throw Error("log_likelihood: outcome theta length");

    Eigen::VectorXd var(K + 1), log_norm(K + 1);
    for (int v = 0; v <= K; ++v) {
        var(v) = std::max(sigma(v, v), variance_floor);
        log_norm(v) = 0.5 * std::log(kTwoPi * var(v));
    }

    double ll = 0.0;
    Eigen::VectorXd cx(m + K);
    for (long r = 0; r < data.n(); ++r) {
        const auto c = data.covariates.row(r).transpose();
        const Eigen::VectorXd phi_c = features(bx, c);
        for (int k = 0; k < K; ++k) {
            if (data.intervened(r, k)) continue;
            const double res = data.treatments(r, k) - theta.treatments[k].dot(phi_c);
            if (!std::isfinite(res)) throw InvalidDataError("non-finite residual in record " + std::to_string(r), r);
            ll -= 0.5 * res * res / var(k) + log_norm(k);
        }
        cx.head(m) = c;
        cx.tail(K) = data.treatments.row(r).transpose();
        const double res_y = data.outcome(r) - theta.outcome.dot(features(by, cx));
        if (!std::isfinite(res_y)) throw InvalidDataError("non-finite residual in record " + std::to_string(r), r);
        ll -= 0.5 * res_y * res_y / var(K) + log_norm(K);
    }
    return ll;
}

ThetaSet log_likelihood_grad(const Dataset& data, const ThetaSet& theta, const CovMatrix& sigma,
                             double variance_floor) {
    const int K = data.K();
    const int m = data.m();
    const PolyBasis bx{m};
    const PolyBasis by{m + K};
    ThetaSet g = ThetaSet::zeros(K, m);

    Eigen::VectorXd var(K + 1);
    for (int v = 0; v <= K; ++v) var(v) = std::max(sigma(v, v), variance_floor);

    Eigen::VectorXd cx(m + K);
    for (long r = 0; r < data.n(); ++r) {
        const auto c = data.covariates.row(r).transpose();
        const Eigen::VectorXd phi_c = features(bx, c);
        for (int k = 0; k < K; ++k) {
            if (data.intervened(r, k)) continue;
            const double res = data.treatments(r, k) - theta.treatments[k].dot(phi_c);
            g.treatments[k] += (res / var(k)) * phi_c;
        }
        cx.head(m) = c;
        cx.tail(K) = data.treatments.row(r).transpose();
        const Eigen::VectorXd phi_y = features(by, cx);
        const double res_y = data.outcome(r) - theta.outcome.dot(phi_y);
        g.outcome += (res_y / var(K)) * phi_y;
    }
    return g;
}

ThetaFitResult fit_theta(const Dataset& data, const CovMatrix& sigma, const FitOptions& opts,
                         const ThetaSet* init) {
    opts.validate();
    const int K = data.K();
    const int m = data.m();
    if (sigma.dim() != K + 1) throw Error("fit_theta: sigma dimension must be K+1");

    ThetaFitResult out;
    out.theta = init ? *init : ThetaSet::zeros(K, m);
    out.fitted.assign(K + 1, false);
    for (int eq = 0; eq <= K; ++eq) {
        const EquationData ed = build_equation(data, eq);
        if (ed.phi.rows() == 0) continue;  // no gradient signal; left at init
        const double sigma_vv = std::max(sigma(eq, eq), opts.variance_floor);
        Eigen::VectorXd& slot = (eq == K) ? out.theta.outcome : out.theta.treatments[eq];
        slot = adam_weighted_ls(ed.phi, ed.target, sigma_vv, opts, slot);
        out.fitted[eq] = true;
    }
    return out;
}

ThetaSet closed_form_theta(const Dataset& data) {
    const int K = data.K();
    ThetaSet theta = ThetaSet::zeros(K, data.m());
    for (int eq = 0; eq <= K; ++eq) {
        const EquationData ed = build_equation(data, eq);
        Eigen::VectorXd& slot = (eq == K) ? theta.outcome : theta.treatments[eq];
        slot = ols_ridge(ed.phi, ed.target, equation_name(eq, K));
    }
    return theta;
}

CovMatrix fit_sigma(const Dataset& data, const ThetaSet& theta) {
    const int K = data.K();
    const int m = data.m();
    if (static_cast<int>(theta.treatments.size()) != K) throw Error("fit_sigma: theta dimensions");
    const PolyBasis bx{m};
    const PolyBasis by{m + K};

    Eigen::MatrixXd values = Eigen::MatrixXd::Zero(data.n(), K + 1);
    Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic> present(data.n(), K + 1);
    Eigen::VectorXd cx(m + K);
    for (long r = 0; r < data.n(); ++r) {
        const auto c = data.covariates.row(r).transpose();
        const Eigen::VectorXd phi_c = features(bx, c);
        for (int k = 0; k < K; ++k) {
            if (data.intervened(r, k)) {
                present(r, k) = 0;
            } else {
                present(r, k) = 1;
                values(r, k) = data.treatments(r, k) - theta.treatments[k].dot(phi_c);
            }
        }
        cx.head(m) = c;
        cx.tail(K) = data.treatments.row(r).transpose();
        values(r, K) = data.outcome(r) - theta.outcome.dot(features(by, cx));
        present(r, K) = 1;
    }
    return mle_cov(ResidualTable(std::move(values), std::move(present)));
}

int FitReport::covariate_dim() const {
    if (!theta.treatments.empty()) {
        // invert p = 1 + m + m(m-1)/2
        const long p = theta.treatments[0].size();
        const long m = static_cast<long>((-1.0 + std::sqrt(8.0 * static_cast<double>(p) - 7.0)) / 2.0 + 0.5);
        return static_cast<int>(m);
    }
    const long p = theta.outcome.size();
    return static_cast<int>((-1.0 + std::sqrt(8.0 * static_cast<double>(p) - 7.0)) / 2.0 + 0.5);
}

FitReport fit(const Dataset& data, const FitOptions& opts) {
    opts.validate();
    if (data.n() == 0) throw Error("fit: empty dataset");
    data.validate();
    const int K = data.K();
    const int m = data.m();

    FitReport report;
    report.theta = ThetaSet::zeros(K, m);
    report.sigma = CovMatrix::identity(K + 1);

    double prev_ll = std::numeric_limits<double>::quiet_NaN();
    for (int outer = 1; outer <= opts.max_outer; ++outer) {
        const ThetaSet prev_theta = report.theta;
        const CovMatrix prev_sigma = report.sigma;

        report.theta = fit_theta(data, report.sigma, opts, &report.theta).theta;
        CovMatrix sigma_new = fit_sigma(data, report.theta);
        const double ll = log_likelihood(data, report.theta, sigma_new, opts.variance_floor);

        // The PSD projection inside the sigma step can only inflate
        // diagonals, which may cost likelihood; keep the trace monotone by
        // stopping at the previous iterate.
        if (!report.ll_trace.empty() && ll < report.ll_trace.back() - 1e-9) {
            report.theta = prev_theta;
            report.sigma = prev_sigma;
            report.converged = true;
            break;
        }

        report.sigma = std::move(sigma_new);
        report.ll_trace.push_back(ll);
        report.iterations = outer;
        if (std::isfinite(prev_ll) && std::abs(ll - prev_ll) < opts.tol) {
            report.converged = true;
            break;
        }
        prev_ll = ll;
    }
    return report;
}

Eigen::VectorXd fit_baseline(const Dataset& data) {
    if (data.n() == 0) throw Error("fit_baseline: empty dataset");
    const EquationData ed = build_equation(data, data.K());
    return ols_ridge(ed.phi, ed.target, "baseline outcome");
}

}  // namespace disentangle

#include "disentangle/model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace disentangle {

namespace {

// Stream ids for the independent draws inside one sample() call.
constexpr std::uint64_t kStreamCovariates = 1;
constexpr std::uint64_t kStreamNoise = 2;
constexpr std::uint64_t kStreamPolicy = 3;
constexpr std::uint64_t kStreamTheta = 10;
constexpr std::uint64_t kStreamSigma = 11;

Eigen::MatrixXd draw_covariates(const CovariateLaw& law, long n, CounterRng& rng) {
    if (std::holds_alternative<StdNormalLaw>(law)) {
        const int m = std::get<StdNormalLaw>(law).dim;
        Eigen::MatrixXd c(n, m);
        for (long i = 0; i < n; ++i)
            for (int j = 0; j < m; ++j) c(i, j) = rng.next_normal();
        return c;
    }
    const auto& cat = std::get<CategoricalLaw>(law);
    Eigen::MatrixXd c(n, cat.support.cols());
    for (long i = 0; i < n; ++i) {
        const double u = rng.next_double();
        double acc = 0.0;
        long row = cat.probs.size() - 1;
        for (long k = 0; k < cat.probs.size(); ++k) {
            acc += cat.probs(k);
            if (u < acc) {
                row = k;
                break;
            }
        }
        c.row(i) = cat.support.row(row);
    }
    return c;
}

double policy_value(const ValuePolicy& p, CounterRng& rng) {
    // A normal-policy draw is consumed even when unused elsewhere, keeping
    // streams aligned across regimes with equal intervened sets.
    if (p.kind == ValuePolicy::Kind::Fixed) return p.value;
    return p.mean + p.sd * rng.next_normal();
}

void check_regime(const Regime& regime, int K) {
    for (int idx : regime.intervened)
        if (idx < 0 || idx >= K)
            throw Error("regime intervenes on treatment " + std::to_string(idx) + " outside 0.." +
                        std::to_string(K - 1));
}

}  // namespace

Eigen::VectorXd features(const PolyBasis& basis, const Eigen::Ref<const Eigen::VectorXd>& z) {
    if (z.size() != basis.arity)
        throw Error("feature map arity " + std::to_string(basis.arity) + " but input has " +
                    std::to_string(z.size()) + " entries");
    Eigen::VectorXd f(basis.dim());
    f(0) = 1.0;
    int k = 1;
    for (int i = 0; i < basis.arity; ++i) f(k++) = z(i);
    for (int i = 0; i < basis.arity; ++i)
        for (int j = i + 1; j < basis.arity; ++j) f(k++) = z(i) * z(j);
    return f;
}

StructuralEq::StructuralEq(PolyBasis b, Eigen::VectorXd t) : basis(b), theta(std::move(t)) {
    if (theta.size() != basis.dim())
        throw Error("theta length " + std::to_string(theta.size()) + " does not match basis dimension " +
                    std::to_string(basis.dim()));
}

double StructuralEq::eval(const Eigen::Ref<const Eigen::VectorXd>& z) const {
    return theta.dot(features(basis, z));
}

int covariate_law_dim(const CovariateLaw& law) {
    if (std::holds_alternative<StdNormalLaw>(law)) return std::get<StdNormalLaw>(law).dim;
    return static_cast<int>(std::get<CategoricalLaw>(law).support.cols());
}

void validate_covariate_law(const CovariateLaw& law) {
    if (std::holds_alternative<StdNormalLaw>(law)) {
        if (std::get<StdNormalLaw>(law).dim < 0) throw Error("covariate dimension must be >= 0");
        return;
    }
    const auto& cat = std::get<CategoricalLaw>(law);
    if (cat.support.rows() != cat.probs.size() || cat.support.rows() == 0)
        throw Error("categorical covariate table is empty or misshapen");
    if (cat.probs.minCoeff() < 0.0) throw Error("categorical probabilities must be nonnegative");
    if (std::abs(cat.probs.sum() - 1.0) > 1e-9) throw Error("categorical probabilities must sum to 1");
}

SymmetricAnm::SymmetricAnm(int k, int m, std::vector<StructuralEq> eqs, StructuralEq outcome,
                           CovMatrix s, CovariateLaw law)
    : K(k),
      covariate_dim(m),
      treatment_eqs(std::move(eqs)),
      outcome_eq(std::move(outcome)),
      sigma(std::move(s)),
      covariate_law(std::move(law)) {
    if (K < 1) throw Error("symmetric ANM needs at least one treatment");
    if (static_cast<int>(treatment_eqs.size()) != K)
        throw Error("expected " + std::to_string(K) + " treatment equations");
    for (const auto& eq : treatment_eqs)
        if (eq.basis.arity != covariate_dim) throw Error("treatment equation arity must equal covariate_dim");
    if (outcome_eq.basis.arity != covariate_dim + K)
        throw Error("outcome equation arity must equal covariate_dim + K");
    if (sigma.dim() != K + 1) throw Error("sigma dimension must be K+1");
    validate_covariate_law(covariate_law);
    if (covariate_law_dim(covariate_law) != covariate_dim)
        throw Error("covariate law dimension does not match covariate_dim");
}

AsymmetricPair::AsymmetricPair(int m, StructuralEq cause, StructuralEq consequence, StructuralEq outcome,
                               CovMatrix s, CovariateLaw law)
    : covariate_dim(m),
      cause_eq(std::move(cause)),
      consequence_eq(std::move(consequence)),
      outcome_eq(std::move(outcome)),
      sigma(std::move(s)),
      covariate_law(std::move(law)) {
    if (cause_eq.basis.arity != covariate_dim) throw Error("cause equation arity must equal covariate_dim");
    if (consequence_eq.basis.arity != covariate_dim + 1)
        throw Error("consequence equation arity must equal covariate_dim + 1");
    if (outcome_eq.basis.arity != covariate_dim + 2)
        throw Error("outcome equation arity must equal covariate_dim + 2");
    if (sigma.dim() != 3) throw Error("asymmetric pair sigma must be 3x3");
    validate_covariate_law(covariate_law);
    if (covariate_law_dim(covariate_law) != covariate_dim)
        throw Error("covariate law dimension does not match covariate_dim");
}

ValuePolicy ValuePolicy::fixed(double v) {
    ValuePolicy p;
    p.kind = Kind::Fixed;
    p.value = v;
    return p;
}

ValuePolicy ValuePolicy::normal(double mean, double sd) {
    ValuePolicy p;
    p.kind = Kind::Normal;
    p.mean = mean;
    p.sd = sd;
    return p;
}

Regime Regime::observational() { return Regime{}; }

Regime Regime::sampled(std::vector<int> indices, double mean, double sd) {
    Regime r;
    r.intervened = std::move(indices);
    std::sort(r.intervened.begin(), r.intervened.end());
    if (std::adjacent_find(r.intervened.begin(), r.intervened.end()) != r.intervened.end())
        throw Error("regime has duplicate intervened indices");
    if (!r.intervened.empty() && r.intervened.front() < 0) throw Error("negative treatment index");
    r.policies.assign(r.intervened.size(), ValuePolicy::normal(mean, sd));
    return r;
}

Regime Regime::fixed(const std::vector<std::pair<int, double>>& values) {
    std::vector<std::pair<int, double>> sorted = values;
    std::sort(sorted.begin(), sorted.end());
    Regime r;
    for (const auto& [idx, v] : sorted) {
        if (!r.intervened.empty() && idx == r.intervened.back()) throw Error("regime has duplicate intervened indices");
        if (idx < 0) throw Error("negative treatment index");
        r.intervened.push_back(idx);
        r.policies.push_back(ValuePolicy::fixed(v));
    }
    return r;
}

bool Regime::intervenes(int i) const {
    return std::binary_search(intervened.begin(), intervened.end(), i);
}

std::string Regime::label() const {
    if (intervened.empty()) return "obs";
    std::ostringstream os;
    os << "do(";
    for (std::size_t i = 0; i < intervened.size(); ++i) os << (i ? "+" : "") << intervened[i];
    os << ")";
    return os.str();
}

void Dataset::validate() const {
    const long rows = n();
    if (covariates.rows() != rows || treatments.rows() != rows || intervened.rows() != rows ||
        static_cast<long>(regime_id.size()) != rows)
        throw Error("dataset columns have inconsistent row counts");
    if (intervened.cols() != treatments.cols()) throw Error("intervened flags and treatments differ in width");
    for (long r = 0; r < rows; ++r) {
        const int id = regime_id[r];
        if (id < 0 || id >= static_cast<int>(regimes.size()))
            throw Error("record " + std::to_string(r) + " has unknown regime id " + std::to_string(id));
        for (int k = 0; k < K(); ++k) {
            const bool flag = intervened(r, k) != 0;
            if (flag != regimes[id].intervenes(k))
                throw Error("record " + std::to_string(r) + " flags do not match its regime");
        }
        if (!std::isfinite(outcome(r))) throw InvalidDataError("non-finite outcome", r);
    }
    if (!covariates.allFinite() || !treatments.allFinite())
        throw Error("dataset has non-finite covariates or treatments");
}

Dataset Dataset::concat(const std::vector<Dataset>& parts) {
    if (parts.empty()) throw Error("concat of zero datasets");
    long total = 0;
    for (const auto& p : parts) total += p.n();
    Dataset out;
    const int m = parts.front().m();
    const int K = parts.front().K();
    out.covariates.resize(total, m);
    out.treatments.resize(total, K);
    out.outcome.resize(total);
    out.intervened.resize(total, K);
    out.regime_id.reserve(total);
    long row = 0;
    for (const auto& p : parts) {
        if (p.m() != m || p.K() != K) throw Error("concat of datasets with different shapes");
        const int offset = static_cast<int>(out.regimes.size());
        out.regimes.insert(out.regimes.end(), p.regimes.begin(), p.regimes.end());
        out.covariates.middleRows(row, p.n()) = p.covariates;
        out.treatments.middleRows(row, p.n()) = p.treatments;
        out.outcome.segment(row, p.n()) = p.outcome;
        out.intervened.middleRows(row, p.n()) = p.intervened;
        for (int id : p.regime_id) out.regime_id.push_back(id + offset);
        row += p.n();
    }
    return out;
}

SampleWithNoise sample_with_noise(const SymmetricAnm& scm, const Regime& regime, long n,
                                  std::uint64_t seed) {
    check_regime(regime, scm.K);
    CounterRng cov_rng(seed, kStreamCovariates);
    CounterRng noise_rng(seed, kStreamNoise);
    CounterRng policy_rng(seed, kStreamPolicy);

    SampleWithNoise out;
    Dataset& ds = out.data;
    ds.covariates = draw_covariates(scm.covariate_law, n, cov_rng);
    out.noise = sample_mvn(scm.sigma, n, noise_rng);
    ds.treatments.resize(n, scm.K);
    ds.outcome.resize(n);
    ds.intervened = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>::Zero(n, scm.K);
    ds.regime_id.assign(n, 0);
    ds.regimes = {regime};

    Eigen::VectorXd cx(scm.covariate_dim + scm.K);
    for (long r = 0; r < n; ++r) {
        const auto c = ds.covariates.row(r).transpose();
        for (std::size_t a = 0; a < regime.intervened.size(); ++a) {
            const int idx = regime.intervened[a];
            ds.treatments(r, idx) = policy_value(regime.policies[a], policy_rng);
            ds.intervened(r, idx) = 1;
        }
        for (int k = 0; k < scm.K; ++k)
            if (!ds.intervened(r, k)) ds.treatments(r, k) = scm.treatment_eqs[k].eval(c) + out.noise(r, k);
        cx.head(scm.covariate_dim) = c;
        cx.tail(scm.K) = ds.treatments.row(r).transpose();
        ds.outcome(r) = scm.outcome_eq.eval(cx) + out.noise(r, scm.K);
    }
    return out;
}

SampleWithNoise sample_with_noise(const AsymmetricPair& scm, const Regime& regime, long n,
                                  std::uint64_t seed) {
    check_regime(regime, 2);
    CounterRng cov_rng(seed, kStreamCovariates);
    CounterRng noise_rng(seed, kStreamNoise);
    CounterRng policy_rng(seed, kStreamPolicy);

    SampleWithNoise out;
    Dataset& ds = out.data;
    const int m = scm.covariate_dim;
    ds.covariates = draw_covariates(scm.covariate_law, n, cov_rng);
    out.noise = sample_mvn(scm.sigma, n, noise_rng);
    ds.treatments.resize(n, 2);
    ds.outcome.resize(n);
    ds.intervened = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>::Zero(n, 2);
    ds.regime_id.assign(n, 0);
    ds.regimes = {regime};

    Eigen::VectorXd ci(m + 1), cij(m + 2);
    for (long r = 0; r < n; ++r) {
        const auto c = ds.covariates.row(r).transpose();
        for (std::size_t a = 0; a < regime.intervened.size(); ++a) {
            const int idx = regime.intervened[a];
            ds.treatments(r, idx) = policy_value(regime.policies[a], policy_rng);
            ds.intervened(r, idx) = 1;
        }
        if (!ds.intervened(r, 0)) ds.treatments(r, 0) = scm.cause_eq.eval(c) + out.noise(r, 0);
        ci.head(m) = c;
        ci(m) = ds.treatments(r, 0);  // consequence sees the realized cause
        if (!ds.intervened(r, 1)) ds.treatments(r, 1) = scm.consequence_eq.eval(ci) + out.noise(r, 1);
        cij.head(m) = c;
        cij(m) = ds.treatments(r, 0);
        cij(m + 1) = ds.treatments(r, 1);
        ds.outcome(r) = scm.outcome_eq.eval(cij) + out.noise(r, 2);
    }
    return out;
}

Dataset sample(const SymmetricAnm& scm, const Regime& regime, long n, std::uint64_t seed) {
    return sample_with_noise(scm, regime, n, seed).data;
}

Dataset sample(const AsymmetricPair& scm, const Regime& regime, long n, std::uint64_t seed) {
    return sample_with_noise(scm, regime, n, seed).data;
}

SymmetricAnm random_scm(int K, int covariate_dim, std::pair<double, double> theta_range,
                        std::pair<double, double> cov_range, std::uint64_t seed) {
    if (theta_range.second < theta_range.first || cov_range.second < cov_range.first)
        throw Error("random_scm: empty parameter range");
    CounterRng theta_rng(seed, kStreamTheta);
    CounterRng sigma_rng(seed, kStreamSigma);

    const PolyBasis tx{covariate_dim};
    const PolyBasis ty{covariate_dim + K};
    std::vector<StructuralEq> eqs;
    eqs.reserve(K);
    for (int k = 0; k < K; ++k) {
        Eigen::VectorXd t(tx.dim());
        for (long i = 0; i < t.size(); ++i) t(i) = theta_rng.next_uniform(theta_range.first, theta_range.second);
        eqs.emplace_back(tx, std::move(t));
    }
    Eigen::VectorXd t_y(ty.dim());
    for (long i = 0; i < t_y.size(); ++i) t_y(i) = theta_rng.next_uniform(theta_range.first, theta_range.second);

    // Raw entries in cov_range; a uniform diagonal may be negative, so it is
    // replaced by |draw| + 0.1 before shrinking.
    const int d = K + 1;
    Eigen::MatrixXd raw(d, d);
    for (int i = 0; i < d; ++i) {
        for (int j = i; j < d; ++j) {
            const double v = sigma_rng.next_uniform(cov_range.first, cov_range.second);
            if (i == j)
                raw(i, i) = std::abs(v) + 0.1;
            else
                raw(i, j) = raw(j, i) = v;
        }
    }
    CovMatrix sigma = psd_shrink(raw).cov;

    return SymmetricAnm(K, covariate_dim, std::move(eqs), StructuralEq(ty, std::move(t_y)),
                        std::move(sigma), StdNormalLaw{covariate_dim});
}

double true_mean(const SymmetricAnm& scm, const Eigen::VectorXd& c, const Eigen::VectorXd& x) {
    if (c.size() != scm.covariate_dim || x.size() != scm.K) throw Error("true_mean: dimension mismatch");
    Eigen::VectorXd cx(c.size() + x.size());
    cx << c, x;
    return scm.outcome_eq.eval(cx);
}

}  // namespace disentangle

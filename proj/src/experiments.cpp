#include "disentangle/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <sstream>
#include <thread>
#include <tuple>

#include "disentangle/infer.hpp"
#include "disentangle/serialize.hpp"

namespace disentangle {

namespace {

constexpr double kSqrt2OverPi = 0.79788456080286535588;
const double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string bound_label(double b) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3g", b);
    return buf;
}

Regime regime_with_policy(std::vector<int> indices, const ValuePolicy& policy) {
    Regime r = Regime::sampled(std::move(indices));
    for (auto& p : r.policies) p = policy;
    return r;
}

ThetaSet true_theta(const SymmetricAnm& scm) {
    ThetaSet t;
    for (const auto& eq : scm.treatment_eqs) t.treatments.push_back(eq.theta);
    t.outcome = scm.outcome_eq.theta;
    return t;
}

/// MAE of the Eq.-(5)-style predictor (structural part plus conditioning
/// correction) against realized outcomes; the conditioning solve is hoisted
/// out of the record loop.
double prediction_mae(const Dataset& eval, const ThetaSet& theta, const CovMatrix& sigma,
                      const std::vector<int>& observed) {
    const int K = eval.K();
    const int m = eval.m();
    const PolyBasis bx{m};
    const PolyBasis by{m + K};
    Eigen::VectorXd w;
    if (!observed.empty()) w = cond_weights(sigma, K, observed);

    double acc = 0.0;
    Eigen::VectorXd cx(m + K);
    for (long r = 0; r < eval.n(); ++r) {
        const auto c = eval.covariates.row(r).transpose();
        cx.head(m) = c;
        cx.tail(K) = eval.treatments.row(r).transpose();
        double pred = theta.outcome.dot(features(by, cx));
        if (!observed.empty()) {
            const Eigen::VectorXd phi_c = features(bx, c);
            for (std::size_t a = 0; a < observed.size(); ++a)
                pred += w(a) * (eval.treatments(r, observed[a]) - theta.treatments[observed[a]].dot(phi_c));
        }
        acc += std::abs(pred - eval.outcome(r));
    }
    return acc / static_cast<double>(eval.n());
}

double baseline_mae(const Dataset& eval, const Eigen::VectorXd& theta_y) {
    const int K = eval.K();
    const int m = eval.m();
    const PolyBasis by{m + K};
    double acc = 0.0;
    Eigen::VectorXd cx(m + K);
    for (long r = 0; r < eval.n(); ++r) {
        cx.head(m) = eval.covariates.row(r).transpose();
        cx.tail(K) = eval.treatments.row(r).transpose();
        acc += std::abs(theta_y.dot(features(by, cx)) - eval.outcome(r));
    }
    return acc / static_cast<double>(eval.n());
}

void parallel_cells(int n_cells, int threads, const std::function<void(int)>& body) {
    if (threads <= 1 || n_cells <= 1) {
        for (int i = 0; i < n_cells; ++i) body(i);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    const int workers = std::min(threads, n_cells);
    pool.reserve(workers);
    for (int t = 0; t < workers; ++t)
        pool.emplace_back([&] {
            for (int i = next.fetch_add(1); i < n_cells; i = next.fetch_add(1)) body(i);
        });
    for (auto& th : pool) th.join();
}

std::vector<MetricsRecord> synthetic_cell(const SyntheticConfig& cfg, int seed_idx, int size_idx) {
    const long n = cfg.sample_sizes[size_idx];
    const auto si = static_cast<std::uint64_t>(seed_idx);
    const auto zi = static_cast<std::uint64_t>(size_idx);
    const SymmetricAnm scm =
        random_scm(cfg.K, cfg.covariate_dim, cfg.theta_range, cfg.cov_range, derive_seed(cfg.base_seed, {1, si}));

    std::vector<Dataset> parts;
    const int R = static_cast<int>(cfg.training_regimes.size());
    for (int r_idx = 0; r_idx < R; ++r_idx) {
        const long n_r = n / R + (r_idx < static_cast<int>(n % R) ? 1 : 0);
        if (n_r == 0) continue;
        parts.push_back(sample(scm, Regime::sampled(cfg.training_regimes[r_idx]), n_r,
                               derive_seed(cfg.base_seed, {2, si, zi, static_cast<std::uint64_t>(r_idx)})));
    }
    const Dataset train = Dataset::concat(parts);

    FitReport rep;
    bool ours_ok = true;
    try {
        rep = fit(train, cfg.fit_options);
    } catch (const std::exception&) {
        ours_ok = false;
    }
    Eigen::VectorXd theta_base;
    bool base_ok = true;
    try {
        theta_base = fit_baseline(train);
    } catch (const std::exception&) {
        base_ok = false;
    }

    std::optional<double> theta_mae_ours, sigma_mae_ours, theta_mae_base;
    if (ours_ok) {
        theta_mae_ours = (rep.theta.outcome - scm.outcome_eq.theta).cwiseAbs().mean();
        sigma_mae_ours = (rep.sigma.mat() - scm.sigma.mat()).cwiseAbs().mean();
    }
    if (base_ok) theta_mae_base = (theta_base - scm.outcome_eq.theta).cwiseAbs().mean();
    const ThetaSet truth = true_theta(scm);

    std::vector<MetricsRecord> out;
    for (int mask = 0; mask < (1 << cfg.K); ++mask) {
        std::vector<int> intervened, observed;
        for (int k = 0; k < cfg.K; ++k) ((mask >> k) & 1 ? intervened : observed).push_back(k);
        const Regime ereg = Regime::sampled(intervened);
        const Dataset eval = sample(scm, ereg, cfg.eval_draws,
                                    derive_seed(cfg.base_seed, {3, si, zi, static_cast<std::uint64_t>(mask)}));
        const std::string label = ereg.label();

        MetricsRecord r_ours{"ours", label, n, seed_idx, kNaN, theta_mae_ours, sigma_mae_ours,
                             ours_ok && rep.converged};
        if (ours_ok) {
            try {
                r_ours.mae = prediction_mae(eval, rep.theta, rep.sigma, observed);
            } catch (const std::exception&) {
                r_ours.converged = false;
            }
        }
        out.push_back(std::move(r_ours));

        MetricsRecord r_base{"baseline", label, n, seed_idx, kNaN, theta_mae_base, std::nullopt, base_ok};
        if (base_ok) r_base.mae = baseline_mae(eval, theta_base);
        out.push_back(std::move(r_base));

        out.push_back(MetricsRecord{"oracle", label, n, seed_idx,
                                    prediction_mae(eval, truth, scm.sigma, observed), std::nullopt,
                                    std::nullopt, true});
    }
    return out;
}

}  // namespace

void SyntheticConfig::validate() const {
    if (K < 1 || covariate_dim < 0) throw Error("synthetic config: bad dimensions");
    if (sample_sizes.empty() || seeds < 1 || eval_draws < 1) throw Error("synthetic config: empty sweep");
    bool has_obs = false;
    std::vector<bool> covered(K, false);
    for (const auto& regime : training_regimes) {
        if (regime.empty()) has_obs = true;
        for (int idx : regime) {
            if (idx < 0 || idx >= K) throw Error("synthetic config: regime index out of range");
            covered[idx] = true;
        }
    }
    if (!has_obs) throw Error("synthetic config: training regimes must include the observational regime");
    for (int k = 0; k < K; ++k)
        if (!covered[k])
            throw Error("synthetic config: treatment " + std::to_string(k) +
                        " appears in no interventional training regime");
    fit_options.validate();
}

std::vector<MetricsRecord> run_synthetic(const SyntheticConfig& cfg) {
    cfg.validate();
    const int n_cells = cfg.seeds * static_cast<int>(cfg.sample_sizes.size());
    std::vector<std::vector<MetricsRecord>> slots(n_cells);
    parallel_cells(n_cells, cfg.threads, [&](int cell) {
        const int seed_idx = cell / static_cast<int>(cfg.sample_sizes.size());
        const int size_idx = cell % static_cast<int>(cfg.sample_sizes.size());
        slots[cell] = synthetic_cell(cfg, seed_idx, size_idx);
    });
    std::vector<MetricsRecord> out;
    for (auto& s : slots) out.insert(out.end(), s.begin(), s.end());
    return out;
}

double oracle_mae(const CovMatrix& sigma, const std::vector<int>& observed) {
    const int y = sigma.dim() - 1;
    const double var_y = sigma(y, y);
    if (observed.empty()) return kSqrt2OverPi * std::sqrt(std::max(var_y, 0.0));
    const Eigen::VectorXd w = cond_weights(sigma, y, observed);
    double explained = 0.0;
    for (std::size_t a = 0; a < observed.size(); ++a) explained += w(a) * sigma(observed[a], y);
    return kSqrt2OverPi * std::sqrt(std::max(var_y - explained, 0.0));
}

StrokeConfig StrokeConfig::defaults() {
    StrokeConfig cfg;

    // Covariate table over (gender, age, conscious state): product of mildly
    // skewed marginals, overridable by file.
    const std::vector<std::pair<double, double>> gender{{0, 0.55}, {1, 0.45}};
    const std::vector<std::pair<double, double>> age{{0, 0.6}, {1, 0.4}};
    const std::vector<std::pair<double, double>> conscious{{0, 0.25}, {1, 0.5}, {2, 0.25}};
    Eigen::MatrixXd support(12, 3);
    Eigen::VectorXd probs(12);
    int row = 0;
    for (const auto& [s, ps] : gender)
        for (const auto& [a, pa] : age)
            for (const auto& [c, pc] : conscious) {
                support.row(row) << s, a, c;
                probs(row) = ps * pa * pc;
                ++row;
            }
    cfg.covariate_table = CategoricalLaw{support, probs};

    cfg.treatment_coef = Eigen::VectorXd::Constant(3, 0.3);

    // Outcome over (S, A, Cs, aspirin, heparin); the 0.25(Cs - 1) term folds
    // into the intercept.
    Eigen::VectorXd ty = Eigen::VectorXd::Zero(16);
    ty(0) = -0.25;   // intercept
    ty(1) = 0.1;     // S
    ty(2) = -0.1;    // A
    ty(3) = 0.25;    // Cs
    ty(4) = 1.0;     // aspirin
    ty(5) = 0.75;    // heparin
    ty(6) = -3.0;    // S*A
    ty(8) = -0.1;    // S*aspirin
    ty(9) = 0.1;     // S*heparin
    ty(11) = -0.3;   // A*aspirin
    ty(12) = 0.2;    // A*heparin
    ty(14) = 0.3;    // Cs*heparin
    ty(15) = -0.45;  // aspirin*heparin
    cfg.outcome_theta = ty;
    return cfg;
}

void StrokeConfig::validate() const {
    validate_covariate_law(covariate_table);
    if (covariate_law_dim(covariate_table) != 3) throw Error("stroke config: covariate table must have 3 columns");
    if (treatment_coef.size() != 3) throw Error("stroke config: treatment_coef must have 3 entries");
    if (outcome_theta.size() != PolyBasis{5}.dim()) throw Error("stroke config: outcome_theta must have 16 entries");
    if (bounds.empty() || seeds < 1 || n_obs < 1 || n_joint < 1 || n_eval < 1)
        throw Error("stroke config: empty sweep");
    for (double b : bounds)
        if (!(b >= 0.0)) throw Error("stroke config: bounds must be nonnegative");
    fit_options.validate();
}

SymmetricAnm StrokeConfig::build_scm(const CovMatrix& sigma) const {
    const PolyBasis bx{3};
    Eigen::VectorXd tx = Eigen::VectorXd::Zero(bx.dim());
    tx.segment(1, 3) = treatment_coef;
    std::vector<StructuralEq> eqs{StructuralEq(bx, tx), StructuralEq(bx, tx)};
    return SymmetricAnm(2, 3, std::move(eqs), StructuralEq(PolyBasis{5}, outcome_theta), sigma,
                        covariate_table);
}

std::vector<MetricsRecord> run_stroke(const StrokeConfig& cfg) {
    cfg.validate();
    const int n_bounds = static_cast<int>(cfg.bounds.size());
    const int n_cells = cfg.seeds * n_bounds;
    std::vector<std::vector<MetricsRecord>> slots(n_cells);

    parallel_cells(n_cells, cfg.threads, [&](int cell) {
        const int seed_idx = cell / n_bounds;
        const int bound_idx = cell % n_bounds;
        const double b = cfg.bounds[bound_idx];
        const auto si = static_cast<std::uint64_t>(seed_idx);

        // One diagonal and one correlation pattern per seed; only the
        // off-diagonal scale varies across bounds. Shrinking the unit-diagonal
        // pattern keeps the variances fixed across the grid, so the noise
        // scale itself does not drift with the bound.
        CounterRng diag_rng(derive_seed(cfg.base_seed, {11, si}), 0);
        CounterRng off_rng(derive_seed(cfg.base_seed, {12, si}), 0);
        Eigen::Vector3d diag;
        for (int i = 0; i < 3; ++i) diag(i) = 0.1 + 0.9 * std::abs(diag_rng.next_uniform(-1.0, 1.0));
        Eigen::Matrix3d pattern = Eigen::Matrix3d::Identity();
        for (int i = 0; i < 3; ++i)
            for (int j = i + 1; j < 3; ++j) {
                // signed magnitude in [0.5, 1] so every seed carries real
                // confounding signal at nonzero bounds
                const double mag = off_rng.next_uniform(0.5, 1.0);
                const double sign = off_rng.next_double() < 0.5 ? -1.0 : 1.0;
                pattern(i, j) = pattern(j, i) = b * sign * mag;
            }
        const Eigen::Matrix3d shrunk = psd_shrink(pattern).cov.mat();
        const Eigen::Vector3d scale = diag.cwiseSqrt();
        const CovMatrix sigma(Eigen::MatrixXd(scale.asDiagonal() * shrunk * scale.asDiagonal()));
        const SymmetricAnm scm = cfg.build_scm(sigma);

        const Dataset train = Dataset::concat(
            {sample(scm, Regime::observational(), cfg.n_obs, derive_seed(cfg.base_seed, {13, si, 0})),
             sample(scm, regime_with_policy({0, 1}, cfg.joint_policy), cfg.n_joint,
                    derive_seed(cfg.base_seed, {13, si, 1}))});
        const Dataset eval = sample(scm, regime_with_policy({0}, cfg.eval_policy), cfg.n_eval,
                                    derive_seed(cfg.base_seed, {13, si, 2}));

        FitReport rep;
        bool ours_ok = true;
        try {
            rep = fit(train, cfg.fit_options);
        } catch (const std::exception&) {
            ours_ok = false;
        }
        Eigen::VectorXd theta_base;
        bool base_ok = true;
        try {
            theta_base = fit_baseline(train);
        } catch (const std::exception&) {
            base_ok = false;
        }

        const std::string label = "do(0)|b=" + bound_label(b);
        const long n = cfg.n_obs + cfg.n_joint;
        const std::vector<int> observed{1};  // heparin dose stays observed
        std::vector<MetricsRecord> out;

        MetricsRecord r_ours{"ours", label, n, seed_idx, kNaN, std::nullopt, std::nullopt,
                             ours_ok && rep.converged};
        if (ours_ok) {
            r_ours.theta_mae = (rep.theta.outcome - cfg.outcome_theta).cwiseAbs().mean();
            r_ours.sigma_mae = (rep.sigma.mat() - sigma.mat()).cwiseAbs().mean();
            try {
                r_ours.mae = prediction_mae(eval, rep.theta, rep.sigma, observed);
            } catch (const std::exception&) {
                r_ours.converged = false;
            }
        }
        out.push_back(std::move(r_ours));

        MetricsRecord r_base{"baseline", label, n, seed_idx, kNaN, std::nullopt, std::nullopt, base_ok};
        if (base_ok) {
            r_base.theta_mae = (theta_base - cfg.outcome_theta).cwiseAbs().mean();
            r_base.mae = baseline_mae(eval, theta_base);
        }
        out.push_back(std::move(r_base));

        out.push_back(MetricsRecord{"oracle", label, n, seed_idx,
                                    prediction_mae(eval, true_theta(scm), sigma, observed), std::nullopt,
                                    std::nullopt, true});
        slots[cell] = std::move(out);
    });

    std::vector<MetricsRecord> out;
    for (auto& s : slots) out.insert(out.end(), s.begin(), s.end());
    return out;
}

namespace {

struct Welford {
    std::vector<double> values;
    void add(double v) {
        if (std::isfinite(v)) values.push_back(v);
    }
    int count() const { return static_cast<int>(values.size()); }
    double mean() const {
        double s = 0.0;
        for (double v : values) s += v;
        return values.empty() ? kNaN : s / static_cast<double>(values.size());
    }
    double ci95() const {
        if (values.size() < 2) return 0.0;
        const double mu = mean();
        double ss = 0.0;
        for (double v : values) ss += (v - mu) * (v - mu);
        const double sd = std::sqrt(ss / static_cast<double>(values.size() - 1));
        return 1.96 * sd / std::sqrt(static_cast<double>(values.size()));
    }
};

std::string opt_str(const std::optional<double>& v) {
    return v && std::isfinite(*v) ? format_double(*v) : "";
}

}  // namespace

std::vector<AggregateRecord> aggregate_metrics(const std::vector<MetricsRecord>& records) {
    std::map<std::tuple<std::string, std::string, long>, std::tuple<Welford, Welford, Welford>> groups;
    for (const auto& r : records) {
        auto& [mae, theta, sigma] = groups[{r.method, r.regime, r.n}];
        mae.add(r.mae);
        if (r.theta_mae) theta.add(*r.theta_mae);
        if (r.sigma_mae) sigma.add(*r.sigma_mae);
    }
    std::vector<AggregateRecord> out;
    for (const auto& [key, w] : groups) {
        const auto& [mae, theta, sigma] = w;
        AggregateRecord a;
        a.method = std::get<0>(key);
        a.regime = std::get<1>(key);
        a.n = std::get<2>(key);
        a.count = mae.count();
        a.mae_mean = mae.mean();
        a.mae_ci95 = mae.ci95();
        if (theta.count() > 0) {
            a.theta_mae_mean = theta.mean();
            a.theta_mae_ci95 = theta.ci95();
        }
        if (sigma.count() > 0) {
            a.sigma_mae_mean = sigma.mean();
            a.sigma_mae_ci95 = sigma.ci95();
        }
        out.push_back(std::move(a));
    }
    return out;
}

std::string metrics_to_csv(const std::vector<MetricsRecord>& records) {
    std::ostringstream os;
    os << "method,regime,n,seed,mae,theta_mae,sigma_mae,converged\n";
    for (const auto& r : records) {
        os << r.method << ',' << r.regime << ',' << r.n << ',' << r.seed << ','
           << (std::isfinite(r.mae) ? format_double(r.mae) : "") << ',' << opt_str(r.theta_mae) << ','
           << opt_str(r.sigma_mae) << ',' << (r.converged ? 1 : 0) << '\n';
    }
    return os.str();
}

std::vector<MetricsRecord> metrics_from_csv(const std::string& text, const std::string& filename) {
    std::istringstream is(text);
    std::string line;
    long line_no = 0;
    std::vector<MetricsRecord> out;
    while (std::getline(is, line)) {
        ++line_no;
        if (line_no == 1) {
            if (line != "method,regime,n,seed,mae,theta_mae,sigma_mae,converged")
                throw ParseError("unexpected metrics CSV header", filename, line_no);
            continue;
        }
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::string cur;
        for (char ch : line) {
            if (ch == ',') {
                fields.push_back(cur);
                cur.clear();
            } else {
                cur += ch;
            }
        }
        fields.push_back(cur);
        if (fields.size() != 8) throw ParseError("expected 8 fields", filename, line_no);
        try {
            MetricsRecord r;
            r.method = fields[0];
            r.regime = fields[1];
            r.n = std::stol(fields[2]);
            r.seed = std::stoi(fields[3]);
            r.mae = fields[4].empty() ? kNaN : std::stod(fields[4]);
            if (!fields[5].empty()) r.theta_mae = std::stod(fields[5]);
            if (!fields[6].empty()) r.sigma_mae = std::stod(fields[6]);
            r.converged = fields[7] == "1";
            out.push_back(std::move(r));
        } catch (const std::invalid_argument&) {
            throw ParseError("malformed numeric field", filename, line_no);
        } catch (const std::out_of_range&) {
            throw ParseError("numeric field out of range", filename, line_no);
        }
    }
    return out;
}

std::string aggregates_to_csv(const std::vector<AggregateRecord>& aggregates) {
    std::ostringstream os;
    os << "method,regime,n,seeds,mae_mean,mae_ci95,theta_mae_mean,theta_mae_ci95,sigma_mae_mean,sigma_mae_ci95\n";
    for (const auto& a : aggregates) {
        os << a.method << ',' << a.regime << ',' << a.n << ',' << a.count << ','
           << (std::isfinite(a.mae_mean) ? format_double(a.mae_mean) : "") << ',' << format_double(a.mae_ci95)
           << ',' << opt_str(a.theta_mae_mean) << ',' << opt_str(a.theta_mae_ci95) << ','
           << opt_str(a.sigma_mae_mean) << ',' << opt_str(a.sigma_mae_ci95) << '\n';
    }
    return os.str();
}

std::string format_metrics_table(const std::vector<AggregateRecord>& aggregates) {
    std::vector<std::string> methods;
    std::map<std::pair<std::string, long>, std::map<std::string, double>> rows;
    for (const auto& a : aggregates) {
        if (std::find(methods.begin(), methods.end(), a.method) == methods.end()) methods.push_back(a.method);
        rows[{a.regime, a.n}][a.method] = a.mae_mean;
    }
    std::sort(methods.begin(), methods.end());

    std::ostringstream os;
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%-18s %8s", "regime", "n");
    os << buf;
    for (const auto& m : methods) {
        std::snprintf(buf, sizeof(buf), " %12s", m.c_str());
        os << buf;
    }
    os << '\n';
    for (const auto& [key, cells] : rows) {
        std::snprintf(buf, sizeof(buf), "%-18s %8ld", key.first.c_str(), key.second);
        os << buf;
        for (const auto& m : methods) {
            auto it = cells.find(m);
            if (it == cells.end() || !std::isfinite(it->second))
                std::snprintf(buf, sizeof(buf), " %12s", "-");
            else
                std::snprintf(buf, sizeof(buf), " %12.4f", it->second);
            os << buf;
        }
        os << '\n';
    }
    return os.str();
}

}  // namespace disentangle

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "disentangle/estimate.hpp"
#include "disentangle/model.hpp"

namespace disentangle {

struct SyntheticConfig {
    int K = 4;
    int covariate_dim = 4;
    std::vector<long> sample_sizes = {32, 64, 128, 256, 512, 1024, 2048, 4096, 8192};
    std::vector<std::vector<int>> training_regimes = {{}, {0, 1}, {1, 2}, {2, 3}};
    int seeds = 10;
    long eval_draws = 10000;
    FitOptions fit_options;
    std::pair<double, double> theta_range = {-2.0, 2.0};
    std::pair<double, double> cov_range = {-1.0, 1.0};
    std::uint64_t base_seed = 0;
    int threads = 1;

    void validate() const;
};

struct MetricsRecord {
    std::string method;  // ours | baseline | oracle
    std::string regime;
    long n = 0;
    int seed = 0;
    double mae = 0.0;  // NaN when the cell failed
    std::optional<double> theta_mae;
    std::optional<double> sigma_mae;
    bool converged = true;
};

struct StrokeConfig {
    CategoricalLaw covariate_table;         // (gender, age, conscious state)
    Eigen::VectorXd treatment_coef;         // linear coefficient per covariate, both treatments
    Eigen::VectorXd outcome_theta;          // 16 coefficients over (S, A, Cs, aspirin, heparin)
    std::vector<double> bounds = {0.0, 0.2, 0.4, 0.6, 0.8};
    long n_obs = 512;
    long n_joint = 512;
    long n_eval = 5000;
    int seeds = 5;
    ValuePolicy joint_policy = ValuePolicy::normal(0.0, 1.0);  // training dosages
    ValuePolicy eval_policy = ValuePolicy::normal(0.0, 2.0);   // evaluated aspirin dosages
    FitOptions fit_options;
    std::uint64_t base_seed = 0;
    int threads = 1;

    static StrokeConfig defaults();
    void validate() const;
    SymmetricAnm build_scm(const CovMatrix& sigma) const;
};

/// Scaled replication of the synthetic protocol: per seed and sample size,
/// fit on the pooled training regimes and score MAE of the predicted outcome
/// on fresh draws from the true SCM under every one of the 2^K intervention
/// sets, for ours / the pooled-regression baseline / the true-model oracle.
std::vector<MetricsRecord> run_synthetic(const SyntheticConfig& cfg);

/// Bayes-optimal MAE: sqrt(2/pi) times the conditional standard deviation of
/// the outcome noise given the observed treatments' noise. The outcome slot
/// is the last index of sigma.
double oracle_mae(const CovMatrix& sigma, const std::vector<int>& observed);

/// Confounding sweep on the semi-synthetic stroke setup: per bound, draw a
/// noise covariance with off-diagonals scaled to the bound, train on
/// obs + joint-interventional data, evaluate under single interventions on
/// the aspirin dose.
std::vector<MetricsRecord> run_stroke(const StrokeConfig& cfg);

struct AggregateRecord {
    std::string method;
    std::string regime;
    long n = 0;
    int count = 0;
    double mae_mean = 0.0;
    double mae_ci95 = 0.0;
    std::optional<double> theta_mae_mean, theta_mae_ci95;
    std::optional<double> sigma_mae_mean, sigma_mae_ci95;
};

std::vector<AggregateRecord> aggregate_metrics(const std::vector<MetricsRecord>& records);

std::string metrics_to_csv(const std::vector<MetricsRecord>& records);
std::vector<MetricsRecord> metrics_from_csv(const std::string& text, const std::string& filename = "<string>");
std::string aggregates_to_csv(const std::vector<AggregateRecord>& aggregates);

/// method x regime x n -> mean MAE, printable.
std::string format_metrics_table(const std::vector<AggregateRecord>& aggregates);

}  // namespace disentangle

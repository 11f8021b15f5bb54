#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "disentangle/gaussian.hpp"

namespace disentangle {

/// Second-order polynomial feature map over d inputs: intercept, linear
/// terms, and distinct pairwise products (no squares). Dimension is
/// 1 + d + d(d-1)/2, which reproduces 11 at d=4 and 37 at d=8.
struct PolyBasis {
    int arity = 0;

    int dim() const { return 1 + arity + arity * (arity - 1) / 2; }
};

/// [1, z_1..z_d, z_1 z_2, ..., z_{d-1} z_d] with pairs in lexicographic
/// (i<j) order. The order is frozen: serialized coefficient vectors depend
/// on it.
Eigen::VectorXd features(const PolyBasis& basis, const Eigen::Ref<const Eigen::VectorXd>& z);

struct StructuralEq {
    PolyBasis basis;
    Eigen::VectorXd theta;

    StructuralEq() = default;
    StructuralEq(PolyBasis b, Eigen::VectorXd t);

    double eval(const Eigen::Ref<const Eigen::VectorXd>& z) const;
};

struct StdNormalLaw {
    int dim = 0;
};

/// Finite support over covariate vectors; rows of `support` are the points.
struct CategoricalLaw {
    Eigen::MatrixXd support;  // rows x dim
    Eigen::VectorXd probs;    // sums to 1
};

using CovariateLaw = std::variant<StdNormalLaw, CategoricalLaw>;

int covariate_law_dim(const CovariateLaw& law);
void validate_covariate_law(const CovariateLaw& law);

/// ANM with no causal links between treatments: X_i = f_i(C) + U_i,
/// Y = f_Y(C, X) + U_Y, noise (U_1..U_K, U_Y) ~ N(0, sigma), C independent
/// of U.
struct SymmetricAnm {
    int K = 0;
    int covariate_dim = 0;
    std::vector<StructuralEq> treatment_eqs;  // K equations over C
    StructuralEq outcome_eq;                  // over (C, X)
    CovMatrix sigma;                          // dim K+1, slots U_1..U_K, U_Y
    CovariateLaw covariate_law;

    SymmetricAnm(int k, int m, std::vector<StructuralEq> eqs, StructuralEq outcome, CovMatrix s,
                 CovariateLaw law);
};

/// Two-treatment chain: X_i = f_i(C) + U_i, X_j = f_j(C, X_i) + U_j,
/// Y = f_Y(C, X_i, X_j) + U_Y. Treatment slot 0 is the cause, slot 1 the
/// consequence.
struct AsymmetricPair {
    int covariate_dim = 0;
    StructuralEq cause_eq;        // f_i over C
    StructuralEq consequence_eq;  // f_j over (C, X_i)
    StructuralEq outcome_eq;      // f_Y over (C, X_i, X_j)
    CovMatrix sigma;              // dim 3: U_i, U_j, U_Y
    CovariateLaw covariate_law;

    AsymmetricPair(int m, StructuralEq cause, StructuralEq consequence, StructuralEq outcome,
                   CovMatrix s, CovariateLaw law);
};

/// How an intervened treatment's value is chosen during generation.
struct ValuePolicy {
    enum class Kind { Fixed, Normal };
    Kind kind = Kind::Normal;
    double value = 0.0;  // Fixed
    double mean = 0.0;   // Normal
    double sd = 1.0;

    static ValuePolicy fixed(double v);
    static ValuePolicy normal(double mean = 0.0, double sd = 1.0);
};

/// An intervention set with per-index value policies. The empty set is the
/// observational regime; the outcome is never a member.
struct Regime {
    std::vector<int> intervened;        // sorted, unique
    std::vector<ValuePolicy> policies;  // parallel to intervened

    static Regime observational();
    static Regime sampled(std::vector<int> indices, double mean = 0.0, double sd = 1.0);
    static Regime fixed(const std::vector<std::pair<int, double>>& values);

    bool is_observational() const { return intervened.empty(); }
    bool intervenes(int i) const;
    std::string label() const;  // "obs" or "do(0+1)"
};

/// Tagged samples pooled across regimes, stored column-wise.
struct Dataset {
    Eigen::MatrixXd covariates;  // n x m
    Eigen::MatrixXd treatments;  // n x K
    Eigen::VectorXd outcome;     // n
    Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic> intervened;  // n x K
    std::vector<int> regime_id;  // n, indexes `regimes`
    std::vector<Regime> regimes;

    long n() const { return outcome.size(); }
    int m() const { return static_cast<int>(covariates.cols()); }
    int K() const { return static_cast<int>(treatments.cols()); }

    void validate() const;
    static Dataset concat(const std::vector<Dataset>& parts);
};

Dataset sample(const SymmetricAnm& scm, const Regime& regime, long n, std::uint64_t seed);
Dataset sample(const AsymmetricPair& scm, const Regime& regime, long n, std::uint64_t seed);

/// Sampler output plus the full jointly-drawn noise matrix (n x K+1); the
/// noise of an intervened slot is drawn but never consumed.
struct SampleWithNoise {
    Dataset data;
    Eigen::MatrixXd noise;
};

SampleWithNoise sample_with_noise(const SymmetricAnm& scm, const Regime& regime, long n,
                                  std::uint64_t seed);
SampleWithNoise sample_with_noise(const AsymmetricPair& scm, const Regime& regime, long n,
                                  std::uint64_t seed);

/// Random symmetric ANM: theta entries i.i.d. uniform over theta_range;
/// raw sigma uniform over cov_range, symmetrized, diagonal replaced by
/// |draw| + 0.1, then PSD-shrunk. Covariates are independent standard
/// normal.
SymmetricAnm random_scm(int K, int covariate_dim, std::pair<double, double> theta_range,
                        std::pair<double, double> cov_range, std::uint64_t seed);

/// Ground-truth interventional mean: f_Y(c, x).
double true_mean(const SymmetricAnm& scm, const Eigen::VectorXd& c, const Eigen::VectorXd& x);

}  // namespace disentangle

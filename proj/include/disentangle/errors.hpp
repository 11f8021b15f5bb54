#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace disentangle {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Input matrix is not symmetric, or indefinite beyond tolerance.
struct InvalidCovarianceError : Error {
    using Error::Error;
};

/// Conditioning submatrix stayed singular after ridge regularization.
struct SingularConditioningError : Error {
    SingularConditioningError(std::string msg, std::vector<int> idx)
        : Error(std::move(msg)), indices(std::move(idx)) {}
    std::vector<int> indices;
};

/// A column pair of a residual table has fewer than two joint observations.
struct InsufficientOverlapError : Error {
    InsufficientOverlapError(std::string msg, int a, int b)
        : Error(std::move(msg)), col_a(a), col_b(b) {}
    int col_a, col_b;
};

/// Identity shrinkage cannot reach a PSD matrix (mean diagonal not positive).
struct UnshrinkableError : Error {
    using Error::Error;
};

struct InvalidDataError : Error {
    InvalidDataError(std::string msg, long record)
        : Error(std::move(msg)), record_index(record) {}
    long record_index;
};

/// Optimizer objective decreased for too many consecutive steps.
struct OptimizationFailureError : Error {
    OptimizationFailureError(std::string msg, std::vector<double> obj_trace)
        : Error(std::move(msg)), trace(std::move(obj_trace)) {}
    std::vector<double> trace;
};

/// Design matrix rank-deficient beyond the ridge for the named equation.
struct UnderdeterminedError : Error {
    UnderdeterminedError(std::string msg, std::string eq)
        : Error(std::move(msg)), equation(std::move(eq)) {}
    std::string equation;
};

struct ConfigError : Error {
    ConfigError(std::string msg, std::string ptr)
        : Error(msg + " (at " + ptr + ")"), pointer(std::move(ptr)) {}
    std::string pointer;
};

struct ParseError : Error {
    ParseError(std::string msg, std::string f, long ln)
        : Error(f + ":" + std::to_string(ln) + ": " + msg), file(std::move(f)), line(ln) {}
    std::string file;
    long line;
};

}  // namespace disentangle

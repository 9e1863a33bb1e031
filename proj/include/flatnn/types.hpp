#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace flatnn {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Points are column vectors; point sets are d x n matrices (one column per
// point) so batched projections and Gram products stay single GEMM calls.

struct DimensionMismatch : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct DegenerateInput : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct EmptyInput : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct InvalidParams : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct NoConvergence : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Raised when a query's grid/patch enumeration would exceed its budget.
// Callers catch it and fall back to an exact linear scan.
struct BudgetExceeded : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct CorruptFile : IoError {
    using IoError::IoError;
};

struct VersionMismatch : IoError {
    using IoError::IoError;
};

inline void require(bool cond, const char* what) {
    if (!cond) throw InvalidParams(what);
}

}  // namespace flatnn

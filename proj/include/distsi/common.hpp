#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <stdexcept>
#include <string>
#include <vector>

namespace distsi {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using IndexList = std::vector<int>;

// Error categories map onto the CLI exit-code contract:
// config -> 2, data -> 3, numeric -> 4.
enum class ErrorCategory { config, data, numeric };

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory cat, const std::string& msg)
      : std::runtime_error(msg), cat_(cat) {}
  ErrorCategory category() const { return cat_; }

 private:
  ErrorCategory cat_;
};

#define DISTSI_DEFINE_ERROR(NAME, CATEGORY)                      \
  class NAME : public Error {                                    \
   public:                                                       \
    explicit NAME(const std::string& msg)                        \
        : Error(ErrorCategory::CATEGORY, std::string(#NAME ": ") + msg) {} \
  }

DISTSI_DEFINE_ERROR(ConfigError, config);
DISTSI_DEFINE_ERROR(DataError, data);
DISTSI_DEFINE_ERROR(ProtocolError, data);
DISTSI_DEFINE_ERROR(InvalidInputError, data);
DISTSI_DEFINE_ERROR(SingularDesignError, numeric);
DISTSI_DEFINE_ERROR(SeparationError, numeric);
DISTSI_DEFINE_ERROR(SingularInformationError, numeric);
DISTSI_DEFINE_ERROR(KktViolationError, numeric);
DISTSI_DEFINE_ERROR(DegenerateGeometryError, numeric);
DISTSI_DEFINE_ERROR(SolverError, numeric);
DISTSI_DEFINE_ERROR(EmptyModelError, numeric);
DISTSI_DEFINE_ERROR(NoHoldoutError, numeric);
DISTSI_DEFINE_ERROR(InsufficientHoldoutError, numeric);
DISTSI_DEFINE_ERROR(TuningError, numeric);

#undef DISTSI_DEFINE_ERROR

// --- index-set helpers -------------------------------------------------

/// Sorted complement of E within {0, ..., p-1}.
IndexList complement(int p, const IndexList& E);

/// Positions of `sub` within `super`; throws if an element is missing.
IndexList positions_in(const IndexList& sub, const IndexList& super);

bool is_subset(const IndexList& sub, const IndexList& super);

Vector slice(const Vector& v, const IndexList& idx);
Matrix slice(const Matrix& A, const IndexList& rows, const IndexList& cols);
Matrix slice_rows(const Matrix& A, const IndexList& rows);

// --- SPD linear algebra -------------------------------------------------

/// Cholesky solve A X = B for SPD A; throws the supplied error type on
/// failure (no pseudo-inverse fallback).
Matrix spd_solve(const Matrix& A, const Matrix& B, const char* context);
Vector spd_solve(const Matrix& A, const Vector& b, const char* context);
Matrix spd_inverse(const Matrix& A, const char* context);

/// Like spd_solve but reports SingularInformationError (MLE aggregation).
Vector info_solve(const Matrix& A, const Vector& b, const char* context);

double min_eigenvalue(const Matrix& A);

inline Matrix symmetrized(const Matrix& A) { return 0.5 * (A + A.transpose()); }

}  // namespace distsi

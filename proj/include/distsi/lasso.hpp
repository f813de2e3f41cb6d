#pragma once

#include "distsi/glm.hpp"

namespace distsi {

/// Diagonal of the penalty matrix Lambda; strictly positive weights.
struct PenaltySpec {
  Vector lambda;

  static PenaltySpec uniform(int p, double value);
  void validate(int p) const;
};

/// KKT data extracted from a converged weighted-Lasso solve.
/// gamma is the full subgradient of the penalty in original indexing:
/// lambda_j * S_j on the active set, lambda_j * Z_j elsewhere, and
/// -grad(loss) = gamma at the solution.
struct SelectionSummary {
  IndexList E;
  Vector S;      // signs on E, entries in {-1, +1}
  Vector B;      // nonzero coefficients on E
  Vector Z;      // inactive subgradient, ordered by original index
  Vector gamma;  // length p
};

/// Per-node loss scale: the node loss is
///   (1 / (sqrt(n_total) * rho_k)) * sum_i {A(x_i' beta) - y_i x_i' beta}.
double lasso_loss_scale(int n_total, int n_k);

/// Gradient of the scaled node loss at beta.
Vector lasso_gradient(const Dataset& data, const FamilySpec& family,
                      int n_total, const Vector& beta);

/// Solve min loss(beta) + ||Lambda beta||_1 to KKT residual < 1e-8.
/// Gaussian losses use cyclic coordinate descent; logistic losses use
/// accelerated proximal gradient with an active-set Newton polish.
Vector solve_weighted_lasso(const Dataset& data, const PenaltySpec& penalty,
                            const FamilySpec& family, int n_total);

/// Read off E, S, B, Z, gamma from a solution and its exact loss gradient.
/// Inactive |Z_j| in (1, 1+1e-6] is clipped to sign(Z_j); larger throws.
SelectionSummary extract_selection(const Vector& beta_hat, const Vector& grad,
                                   const PenaltySpec& penalty);

/// Max KKT violation: active |grad_j + lambda_j sign(beta_j)|,
/// inactive max(0, |grad_j| - lambda_j).
double check_kkt(const Dataset& data, const PenaltySpec& penalty,
                 const FamilySpec& family, int n_total, const Vector& beta_hat);

/// Sweep lambda = t * sqrt(2 log p) * sd(y_train) over the grid of t values;
/// fit on train, score validation deviance, return the minimizer
/// (ties broken toward the smallest t).
PenaltySpec tune_lambda(const Dataset& train, const Dataset& validation,
                        const FamilySpec& family,
                        const std::vector<double>& grid);

/// Mean deviance-scale score of a coefficient vector on a dataset.
double deviance_score(const Dataset& data, const FamilySpec& family,
                      const Vector& beta);

// Process-wide audit of solver quality, used by the acceptance suite to
// assert the KKT contract over every solve in a run. Thread safe.
namespace kkt_audit {
void reset();
void record_residual(double r);
void record_inactive_z(double abs_z);
double max_residual();
double max_inactive_z();
long solve_count();
}  // namespace kkt_audit

}  // namespace distsi

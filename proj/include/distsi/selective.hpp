#pragma once

#include "distsi/bundle.hpp"
#include "distsi/glm.hpp"
#include "distsi/lasso.hpp"

namespace distsi {

struct BarrierEval {
  double value = 0.0;
  Vector grad;
  Vector hess_diag;
};

/// Smooth orthant barrier sum_j log(1 + 1/(S_j V_j)); +infinity whenever
/// some S_j V_j <= 0. Gradient and (diagonal) Hessian in closed form.
BarrierEval barrier(const Vector& V, const Vector& S);

struct OptResult {
  Vector V_star;        // sqrt(n)-scaled minimizer, blockwise signs equal S
  double grad_norm = 0.0;
  Matrix barrier_hess;  // diagonal Hessian of the barrier at V_star
  int iterations = 0;
};

/// Damped Newton solve of the barrier-penalized quadratic
///   0.5 (W - Psi sqrt(n) beta_E - tau)' Gamma_inv (.) + Barr(W)
/// over W = sqrt(n) V, initialized at the observed sqrt(n) B.
OptResult solve_selection_opt(const MatrixBundle& bundle, const Vector& beta_E,
                              int n, const Vector& B_init);

/// Selection-corrected MLE (returned on the beta scale, i.e. divided by
/// sqrt(n)).
Vector selective_mle(const MatrixBundle& bundle, const Vector& beta_E,
                     const OptResult& opt, int n, const Matrix& I_EE);

/// Selection-corrected observed Fisher information.
Matrix selective_fisher(const MatrixBundle& bundle, const OptResult& opt,
                        const Matrix& I_EE);

enum class Method { dist_si, splitting, naive };
const char* method_name(Method m);

struct InferenceRow {
  int coef = 0;  // original predictor index
  double estimate = 0.0;
  double stderr_ = 0.0;  // sigma_hat_j / sqrt(n)
  double pvalue = 1.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  Method method = Method::dist_si;
};

struct InferenceReport {
  std::vector<InferenceRow> rows;
  int n = 0;
  double alpha = 0.1;
};

/// Wald-style two-sided p-values and intervals from an estimate and an
/// information matrix on the sqrt(n) scale.
InferenceReport infer(const Vector& estimate, const Matrix& fisher,
                      const IndexList& E, int n, double alpha, Method method);

/// Unadjusted GLM inference on the supplied rows (naive: pooled data;
/// splitting: holdout only). Gaussian dispersion in estimate mode uses
/// RSS / (n - d).
InferenceReport baseline_infer(Method kind, const Matrix& X, const Vector& y,
                               const IndexList& E, const FamilySpec& family,
                               double alpha);

/// KKT-based reconstruction of node k's randomization vector:
///   I_{.,E^(k)} sqrt(n) B - I_{.,E} sqrt(n) beta_E + gamma
///   + sqrt(n) * (residual score padded off E),
/// with the empirical information matrix in place of the population one.
/// Exact for the gaussian family.
Vector reconstruct_randomization(const SelectionSummary& selection,
                                 const Vector& beta_E, const IndexList& E,
                                 const Vector& beta_perp, const Matrix& I_full,
                                 int n);

}  // namespace distsi

#pragma once

#include "distsi/common.hpp"

namespace distsi {

enum class Family { gaussian, bernoulli_logit };
enum class DispersionMode { known, estimate };

/// Exponential family spec: cumulant A(.), dispersion handling.
///
/// The loss everywhere in this library is written in the sigma^2 = 1
/// convention; where the dispersion matters (gaussian only) Fisher
/// information and score-scale quantities are divided by sigma^2 (known) or
/// by the pooled estimate sigma_hat^2 = RSS / (n - d) computed at the
/// aggregated MLE. The logistic family always has dispersion 1.
struct FamilySpec {
  Family kind = Family::gaussian;
  double dispersion = 1.0;
  DispersionMode dispersion_mode = DispersionMode::known;

  static FamilySpec gaussian(double sigma2 = 1.0,
                             DispersionMode mode = DispersionMode::known);
  static FamilySpec logistic();

  bool is_gaussian() const { return kind == Family::gaussian; }
};

struct FamilyEval {
  double A;   // cumulant
  double A1;  // mean
  double A2;  // variance
};

/// Cumulant and its first two derivatives at eta; stable for |eta| up to 700.
FamilyEval family_eval(const FamilySpec& family, double eta);

/// Vectorized helpers over a linear predictor.
Vector cumulant_mean(const FamilySpec& family, const Vector& eta);
Vector cumulant_var(const FamilySpec& family, const Vector& eta);
double cumulant_sum(const FamilySpec& family, const Vector& eta);

/// One node's share of the data.
struct Dataset {
  Matrix X;
  Vector y;
  int node_id = 0;

  int n() const { return static_cast<int>(X.rows()); }
  int p() const { return static_cast<int>(X.cols()); }

  /// Shape/finiteness checks; logit responses must be exactly 0 or 1.
  void validate(const FamilySpec& family) const;
};

struct GlmFit {
  Vector beta;
  Matrix obs_fi;  // (1/n_k) X^T W X / dispersion, symmetric positive definite
  bool converged = false;
  int iterations = 0;
};

/// MLE in the selected GLM by damped Newton (IRLS); gaussian solves in one
/// step. Convergence: inf-norm of the (1/n_k)-scaled gradient < 1e-10.
GlmFit fit_glm(const Matrix& X_E, const Vector& y, const FamilySpec& family);

/// Observed Fisher information (1/n_k) X^T diag(A''(X beta)) X / dispersion.
Matrix obs_fisher(const Matrix& X_E, const Vector& beta,
                  const FamilySpec& family);

struct AggregatedMle {
  Vector beta_E;
  Matrix info;  // information-weighted average of the node obs-FI matrices
};

/// One-shot merge of local MLEs: I = sum_k rho_k I^(k),
/// beta = I^{-1} sum_k rho_k I^(k) beta^(k).
AggregatedMle aggregate_mle(const std::vector<GlmFit>& fits,
                            const std::vector<double>& rho);

/// Residual-score statistic (1/n) X_{-E}^T (A'(X_E beta_E) - y), the
/// empirical version of the off-model score at the aggregated MLE.
Vector residual_score(const Matrix& X, const Vector& y, const Vector& beta_E,
                      const IndexList& E, const FamilySpec& family);

}  // namespace distsi

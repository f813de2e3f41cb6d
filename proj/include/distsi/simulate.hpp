#pragma once

#include "distsi/protocol.hpp"
#include "distsi/rng.hpp"

#include <string>

namespace distsi {

/// i.i.d. rows from N(0, Sigma) with Sigma_ij = ar_rho^{|i-j|}, generated
/// by the AR(1) recursion x_j = ar_rho x_{j-1} + sqrt(1-ar_rho^2) eps_j.
Matrix gen_design(int n, int p, double ar_rho, CounterRng& rng);

/// s uniformly placed nonzero coefficients of magnitude sqrt(2 c log p)
/// with random signs.
Vector make_beta(int p, int s, double c, CounterRng& rng);

/// Gaussian: y = X beta + eps (unit noise); logit: Bernoulli(sigmoid).
Vector gen_response(const Matrix& X, const Vector& beta,
                    const FamilySpec& family, CounterRng& rng);

struct ScenarioConfig {
  FamilySpec family = FamilySpec::gaussian(1.0, DispersionMode::estimate);
  int K = 2;
  int n_k = 1000;  // samples per local machine
  int n0 = 1000;   // holdout at the central machine
  int p = 100;
  double ar_rho = 0.9;
  int sparsity = 5;
  double signal = 0.1;  // c in +-sqrt(2 c log p)
  int reps = 100;
  std::uint64_t seed = 0;
  std::vector<Method> methods = {Method::dist_si, Method::splitting,
                                 Method::naive};
  AggregationRule rule;
  std::vector<double> lambda_grid = {0.5, 1.0, 1.5, 2.0, 2.5,
                                     3.0, 3.5, 4.0, 4.5, 5.0};
  double alpha = 0.1;
  int threads = 1;
  /// Sample size of the numeric projected-target oracle (logit families).
  int target_oracle_n = 200000;

  void validate() const;
};

struct MetricsRow {
  int rep = 0;
  Method method = Method::dist_si;
  int coef = 0;
  int covered = 0;
  double length = 0.0;
  int detected = 0;
  int model_size = 0;
};

struct MethodSummary {
  Method method = Method::dist_si;
  double coverage = 0.0;
  double coverage_se = 0.0;
  double mean_length = 0.0;
  double power = 0.0;
};

struct ScenarioResult {
  std::vector<MetricsRow> rows;       // merged in replicate order
  std::vector<MethodSummary> summary;
  int failures = 0;                   // replicates excluded due to errors
};

/// Population minimizer of the selected-model regression (the coverage
/// target): closed form for the gaussian family, large-sample numeric
/// oracle for the logistic family.
Vector projected_target(const Vector& beta, const IndexList& E,
                        const FamilySpec& family, double ar_rho,
                        int oracle_n, CounterRng& rng);

ScenarioResult run_scenario(const ScenarioConfig& config);

}  // namespace distsi

#pragma once

#include "distsi/selective.hpp"

namespace distsi {

struct MultisplitConfig {
  int B = 5;            // replicates
  int K = 1;            // subsets per replicate
  int n1 = 0;           // subset size
  double gamma_min = 0.05;
  double alpha = 0.1;
  std::uint64_t seed = 0;

  void validate(int n) const;
};

struct PvalueMatrix {
  Matrix p;  // B x p, entries in [0,1]; unselected coordinates are 1

  void validate() const;
};

/// One replicate of the conditional procedure: K with-replacement subsets
/// select base models, the union model is fit on the full data, and
/// selective p-values come from the with-replacement bundle. Coordinates
/// outside the model (and any replicate whose model is empty or wider than
/// the sample) report p = 1.
Vector run_replicate(const Dataset& data, const MultisplitConfig& config,
                     const FamilySpec& family, const PenaltySpec& penalty,
                     int replicate_index);

/// One replicate of the classical multi-splitting baseline: selection on a
/// subset, Wald p-values on the complementary rows.
Vector run_replicate_splitting(const Dataset& data,
                               const MultisplitConfig& config,
                               const FamilySpec& family,
                               const PenaltySpec& penalty,
                               int replicate_index);

/// Quantile aggregation: Q_j(gamma) = min(1, q_gamma{p^b_j / gamma}) with
/// q_gamma the ceil(gamma B)-th order statistic, and
/// P_j = min(1, (1 - log gamma_min) inf_{gamma in (gamma_min, 1)} Q_j(gamma)),
/// the infimum taken exactly over the order-statistic breakpoints.
Vector aggregate_pvalues(const PvalueMatrix& P, double gamma_min);

/// Diagnostic odds ratio (TP*TN)/(FP*FN); Haldane +0.5 on every cell when
/// any cell is zero.
double dor(const std::vector<bool>& predicted, const std::vector<bool>& truth);

struct MultisplitResult {
  Vector P;                  // aggregated p-values, length p
  std::vector<bool> reject;  // P_j < alpha
  PvalueMatrix replicates;
};

MultisplitResult run_multisplit(const Dataset& data,
                                const MultisplitConfig& config,
                                const FamilySpec& family,
                                const PenaltySpec& penalty);

/// Same driver for the multi-splitting baseline.
MultisplitResult run_multisplit_baseline(const Dataset& data,
                                         const MultisplitConfig& config,
                                         const FamilySpec& family,
                                         const PenaltySpec& penalty);

}  // namespace distsi

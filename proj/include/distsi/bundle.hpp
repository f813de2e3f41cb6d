#pragma once

#include "distsi/common.hpp"

#include <optional>

namespace distsi {

/// The central machine's working matrices for selective inference.
/// Blocks of Gamma_inv are indexed by the per-node selected sets; `blocks`
/// gives (offset, length) of node k's coordinates inside the stacked
/// d_bar-dimensional space.
struct MatrixBundle {
  Matrix Gamma_inv;  // d_bar x d_bar, SPD
  Matrix Psi;        // d_bar x d
  Vector tau;        // d_bar
  Matrix Theta_inv;  // d x d, SPD
  Matrix Theta;      // d x d
  Matrix Pi;         // d x d (Theta * I_EE)
  Vector kappa;      // d
  Vector S;          // d_bar stacked sign vector
  std::vector<double> rho;                 // rho_0 ... rho_K
  std::vector<std::pair<int, int>> blocks; // per local node
  IndexList E;
  std::vector<IndexList> E_sets;

  int d_bar() const { return static_cast<int>(S.size()); }
  int d() const { return static_cast<int>(kappa.size()); }
};

/// Everything the central machine needs to build the bundle. All entries
/// must share one score scale (information and subgradients divided by the
/// same dispersion).
struct AssemblyInputs {
  Matrix info;               // aggregated obs-FI over `support`
  IndexList support;         // sorted superset of E and of every E^(k)
  IndexList E;
  std::vector<IndexList> E_sets;    // per local node, may be empty sets
  std::vector<Vector> gammas;       // per local node, over `support`
  std::vector<Vector> signs;        // per local node, length |E^(k)|
  std::vector<double> rho;          // rho_0 ... rho_K, sums to 1
  // General aggregation rules: sqrt(n) * residual score over `support`
  // (zero on E coordinates). Required whenever some E^(k) is not inside E.
  std::optional<Vector> compensation_sqrt_n;
};

/// Closed-form block assembly for disjoint node partitions.
MatrixBundle assemble_matrices(const AssemblyInputs& in);

/// Variant for subsets drawn with replacement: every subset has the same
/// sample fraction rho_subset, Gamma_inv is block diagonal and Theta_inv
/// picks up the factor (1 + K rho/(1-rho)).
MatrixBundle assemble_matrices_wr(const AssemblyInputs& in, double rho_subset);

}  // namespace distsi

#include "distsi/bundle.hpp"

#include <Eigen/Cholesky>

#include <cmath>

namespace distsi {

namespace {

struct Layout {
  int d_bar = 0;
  int d = 0;
  std::vector<std::pair<int, int>> blocks;
  std::vector<IndexList> E_pos;  // per node, positions of E^(k) in support
  IndexList E_in_support;
};

Layout make_layout(const AssemblyInputs& in) {
  Layout lay;
  lay.d = static_cast<int>(in.E.size());
  lay.E_in_support = positions_in(in.E, in.support);
  int off = 0;
  for (const auto& Ek : in.E_sets) {
    lay.blocks.emplace_back(off, static_cast<int>(Ek.size()));
    off += static_cast<int>(Ek.size());
    lay.E_pos.push_back(positions_in(Ek, in.support));
  }
  lay.d_bar = off;
  return lay;
}

void validate_inputs(const AssemblyInputs& in, bool with_replacement) {
  const int K = static_cast<int>(in.E_sets.size());
  if (K < 1) throw InvalidInputError("assembly needs at least one local node");
  if (static_cast<int>(in.gammas.size()) != K ||
      static_cast<int>(in.signs.size()) != K)
    throw InvalidInputError("assembly inputs disagree on the node count");
  if (!with_replacement) {
    if (static_cast<int>(in.rho.size()) != K + 1)
      throw InvalidInputError("rho must hold fractions for nodes 0..K");
    double total = 0.0;
    for (double r : in.rho) total += r;
    if (std::fabs(total - 1.0) > 1e-10)
      throw InvalidInputError("sample fractions must sum to 1");
    if (!(in.rho[0] > 0.0))
      throw NoHoldoutError("central machine holds no samples (rho_0 = 0)");
  }
  if (static_cast<int>(in.info.rows()) != static_cast<int>(in.support.size()))
    throw InvalidInputError("info matrix does not match the support set");
  for (int k = 0; k < K; ++k) {
    if (in.gammas[k].size() != static_cast<Eigen::Index>(in.support.size()))
      throw InvalidInputError("subgradient vector does not match the support set");
    if (in.signs[k].size() != static_cast<Eigen::Index>(in.E_sets[k].size()))
      throw InvalidInputError("sign vector does not match E^(k)");
  }
  bool contained = true;
  for (const auto& Ek : in.E_sets)
    if (!is_subset(Ek, in.E)) contained = false;
  if (!contained && !in.compensation_sqrt_n.has_value())
    throw InvalidInputError(
        "general aggregation rule requires residual-score compensation");
  if (in.compensation_sqrt_n &&
      in.compensation_sqrt_n->size() != static_cast<Eigen::Index>(in.support.size()))
    throw InvalidInputError("compensation vector does not match the support set");
}

// r^(k) restricted to an index-position list: subgradient plus the
// sqrt(n)-scaled residual-score compensation off E.
Vector augmented_subgradient(const AssemblyInputs& in, int k) {
  Vector a = in.gammas[k];
  if (in.compensation_sqrt_n) a += *in.compensation_sqrt_n;
  return a;
}

MatrixBundle finish_bundle(const AssemblyInputs& in, const Layout& lay,
                           Matrix gamma_inv, const Matrix& rhs_psi,
                           const Vector& rhs_tau, Matrix theta_inv,
                           const Vector& kappa_rhs_tail) {
  MatrixBundle b;
  b.Gamma_inv = symmetrized(std::move(gamma_inv));
  if (lay.d_bar > 0 && min_eigenvalue(b.Gamma_inv) <= 0.0)
    throw DegenerateGeometryError("Gamma_inv is not positive definite");
  Eigen::LLT<Matrix> llt_gamma(b.Gamma_inv);
  if (llt_gamma.info() != Eigen::Success)
    throw DegenerateGeometryError("Gamma_inv Cholesky failed");
  b.Psi = llt_gamma.solve(rhs_psi);
  b.tau = llt_gamma.solve(rhs_tau);

  // Psi' Gamma_inv Psi = Psi' rhs_psi because rhs_psi = Gamma_inv Psi.
  theta_inv -= b.Psi.transpose() * rhs_psi;
  b.Theta_inv = symmetrized(std::move(theta_inv));
  if (min_eigenvalue(b.Theta_inv) <= 0.0)
    throw DegenerateGeometryError("Theta_inv is not positive definite");
  b.Theta = spd_inverse(b.Theta_inv, "Theta_inv");

  Matrix I_EE = slice(in.info, lay.E_in_support, lay.E_in_support);
  b.Pi = b.Theta * I_EE;
  b.kappa = b.Theta * (b.Psi.transpose() * rhs_tau + kappa_rhs_tail);

  int off = 0;
  b.S = Vector(lay.d_bar);
  for (std::size_t k = 0; k < in.E_sets.size(); ++k) {
    for (Eigen::Index i = 0; i < in.signs[k].size(); ++i)
      b.S(off + i) = in.signs[k](i);
    off += static_cast<int>(in.signs[k].size());
  }
  b.rho = in.rho;
  b.blocks = lay.blocks;
  b.E = in.E;
  b.E_sets = in.E_sets;
  return b;
}

}  // namespace

MatrixBundle assemble_matrices(const AssemblyInputs& in) {
  validate_inputs(in, false);
  Layout lay = make_layout(in);
  const int K = static_cast<int>(in.E_sets.size());
  const double rho0 = in.rho[0];
  auto rho_k = [&](int k) { return in.rho[k + 1]; };

  Matrix gamma_inv = Matrix::Zero(lay.d_bar, lay.d_bar);
  Matrix rhs_psi = Matrix::Zero(lay.d_bar, lay.d);
  Vector rhs_tau = Vector::Zero(lay.d_bar);
  Vector kappa_tail = Vector::Zero(lay.d);

  std::vector<Vector> aug(K);
  for (int k = 0; k < K; ++k) aug[k] = augmented_subgradient(in, k);

  for (int k = 0; k < K; ++k) {
    auto [off_k, len_k] = lay.blocks[k];
    if (len_k == 0) continue;
    for (int j = 0; j < K; ++j) {
      auto [off_j, len_j] = lay.blocks[j];
      if (len_j == 0) continue;
      double factor = (j == k) ? rho_k(k) + rho_k(k) * rho_k(k) / rho0
                               : rho_k(j) * rho_k(k) / rho0;
      gamma_inv.block(off_j, off_k, len_j, len_k) =
          factor * slice(in.info, lay.E_pos[j], lay.E_pos[k]);
    }
    rhs_psi.block(off_k, 0, len_k, lay.d) =
        (rho_k(k) / rho0) * slice(in.info, lay.E_pos[k], lay.E_in_support);
    Vector t = rho_k(k) * slice(aug[k], lay.E_pos[k]);
    for (int j = 0; j < K; ++j)
      t += (rho_k(k) / rho0) * rho_k(j) * slice(aug[j], lay.E_pos[k]);
    rhs_tau.segment(off_k, len_k) = -t;
  }
  for (int j = 0; j < K; ++j)
    kappa_tail += (rho_k(j) / rho0) * slice(in.gammas[j], lay.E_in_support);

  Matrix theta_inv =
      slice(in.info, lay.E_in_support, lay.E_in_support) / rho0;
  return finish_bundle(in, lay, std::move(gamma_inv), rhs_psi, rhs_tau,
                       std::move(theta_inv), kappa_tail);
}

MatrixBundle assemble_matrices_wr(const AssemblyInputs& in, double rho_subset) {
  if (!(rho_subset > 0.0 && rho_subset < 1.0))
    throw InvalidInputError("with-replacement fraction must lie in (0,1)");
  AssemblyInputs local = in;
  const int K = static_cast<int>(in.E_sets.size());
  local.rho.assign(K + 1, rho_subset);
  local.rho[0] = 1.0 - rho_subset;
  validate_inputs(local, true);
  Layout lay = make_layout(local);
  const double w = rho_subset / (1.0 - rho_subset);

  Matrix gamma_inv = Matrix::Zero(lay.d_bar, lay.d_bar);
  Matrix rhs_psi = Matrix::Zero(lay.d_bar, lay.d);
  Vector rhs_tau = Vector::Zero(lay.d_bar);
  Vector kappa_tail = Vector::Zero(lay.d);

  for (int k = 0; k < K; ++k) {
    auto [off, len] = lay.blocks[k];
    if (len == 0) continue;
    gamma_inv.block(off, off, len, len) =
        w * slice(local.info, lay.E_pos[k], lay.E_pos[k]);
    rhs_psi.block(off, 0, len, lay.d) =
        w * slice(local.info, lay.E_pos[k], lay.E_in_support);
    rhs_tau.segment(off, len) =
        -w * slice(augmented_subgradient(local, k), lay.E_pos[k]);
  }
  for (int j = 0; j < K; ++j)
    kappa_tail += w * slice(local.gammas[j], lay.E_in_support);

  Matrix theta_inv = (1.0 + K * w) *
                     slice(local.info, lay.E_in_support, lay.E_in_support);
  return finish_bundle(local, lay, std::move(gamma_inv), rhs_psi, rhs_tau,
                       std::move(theta_inv), kappa_tail);
}

}  // namespace distsi

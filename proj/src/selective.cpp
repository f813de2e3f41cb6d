#include "distsi/selective.hpp"

#include "distsi/normal.hpp"

#include <Eigen/LU>

#include <cmath>
#include <limits>
#include <sstream>

namespace distsi {

BarrierEval barrier(const Vector& V, const Vector& S) {
  const Eigen::Index d = V.size();
  if (S.size() != d) throw InvalidInputError("barrier: V/S size mismatch");
  BarrierEval out;
  out.grad = Vector::Zero(d);
  out.hess_diag = Vector::Zero(d);
  for (Eigen::Index j = 0; j < d; ++j) {
    double u = S(j) * V(j);
    if (!(u > 0.0)) {
      out.value = std::numeric_limits<double>::infinity();
      out.grad.setZero();
      out.hess_diag.setZero();
      return out;
    }
    out.value += std::log1p(1.0 / u);
    out.grad(j) = -S(j) / (u * (1.0 + u));
    out.hess_diag(j) = (2.0 * u + 1.0) / (u * u * (1.0 + u) * (1.0 + u));
  }
  return out;
}

namespace {

bool sign_feasible(const Vector& W, const Vector& S) {
  for (Eigen::Index j = 0; j < W.size(); ++j)
    if (!(S(j) * W(j) > 0.0)) return false;
  return true;
}

std::string format_iterate(const Vector& W) {
  std::ostringstream os;
  os << "[";
  for (Eigen::Index j = 0; j < W.size(); ++j)
    os << (j ? ", " : "") << W(j);
  os << "]";
  return os.str();
}

}  // namespace

OptResult solve_selection_opt(const MatrixBundle& bundle, const Vector& beta_E,
                              int n, const Vector& B_init) {
  const int d_bar = bundle.d_bar();
  if (B_init.size() != d_bar)
    throw InvalidInputError("solve_selection_opt: bad initial point size");
  if (beta_E.size() != bundle.d())
    throw InvalidInputError("solve_selection_opt: beta_E size mismatch");
  const double sqrt_n = std::sqrt(static_cast<double>(n));
  const Vector m = bundle.Psi * (sqrt_n * beta_E) + bundle.tau;

  Vector W = B_init;
  if (!sign_feasible(W, bundle.S))
    throw InvalidInputError("solve_selection_opt: initial point off the orthant");
  // Guard against coordinates that sit numerically on the boundary; any
  // feasible start reaches the same unique minimizer.
  for (Eigen::Index j = 0; j < W.size(); ++j)
    if (std::fabs(W(j)) < 1e-8) W(j) = bundle.S(j) * 1e-8;

  auto objective = [&](const Vector& w) {
    BarrierEval be = barrier(w, bundle.S);
    if (!std::isfinite(be.value))
      return std::numeric_limits<double>::infinity();
    Vector r = w - m;
    return 0.5 * r.dot(bundle.Gamma_inv * r) + be.value;
  };

  OptResult res;
  double f = objective(W);
  const int max_iter = 200;
  int iter = 0;
  for (; iter < max_iter; ++iter) {
    BarrierEval be = barrier(W, bundle.S);
    Vector g = bundle.Gamma_inv * (W - m) + be.grad;
    res.grad_norm = g.lpNorm<Eigen::Infinity>();
    if (res.grad_norm < 1e-8) break;
    Matrix H = bundle.Gamma_inv;
    H.diagonal() += be.hess_diag;
    Eigen::LLT<Matrix> llt(H);
    if (llt.info() != Eigen::Success)
      throw SolverError("selection optimizer Hessian not positive definite");
    Vector step = llt.solve(-g);
    double slope = g.dot(step);
    // Fraction-to-boundary rule keeps the iterate strictly inside the
    // orthant instead of stepping onto the wall and halving against it.
    double t_max = 1.0;
    for (Eigen::Index j = 0; j < W.size(); ++j) {
      double toward_zero = -step(j) / W(j);  // positive when shrinking W_j
      if (toward_zero > 0.0) t_max = std::min(t_max, 0.995 / toward_zero);
    }
    double t = std::min(1.0, t_max);
    bool moved = false;
    // Near the solution the decrement drops below the floating-point
    // resolution of f; in that basin plain damped Newton is safe without
    // the sufficient-decrease gate.
    const bool gate = res.grad_norm >= 1e-4;
    while (t > 1e-14) {
      Vector Wn = W + t * step;
      if (sign_feasible(Wn, bundle.S)) {
        double fn = objective(Wn);
        if (!gate || fn <= f + 1e-4 * t * slope) {
          W = std::move(Wn);
          f = fn;
          moved = true;
          break;
        }
      }
      t *= 0.5;
    }
    if (!moved)
      throw SolverError("selection optimizer line search collapsed; iterate " +
                        format_iterate(W));
  }
  if (res.grad_norm >= 1e-8) {
    BarrierEval be = barrier(W, bundle.S);
    Vector g = bundle.Gamma_inv * (W - m) + be.grad;
    res.grad_norm = g.lpNorm<Eigen::Infinity>();
    if (res.grad_norm >= 1e-8)
      throw SolverError("selection optimizer did not reach tolerance; iterate " +
                        format_iterate(W));
  }
  res.V_star = W;
  res.iterations = iter;
  BarrierEval be = barrier(W, bundle.S);
  res.barrier_hess = Matrix::Zero(d_bar, d_bar);
  res.barrier_hess.diagonal() = be.hess_diag;
  return res;
}

Vector selective_mle(const MatrixBundle& bundle, const Vector& beta_E,
                     const OptResult& opt, int n, const Matrix& I_EE) {
  const double sqrt_n = std::sqrt(static_cast<double>(n));
  const Vector u = sqrt_n * beta_E;
  Eigen::FullPivLU<Matrix> lu(bundle.Pi);
  lu.setThreshold(1e-10);
  if (!lu.isInvertible())
    throw DegenerateGeometryError("Pi is singular in selective_mle");
  Vector r = bundle.Psi * u + bundle.tau - opt.V_star;
  Vector correction =
      spd_solve(I_EE, Vector(bundle.Psi.transpose() * (bundle.Gamma_inv * r)),
                "selective_mle information");
  Vector out = lu.solve(u) - lu.solve(bundle.kappa) + correction;
  return out / sqrt_n;
}

Matrix selective_fisher(const MatrixBundle& bundle, const OptResult& opt,
                        const Matrix& I_EE) {
  Matrix GP = bundle.Gamma_inv * bundle.Psi;  // d_bar x d
  Matrix inner = bundle.Gamma_inv + opt.barrier_hess;
  Matrix M = bundle.Theta_inv + bundle.Psi.transpose() * GP -
             GP.transpose() * spd_solve(inner, GP, "selective_fisher inner");
  M = symmetrized(M);
  if (min_eigenvalue(M) <= 0.0)
    throw DegenerateGeometryError("curvature matrix not positive definite");
  return symmetrized(I_EE * spd_solve(M, I_EE, "selective_fisher curvature"));
}

const char* method_name(Method m) {
  switch (m) {
    case Method::dist_si: return "dist-si";
    case Method::splitting: return "splitting";
    case Method::naive: return "naive";
  }
  return "?";
}

InferenceReport infer(const Vector& estimate, const Matrix& fisher,
                      const IndexList& E, int n, double alpha, Method method) {
  if (!(alpha > 0.0 && alpha < 1.0))
    throw InvalidInputError("infer: alpha must lie in (0,1)");
  if (estimate.size() != fisher.rows() ||
      estimate.size() != static_cast<Eigen::Index>(E.size()))
    throw InvalidInputError("infer: dimension mismatch");
  Matrix cov = spd_inverse(fisher, "information in infer");
  const double sqrt_n = std::sqrt(static_cast<double>(n));
  const double q = norm_quantile(1.0 - alpha / 2.0);
  InferenceReport report;
  report.n = n;
  report.alpha = alpha;
  for (Eigen::Index j = 0; j < estimate.size(); ++j) {
    InferenceRow row;
    row.coef = E[j];
    row.estimate = estimate(j);
    double sigma = std::sqrt(cov(j, j));
    row.stderr_ = sigma / sqrt_n;
    row.pvalue = two_sided_pvalue(sqrt_n * estimate(j) / sigma);
    row.ci_lo = estimate(j) - q * sigma / sqrt_n;
    row.ci_hi = estimate(j) + q * sigma / sqrt_n;
    row.method = method;
    report.rows.push_back(row);
  }
  return report;
}

InferenceReport baseline_infer(Method kind, const Matrix& X, const Vector& y,
                               const IndexList& E, const FamilySpec& family,
                               double alpha) {
  if (kind == Method::dist_si)
    throw InvalidInputError("baseline_infer expects splitting or naive");
  const int n = static_cast<int>(X.rows());
  const int d = static_cast<int>(E.size());
  if (kind == Method::splitting && n <= d)
    throw InsufficientHoldoutError("holdout has n0 <= d samples");
  Matrix X_E(X.rows(), d);
  for (int j = 0; j < d; ++j) X_E.col(j) = X.col(E[j]);
  GlmFit fit = fit_glm(X_E, y, family);
  Matrix info = fit.obs_fi;
  if (family.is_gaussian() && family.dispersion_mode == DispersionMode::estimate) {
    if (n <= d)
      throw InsufficientHoldoutError("cannot estimate dispersion with n <= d");
    double rss = (y - X_E * fit.beta).squaredNorm();
    info /= rss / (n - d);
  }
  return infer(fit.beta, info, E, n, alpha, kind);
}

Vector reconstruct_randomization(const SelectionSummary& selection,
                                 const Vector& beta_E, const IndexList& E,
                                 const Vector& beta_perp, const Matrix& I_full,
                                 int n) {
  const int p = static_cast<int>(I_full.rows());
  if (selection.gamma.size() != p)
    throw InvalidInputError("reconstruct_randomization: gamma length != p");
  IndexList rest = complement(p, E);
  if (beta_perp.size() != static_cast<Eigen::Index>(rest.size()))
    throw InvalidInputError("reconstruct_randomization: residual score length");
  const double sqrt_n = std::sqrt(static_cast<double>(n));
  Vector out = selection.gamma;
  for (std::size_t i = 0; i < selection.E.size(); ++i)
    out += I_full.col(selection.E[i]) * (sqrt_n * selection.B(i));
  for (std::size_t i = 0; i < E.size(); ++i)
    out -= I_full.col(E[i]) * (sqrt_n * beta_E(i));
  for (std::size_t i = 0; i < rest.size(); ++i)
    out(rest[i]) += sqrt_n * beta_perp(i);
  return out;
}

}  // namespace distsi

#include "distsi/glm.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>

namespace distsi {

FamilySpec FamilySpec::gaussian(double sigma2, DispersionMode mode) {
  if (!(sigma2 > 0.0) || !std::isfinite(sigma2))
    throw InvalidInputError("gaussian dispersion must be a positive real");
  return FamilySpec{Family::gaussian, sigma2, mode};
}

FamilySpec FamilySpec::logistic() {
  return FamilySpec{Family::bernoulli_logit, 1.0, DispersionMode::known};
}

FamilyEval family_eval(const FamilySpec& family, double eta) {
  if (!std::isfinite(eta)) throw InvalidInputError("family_eval: non-finite eta");
  if (family.kind == Family::gaussian) return {0.5 * eta * eta, eta, 1.0};
  // log(1 + e^eta) in softplus form; mean and variance from the
  // exp(-|eta|) branch so neither tail overflows or cancels.
  double a = eta > 0.0 ? eta + std::log1p(std::exp(-eta)) : std::log1p(std::exp(eta));
  double e = std::exp(-std::fabs(eta));
  double mu = eta >= 0.0 ? 1.0 / (1.0 + e) : e / (1.0 + e);
  double var = e / ((1.0 + e) * (1.0 + e));
  return {a, mu, var};
}

Vector cumulant_mean(const FamilySpec& family, const Vector& eta) {
  Vector out(eta.size());
  for (Eigen::Index i = 0; i < eta.size(); ++i)
    out(i) = family_eval(family, eta(i)).A1;
  return out;
}

Vector cumulant_var(const FamilySpec& family, const Vector& eta) {
  Vector out(eta.size());
  for (Eigen::Index i = 0; i < eta.size(); ++i)
    out(i) = family_eval(family, eta(i)).A2;
  return out;
}

double cumulant_sum(const FamilySpec& family, const Vector& eta) {
  double out = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i)
    out += family_eval(family, eta(i)).A;
  return out;
}

void Dataset::validate(const FamilySpec& family) const {
  if (n() < 1 || p() < 1) throw DataError("dataset needs n >= 1 and p >= 1");
  if (y.size() != X.rows()) throw DataError("response length does not match X");
  if (node_id < 0) throw DataError("node_id must be >= 0");
  if (!X.allFinite() || !y.allFinite())
    throw DataError("dataset contains non-finite entries");
  if (family.kind == Family::bernoulli_logit) {
    for (Eigen::Index i = 0; i < y.size(); ++i)
      if (y(i) != 0.0 && y(i) != 1.0)
        throw DataError("logit responses must be exactly 0 or 1");
  }
}

namespace {

// Rank check via the Gram spectrum: sigma_min(X) < 1e-10 sigma_max(X)
// exactly when lambda_min(X'X) < 1e-20 lambda_max(X'X).
void check_full_rank(const Matrix& X) {
  Matrix gram = X.transpose() * X;
  Eigen::SelfAdjointEigenSolver<Matrix> es(gram, Eigen::EigenvaluesOnly);
  const auto& ev = es.eigenvalues();
  if (ev.size() == 0 || !(ev(0) > 1e-20 * ev(ev.size() - 1)))
    throw SingularDesignError("design matrix is rank deficient");
}

}  // namespace

GlmFit fit_glm(const Matrix& X, const Vector& y, const FamilySpec& family) {
  const int n = static_cast<int>(X.rows());
  const int d = static_cast<int>(X.cols());
  if (n != y.size()) throw InvalidInputError("fit_glm: X/y shape mismatch");
  if (d == 0) return {Vector(0), Matrix(0, 0), true, 0};
  if (d > n) throw SingularDesignError("more predictors than samples");
  check_full_rank(X);

  const double grad_tol = 1e-10;
  const int max_iter = 100;

  Vector beta = Vector::Zero(d);
  Vector eta = Vector::Zero(n);
  double loss = cumulant_sum(family, eta) / n - y.dot(eta) / n;
  int iter = 0;
  bool converged = false;
  for (; iter < max_iter; ++iter) {
    Vector mu = cumulant_mean(family, eta);
    Vector grad = X.transpose() * (mu - y) / n;
    if (grad.lpNorm<Eigen::Infinity>() < grad_tol) {
      converged = true;
      break;
    }
    Vector w = cumulant_var(family, eta);
    Matrix hess = X.transpose() * w.asDiagonal() * X / n;
    Eigen::LLT<Matrix> llt(hess);
    if (llt.info() != Eigen::Success) {
      if (family.kind == Family::bernoulli_logit)
        throw SeparationError("logistic fit diverged (separated data)");
      throw SingularDesignError("normal equations not positive definite");
    }
    Vector step = llt.solve(-grad);
    double slope = grad.dot(step);
    double t = 1.0;
    bool moved = false;
    while (t > 1e-14) {
      Vector eta_new = eta + t * (X * step);
      double loss_new = cumulant_sum(family, eta_new) / n - y.dot(eta_new) / n;
      if (loss_new <= loss + 1e-4 * t * slope) {
        beta += t * step;
        eta = std::move(eta_new);
        loss = loss_new;
        moved = true;
        break;
      }
      t *= 0.5;
    }
    if (!moved) break;
  }
  if (!converged) {
    // Final gradient check: step halving can stall at machine precision.
    Vector grad = X.transpose() * (cumulant_mean(family, eta) - y) / n;
    if (grad.lpNorm<Eigen::Infinity>() < 1e2 * grad_tol) {
      converged = true;
    } else if (family.kind == Family::bernoulli_logit) {
      throw SeparationError("logistic fit did not converge in " +
                            std::to_string(max_iter) + " iterations");
    } else {
      throw SolverError("GLM fit did not converge");
    }
  }
  if (family.kind == Family::bernoulli_logit) {
    // A vanishing score with every fitted probability pinned to 0 or 1
    // means the MLE ran off to infinity: separated data.
    if (cumulant_var(family, eta).maxCoeff() < 1e-6)
      throw SeparationError("all fitted probabilities saturated");
  }
  GlmFit fit;
  fit.beta = beta;
  fit.obs_fi = obs_fisher(X, beta, family);
  fit.converged = converged;
  fit.iterations = iter;
  return fit;
}

Matrix obs_fisher(const Matrix& X, const Vector& beta,
                  const FamilySpec& family) {
  if (X.cols() != beta.size())
    throw InvalidInputError("obs_fisher: dimension mismatch");
  const int n = static_cast<int>(X.rows());
  Vector w = cumulant_var(family, X * beta);
  Matrix fi = X.transpose() * w.asDiagonal() * X / (n * family.dispersion);
  return symmetrized(fi);
}

AggregatedMle aggregate_mle(const std::vector<GlmFit>& fits,
                            const std::vector<double>& rho) {
  if (fits.empty() || fits.size() != rho.size())
    throw InvalidInputError("aggregate_mle: fits/rho size mismatch");
  double total = 0.0;
  for (double r : rho) total += r;
  if (std::fabs(total - 1.0) > 1e-12)
    throw InvalidInputError("aggregate_mle: sample fractions must sum to 1");
  const Eigen::Index d = fits[0].beta.size();
  Matrix info = Matrix::Zero(d, d);
  Vector rhs = Vector::Zero(d);
  for (std::size_t k = 0; k < fits.size(); ++k) {
    if (fits[k].beta.size() != d)
      throw InvalidInputError("aggregate_mle: inconsistent dimensions");
    info += rho[k] * fits[k].obs_fi;
    rhs += rho[k] * (fits[k].obs_fi * fits[k].beta);
  }
  info = symmetrized(info);
  Vector beta = info_solve(info, rhs, "aggregate_mle");
  return {std::move(beta), std::move(info)};
}

Vector residual_score(const Matrix& X, const Vector& y, const Vector& beta_E,
                      const IndexList& E, const FamilySpec& family) {
  const int p = static_cast<int>(X.cols());
  IndexList rest = complement(p, E);
  if (rest.empty()) return Vector(0);
  Matrix X_E(X.rows(), E.size());
  for (int j = 0; j < static_cast<int>(E.size()); ++j) X_E.col(j) = X.col(E[j]);
  Vector resid = cumulant_mean(family, X_E * beta_E) - y;
  Vector out(rest.size());
  for (int j = 0; j < static_cast<int>(rest.size()); ++j)
    out(j) = X.col(rest[j]).dot(resid) / X.rows();
  return out;
}

}  // namespace distsi

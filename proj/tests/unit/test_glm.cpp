#include "distsi/glm.hpp"
#include "distsi/normal.hpp"
#include "distsi/rng.hpp"

#include "../support/oracles.hpp"

#include <doctest.h>

#include <cmath>

using namespace distsi;

namespace {

Matrix random_matrix(int n, int p, CounterRng& rng) {
  Matrix X(n, p);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < p; ++j) X(i, j) = rng.normal();
  return X;
}

}  // namespace

TEST_CASE("family_eval gaussian closed form") {
  auto [A, A1, A2] = family_eval(FamilySpec::gaussian(), 2.0);
  CHECK(A == doctest::Approx(2.0).epsilon(1e-14));
  CHECK(A1 == doctest::Approx(2.0).epsilon(1e-14));
  CHECK(A2 == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("family_eval logistic at zero") {
  auto [A, A1, A2] = family_eval(FamilySpec::logistic(), 0.0);
  CHECK(A == doctest::Approx(std::log(2.0)).epsilon(1e-14));
  CHECK(A1 == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(A2 == doctest::Approx(0.25).epsilon(1e-14));
}

TEST_CASE("family_eval logistic stays finite deep in the tail") {
  // Extended-precision oracle for A''(35).
  long double e = expl(-35.0L);
  long double a2_ref = e / ((1.0L + e) * (1.0L + e));
  auto [A, A1, A2] = family_eval(FamilySpec::logistic(), 35.0);
  CHECK(std::isfinite(A));
  CHECK(std::isfinite(A2));
  CHECK(A2 > 0.0);
  CHECK(A2 == doctest::Approx(static_cast<double>(a2_ref)).epsilon(1e-12));
  // No overflow at the documented limit.
  auto far = family_eval(FamilySpec::logistic(), 700.0);
  CHECK(std::isfinite(far.A));
  auto farneg = family_eval(FamilySpec::logistic(), -700.0);
  CHECK(std::isfinite(farneg.A));
  CHECK_THROWS_AS(family_eval(FamilySpec::logistic(), std::nan("")),
                  InvalidInputError);
}

TEST_CASE("family_eval derivatives match finite differences of A") {
  for (auto family : {FamilySpec::gaussian(), FamilySpec::logistic()}) {
    for (double eta = -20.0; eta <= 20.0; eta += 0.5) {
      auto f = [&](double x) { return family_eval(family, x).A; };
      double a1 = oracle::fd_derivative(f, eta, 1e-5);
      auto g = [&](double x) { return family_eval(family, x).A1; };
      double a2 = oracle::fd_derivative(g, eta, 1e-5);
      auto ev = family_eval(family, eta);
      CHECK(ev.A1 == doctest::Approx(a1).epsilon(1e-6));
      CHECK(ev.A2 == doctest::Approx(a2).epsilon(1e-6).scale(1.0));
    }
  }
}

TEST_CASE("fit_glm gaussian equals the normal-equations solution") {
  CounterRng rng(7, 0, 0);
  Matrix X = random_matrix(40, 5, rng);
  Vector y(40);
  for (int i = 0; i < 40; ++i) y(i) = rng.normal() + X(i, 0);
  GlmFit fit = fit_glm(X, y, FamilySpec::gaussian());
  Vector ols = (X.transpose() * X).ldlt().solve(X.transpose() * y);
  CHECK((fit.beta - ols).lpNorm<Eigen::Infinity>() < 1e-10);
  CHECK(fit.converged);
  // beta-independence of the gaussian information
  Matrix fi0 = obs_fisher(X, Vector::Zero(5), FamilySpec::gaussian());
  CHECK((fit.obs_fi - fi0).lpNorm<Eigen::Infinity>() < 1e-12);
}

TEST_CASE("fit_glm logistic respects sign-flip symmetry") {
  // Rows come in (x, y) / (-x, y) pairs: the loss is then invariant under
  // beta -> -beta, so the unique minimizer is zero.
  CounterRng rng(8, 0, 0);
  Matrix X(20, 3);
  Vector y(20);
  for (int i = 0; i < 10; ++i) {
    for (int j = 0; j < 3; ++j) X(2 * i, j) = rng.normal();
    X.row(2 * i + 1) = -X.row(2 * i);
    double label = rng.uniform() < 0.5 ? 0.0 : 1.0;
    y(2 * i) = label;
    y(2 * i + 1) = label;
  }
  GlmFit fit = fit_glm(X, y, FamilySpec::logistic());
  CHECK(fit.beta.lpNorm<Eigen::Infinity>() < 1e-9);
}

TEST_CASE("fit_glm logistic matches a damped-gradient oracle") {
  CounterRng rng(9, 0, 0);
  Matrix X = random_matrix(20, 3, rng);
  Vector y(20);
  for (int i = 0; i < 20; ++i)
    y(i) = rng.uniform() < family_eval(FamilySpec::logistic(), X(i, 0)).A1 ? 1 : 0;
  FamilySpec fam = FamilySpec::logistic();
  GlmFit fit = fit_glm(X, y, fam);
  auto loss = [&](const Vector& b) {
    Vector eta = X * b;
    return (cumulant_sum(fam, eta) - y.dot(eta)) / X.rows();
  };
  auto grad = [&](const Vector& b) {
    return Vector(X.transpose() * (cumulant_mean(fam, X * b) - y) / X.rows());
  };
  Vector ref = oracle::gradient_descent(loss, grad, Vector::Zero(3), 1e-11);
  CHECK((fit.beta - ref).lpNorm<Eigen::Infinity>() < 1e-7);
}

TEST_CASE("fit_glm errors: rank deficiency and separation") {
  Matrix X(6, 2);
  X << 1, 2, 2, 4, 3, 6, 4, 8, 5, 10, 6, 12;
  Vector y = Vector::Ones(6);
  CHECK_THROWS_AS(fit_glm(X, y, FamilySpec::gaussian()), SingularDesignError);

  // Perfectly separated logistic data.
  Matrix Xs(8, 1);
  Vector ys(8);
  for (int i = 0; i < 8; ++i) {
    Xs(i, 0) = i < 4 ? -(i + 1.0) : (i - 3.0);
    ys(i) = i < 4 ? 0.0 : 1.0;
  }
  CHECK_THROWS_AS(fit_glm(Xs, ys, FamilySpec::logistic()), SeparationError);
}

TEST_CASE("obs_fisher closed forms and finite differences") {
  CounterRng rng(11, 0, 0);
  Matrix X = random_matrix(30, 4, rng);
  // gaussian, sigma^2 = 1: X'X/n regardless of beta
  Matrix fi = obs_fisher(X, Vector::Ones(4), FamilySpec::gaussian());
  CHECK((fi - X.transpose() * X / 30.0).lpNorm<Eigen::Infinity>() < 1e-12);
  // logistic at beta = 0: X'X / (4n)
  Matrix fl = obs_fisher(X, Vector::Zero(4), FamilySpec::logistic());
  CHECK((fl - X.transpose() * X / 120.0).lpNorm<Eigen::Infinity>() < 1e-12);

  // logistic at a random beta: finite differences of the mean loss
  Vector beta(4);
  beta << 0.3, -0.2, 0.5, 0.1;
  FamilySpec fam = FamilySpec::logistic();
  Vector y = Vector::Zero(30);
  auto grad = [&](const Vector& b) {
    return Vector(X.transpose() * (cumulant_mean(fam, X * b) - y) / X.rows());
  };
  Matrix hess_fd = oracle::fd_jacobian(grad, beta, 1e-5);
  Matrix hess = obs_fisher(X, beta, fam);
  CHECK((hess - hess_fd).norm() / hess.norm() < 1e-5);

  // symmetric PSD
  CHECK((hess - hess.transpose()).lpNorm<Eigen::Infinity>() == 0.0);
  CHECK(min_eigenvalue(hess) > 0.0);
}

TEST_CASE("obs_fisher divides by a known gaussian dispersion") {
  CounterRng rng(12, 0, 0);
  Matrix X = random_matrix(25, 3, rng);
  Matrix f1 = obs_fisher(X, Vector::Zero(3), FamilySpec::gaussian(1.0));
  Matrix f4 = obs_fisher(X, Vector::Zero(3), FamilySpec::gaussian(4.0));
  CHECK((f1 - 4.0 * f4).lpNorm<Eigen::Infinity>() < 1e-12);
}

TEST_CASE("aggregate_mle reproduces pooled least squares on any partition") {
  CounterRng rng(13, 0, 0);
  const int n = 90, d = 4;
  Matrix X = random_matrix(n, d, rng);
  Vector y(n);
  for (int i = 0; i < n; ++i) y(i) = X(i, 1) - 0.5 * X(i, 3) + rng.normal();
  std::vector<int> sizes = {20, 40, 30};
  std::vector<GlmFit> fits;
  std::vector<double> rho;
  int start = 0;
  for (int nk : sizes) {
    fits.push_back(fit_glm(X.middleRows(start, nk), y.segment(start, nk),
                           FamilySpec::gaussian()));
    rho.push_back(static_cast<double>(nk) / n);
    start += nk;
  }
  auto [beta, info] = aggregate_mle(fits, rho);
  IndexList all = {0, 1, 2, 3};
  Vector pooled = oracle::pooled_ols(X, y, all);
  CHECK((beta - pooled).lpNorm<Eigen::Infinity>() < 1e-8);
  CHECK((info - X.transpose() * X / n).lpNorm<Eigen::Infinity>() < 1e-10);
}

TEST_CASE("aggregate_mle degenerate cases") {
  CounterRng rng(14, 0, 0);
  Matrix X = random_matrix(30, 3, rng);
  Vector y(30);
  for (int i = 0; i < 30; ++i) y(i) = rng.normal();
  GlmFit fit = fit_glm(X, y, FamilySpec::gaussian());

  auto [beta1, info1] = aggregate_mle({fit}, {1.0});
  CHECK((beta1 - fit.beta).lpNorm<Eigen::Infinity>() < 1e-12);

  // identical information across nodes: beta is the rho-weighted average
  GlmFit a = fit, b = fit;
  a.beta << 1.0, 2.0, 3.0;
  b.beta << -1.0, 0.0, 1.0;
  auto [beta2, info2] = aggregate_mle({a, b}, {0.25, 0.75});
  Vector expect = 0.25 * a.beta + 0.75 * b.beta;
  CHECK((beta2 - expect).lpNorm<Eigen::Infinity>() < 1e-10);

  CHECK_THROWS_AS(aggregate_mle({a, b}, {0.25, 0.70}), InvalidInputError);
}

TEST_CASE("residual_score cases") {
  CounterRng rng(15, 0, 0);
  const int n = 10, p = 4;
  Matrix X = random_matrix(n, p, rng);
  Vector y(n);
  for (int i = 0; i < n; ++i) y(i) = rng.normal();
  FamilySpec fam = FamilySpec::gaussian();

  // degenerate complement
  IndexList all = {0, 1, 2, 3};
  Vector full = residual_score(X, y, Vector::Zero(4), all, fam);
  CHECK(full.size() == 0);

  // OLS on E = {0,1}: columns of E are orthogonal to the residual, and the
  // complement score equals direct matrix arithmetic.
  IndexList E = {0, 1};
  Vector beta = oracle::pooled_ols(X, y, E);
  Vector score = residual_score(X, y, beta, E, fam);
  Matrix X_E(n, 2), X_rest(n, 2);
  X_E << X.col(0), X.col(1);
  X_rest << X.col(2), X.col(3);
  Vector direct = X_rest.transpose() * (X_E * beta - y) / n;
  CHECK((score - direct).lpNorm<Eigen::Infinity>() < 1e-12);

  // orthogonal complement gives a zero score
  Matrix Q = Eigen::HouseholderQR<Matrix>(X).householderQ();
  Matrix Xo(n, 3);
  Xo << Q.col(0), Q.col(1), Q.col(2);
  IndexList E2 = {0, 1};
  Vector yo = Xo.col(0) - 2.0 * Xo.col(1);
  Vector beta2 = oracle::pooled_ols(Xo, yo, E2);
  Vector score2 = residual_score(Xo, yo, beta2, E2, fam);
  CHECK(score2.lpNorm<Eigen::Infinity>() < 1e-12);
}

TEST_CASE("normal CDF and quantile against references") {
  // long-double erfc oracle
  auto phi_ref = [](double z) {
    return static_cast<double>(0.5L * erfcl(-static_cast<long double>(z) /
                                            sqrtl(2.0L)));
  };
  for (double z : {-6.0, -3.2, -1.0, -0.1, 0.0, 0.5, 1.96, 4.4, 7.5}) {
    CHECK(norm_cdf(z) == doctest::Approx(phi_ref(z)).epsilon(1e-13));
    // Round trips are only meaningful where 1 - Phi(z) is representable.
    if (std::fabs(z) <= 6.0)
      CHECK(norm_quantile(norm_cdf(z)) == doctest::Approx(z).epsilon(1e-9));
  }
  CHECK(norm_quantile(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-12));
  CHECK(norm_quantile(1e-12) == doctest::Approx(-7.034483825301132).epsilon(1e-10));
  CHECK(two_sided_pvalue(1.644854) == doctest::Approx(0.1).epsilon(1e-4));
  CHECK(std::fabs(two_sided_pvalue(1.644854) - 0.1) < 1e-5);
  CHECK(two_sided_pvalue(0.0) == doctest::Approx(1.0));
}

TEST_CASE("dataset validation") {
  Dataset d;
  d.X = Matrix::Ones(3, 2);
  d.y = Vector::Ones(3);
  d.node_id = 0;
  CHECK_NOTHROW(d.validate(FamilySpec::gaussian()));
  d.y(1) = 0.5;
  CHECK_THROWS_AS(d.validate(FamilySpec::logistic()), DataError);
  d.y(1) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(d.validate(FamilySpec::gaussian()), DataError);
}

#include "distsi/lasso.hpp"

#include <atomic>
#include <cmath>
#include <sstream>

namespace distsi {

namespace kkt_audit {
namespace {
std::atomic<double> g_max_residual{0.0};
std::atomic<double> g_max_z{0.0};
std::atomic<long> g_count{0};

void atomic_max(std::atomic<double>& slot, double v) {
  double cur = slot.load(std::memory_order_relaxed);
  while (v > cur && !slot.compare_exchange_weak(cur, v)) {
  }
}
}  // namespace

void reset() {
  g_max_residual.store(0.0);
  g_max_z.store(0.0);
  g_count.store(0);
}
void record_residual(double r) {
  atomic_max(g_max_residual, r);
  g_count.fetch_add(1, std::memory_order_relaxed);
}
void record_inactive_z(double z) { atomic_max(g_max_z, z); }
double max_residual() { return g_max_residual.load(); }
double max_inactive_z() { return g_max_z.load(); }
long solve_count() { return g_count.load(); }
}  // namespace kkt_audit

PenaltySpec PenaltySpec::uniform(int p, double value) {
  PenaltySpec out;
  out.lambda = Vector::Constant(p, value);
  out.validate(p);
  return out;
}

void PenaltySpec::validate(int p) const {
  if (lambda.size() != p)
    throw InvalidInputError("penalty length does not match p");
  for (Eigen::Index j = 0; j < lambda.size(); ++j)
    if (!(lambda(j) > 0.0) || !std::isfinite(lambda(j)))
      throw InvalidInputError("penalty weights must be strictly positive");
}

double lasso_loss_scale(int n_total, int n_k) {
  if (n_total < n_k || n_k < 1)
    throw InvalidInputError("lasso_loss_scale: need 1 <= n_k <= n_total");
  return std::sqrt(static_cast<double>(n_total)) / n_k;
}

Vector lasso_gradient(const Dataset& data, const FamilySpec& family,
                      int n_total, const Vector& beta) {
  const double s = lasso_loss_scale(n_total, data.n());
  Vector mu = cumulant_mean(family, data.X * beta);
  return s * (data.X.transpose() * (mu - data.y));
}

namespace {

constexpr double kActivityRelTol = 1e-10;
constexpr int kMaxSweeps = 50000;

double activity_threshold(const Vector& beta) {
  return kActivityRelTol * std::max(1.0, beta.lpNorm<Eigen::Infinity>());
}

double soft_threshold(double x, double t) {
  if (x > t) return x - t;
  if (x < -t) return x + t;
  return 0.0;
}

double kkt_residual_from_grad(const Vector& beta, const Vector& grad,
                              const Vector& lambda) {
  const double thr = activity_threshold(beta);
  double res = 0.0;
  for (Eigen::Index j = 0; j < beta.size(); ++j) {
    if (std::fabs(beta(j)) > thr) {
      double sgn = beta(j) > 0.0 ? 1.0 : -1.0;
      res = std::max(res, std::fabs(grad(j) + lambda(j) * sgn));
    } else {
      res = std::max(res, std::max(0.0, std::fabs(grad(j)) - lambda(j)));
    }
  }
  return res;
}

// Gaussian loss: s * (0.5 b'Gb - b'c) with G = X'X, c = X'y.
Vector solve_gaussian_cd(const Dataset& data, const PenaltySpec& penalty,
                         double s) {
  const int p = data.p();
  Matrix G = data.X.transpose() * data.X;
  Vector c = data.X.transpose() * data.y;
  Vector beta = Vector::Zero(p);
  Vector Gbeta = Vector::Zero(p);
  const double tol = 0.5e-8;
  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    for (int j = 0; j < p; ++j) {
      if (G(j, j) <= 0.0) continue;
      double u = c(j) - Gbeta(j) + G(j, j) * beta(j);
      double bj = soft_threshold(u, penalty.lambda(j) / s) / G(j, j);
      double delta = bj - beta(j);
      if (delta != 0.0) {
        beta(j) = bj;
        Gbeta += delta * G.col(j);
      }
    }
    Vector grad = s * (Gbeta - c);
    if (kkt_residual_from_grad(beta, grad, penalty.lambda) < tol) return beta;
  }
  std::ostringstream msg;
  msg << "coordinate descent hit the sweep cap; KKT residual "
      << kkt_residual_from_grad(beta, s * (Gbeta - c), penalty.lambda);
  throw SolverError(msg.str());
}

double penalized_objective(const Dataset& data, const FamilySpec& family,
                           double s, const Vector& lambda, const Vector& beta) {
  Vector eta = data.X * beta;
  double loss = s * (cumulant_sum(family, eta) - data.y.dot(eta));
  return loss + lambda.cwiseProduct(beta.cwiseAbs()).sum();
}

double power_iteration_sq_norm(const Matrix& X) {
  Vector v = Vector::Ones(X.cols()).normalized();
  double s2 = 0.0;
  for (int it = 0; it < 40; ++it) {
    Vector w = X.transpose() * (X * v);
    double nw = w.norm();
    if (nw == 0.0) return 0.0;
    s2 = nw;
    v = w / nw;
  }
  return s2;
}

// Newton on the sign-restricted smooth problem min loss(b) + sum l_j s_j b_j
// over the current support. Returns false if the polish left the orthant.
bool newton_polish(const Dataset& data, const FamilySpec& family, double s,
                   const Vector& lambda, const IndexList& support,
                   const Vector& signs, Vector& beta_full) {
  const int d = static_cast<int>(support.size());
  if (d == 0) return true;
  Matrix Xs(data.n(), d);
  Vector ls(d);
  Vector b(d);
  for (int j = 0; j < d; ++j) {
    Xs.col(j) = data.X.col(support[j]);
    ls(j) = lambda(support[j]) * signs(j);
    b(j) = beta_full(support[j]);
  }
  auto value = [&](const Vector& bb) {
    Vector eta = Xs * bb;
    return s * (cumulant_sum(family, eta) - data.y.dot(eta)) + ls.dot(bb);
  };
  double f = value(b);
  for (int it = 0; it < 50; ++it) {
    Vector eta = Xs * b;
    Vector grad = s * (Xs.transpose() * (cumulant_mean(family, eta) - data.y)) + ls;
    if (grad.lpNorm<Eigen::Infinity>() < 1e-12) break;
    Vector w = cumulant_var(family, eta);
    Matrix hess = s * (Xs.transpose() * w.asDiagonal() * Xs);
    Eigen::LLT<Matrix> llt(hess);
    if (llt.info() != Eigen::Success) return false;
    Vector step = llt.solve(-grad);
    double slope = grad.dot(step);
    double t = 1.0;
    bool moved = false;
    while (t > 1e-14) {
      Vector bn = b + t * step;
      double fn = value(bn);
      if (fn <= f + 1e-4 * t * slope) {
        b = bn;
        f = fn;
        moved = true;
        break;
      }
      t *= 0.5;
    }
    if (!moved) break;
  }
  for (int j = 0; j < d; ++j)
    if (!(signs(j) * b(j) > 0.0)) return false;
  for (int j = 0; j < d; ++j) beta_full(support[j]) = b(j);
  return true;
}

Vector solve_proximal(const Dataset& data, const PenaltySpec& penalty,
                      const FamilySpec& family, double s) {
  const int p = data.p();
  const double tol = 0.5e-8;
  double amax = family.kind == Family::bernoulli_logit ? 0.25 : 1.0;
  const double L_max =
      std::max(1e-12, 1.02 * s * amax * power_iteration_sq_norm(data.X));
  // Backtracking stepsize: start optimistic, grow L on majorization
  // violations, relax it again between iterations.
  double L = L_max / 16.0;

  Vector beta = Vector::Zero(p);
  Vector momentum = beta;
  double t_acc = 1.0;
  double f_best = penalized_objective(data, family, s, penalty.lambda, beta);
  auto grad_at = [&](const Vector& b) -> Vector {
    return s * (data.X.transpose() * (cumulant_mean(family, data.X * b) - data.y));
  };
  auto smooth_loss = [&](const Vector& b) {
    Vector eta = data.X * b;
    return s * (cumulant_sum(family, eta) - data.y.dot(eta));
  };

  IndexList last_support;
  for (int iter = 1; iter <= kMaxSweeps; ++iter) {
    Vector g = grad_at(momentum);
    double f_m = smooth_loss(momentum);
    Vector next(p);
    for (;;) {
      for (int j = 0; j < p; ++j)
        next(j) = soft_threshold(momentum(j) - g(j) / L, penalty.lambda(j) / L);
      Vector diff = next - momentum;
      double quad = f_m + g.dot(diff) + 0.5 * L * diff.squaredNorm();
      if (smooth_loss(next) <= quad + 1e-12 * std::fabs(quad) || L >= L_max)
        break;
      L = std::min(L_max, 2.0 * L);
    }
    double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t_acc * t_acc));
    Vector accel = next + ((t_acc - 1.0) / t_next) * (next - beta);
    double f_next = penalized_objective(data, family, s, penalty.lambda, next);
    if (f_next > f_best) {  // function-value restart
      momentum = next;
      t_acc = 1.0;
    } else {
      momentum = accel;
      t_acc = t_next;
      f_best = f_next;
    }
    beta = next;
    L = std::max(L_max / 1024.0, 0.5 * L);

    if (iter % 10 == 0 || iter == kMaxSweeps) {
      Vector grad = grad_at(beta);
      if (kkt_residual_from_grad(beta, grad, penalty.lambda) < tol) return beta;
      const double thr = activity_threshold(beta);
      IndexList support;
      for (int j = 0; j < p; ++j)
        if (std::fabs(beta(j)) > thr) support.push_back(j);
      if (!support.empty() && support == last_support) {
        Vector signs(support.size());
        for (std::size_t j = 0; j < support.size(); ++j)
          signs(j) = beta(support[j]) > 0.0 ? 1.0 : -1.0;
        Vector polished = beta;
        for (int j = 0; j < p; ++j) polished(j) = 0.0;
        for (std::size_t j = 0; j < support.size(); ++j)
          polished(support[j]) = beta(support[j]);
        if (newton_polish(data, family, s, penalty.lambda, support, signs,
                          polished)) {
          Vector pg = grad_at(polished);
          if (kkt_residual_from_grad(polished, pg, penalty.lambda) < tol)
            return polished;
          double fp = penalized_objective(data, family, s, penalty.lambda, polished);
          if (fp < f_best) {
            beta = polished;
            momentum = polished;
            t_acc = 1.0;
            f_best = fp;
          }
        }
      }
      last_support = std::move(support);
    }
  }
  Vector grad = grad_at(beta);
  std::ostringstream msg;
  msg << "proximal solver hit the iteration cap; KKT residual "
      << kkt_residual_from_grad(beta, grad, penalty.lambda);
  throw SolverError(msg.str());
}

}  // namespace

Vector solve_weighted_lasso(const Dataset& data, const PenaltySpec& penalty,
                            const FamilySpec& family, int n_total) {
  data.validate(family);
  penalty.validate(data.p());
  const double s = lasso_loss_scale(n_total, data.n());
  Vector beta = family.kind == Family::gaussian
                    ? solve_gaussian_cd(data, penalty, s)
                    : solve_proximal(data, penalty, family, s);
  kkt_audit::record_residual(check_kkt(data, penalty, family, n_total, beta));
  return beta;
}

SelectionSummary extract_selection(const Vector& beta_hat, const Vector& grad,
                                   const PenaltySpec& penalty) {
  const int p = static_cast<int>(beta_hat.size());
  if (grad.size() != p || penalty.lambda.size() != p)
    throw InvalidInputError("extract_selection: dimension mismatch");
  const double thr = activity_threshold(beta_hat);
  SelectionSummary out;
  out.gamma = Vector::Zero(p);
  std::vector<double> signs, values, z;
  for (int j = 0; j < p; ++j) {
    if (std::fabs(beta_hat(j)) > thr) {
      out.E.push_back(j);
      double sgn = beta_hat(j) > 0.0 ? 1.0 : -1.0;
      signs.push_back(sgn);
      values.push_back(beta_hat(j));
      out.gamma(j) = penalty.lambda(j) * sgn;
    } else {
      double zj = -grad(j) / penalty.lambda(j);
      kkt_audit::record_inactive_z(std::fabs(zj));
      if (std::fabs(zj) > 1.0 + 1e-6)
        throw KktViolationError("inactive subgradient " + std::to_string(zj) +
                                " exceeds 1 beyond tolerance at coordinate " +
                                std::to_string(j));
      if (std::fabs(zj) > 1.0) zj = zj > 0.0 ? 1.0 : -1.0;
      z.push_back(zj);
      out.gamma(j) = penalty.lambda(j) * zj;
    }
  }
  out.S = Eigen::Map<Vector>(signs.data(), signs.size());
  out.B = Eigen::Map<Vector>(values.data(), values.size());
  out.Z = Eigen::Map<Vector>(z.data(), z.size());
  return out;
}

double check_kkt(const Dataset& data, const PenaltySpec& penalty,
                 const FamilySpec& family, int n_total,
                 const Vector& beta_hat) {
  Vector grad = lasso_gradient(data, family, n_total, beta_hat);
  return kkt_residual_from_grad(beta_hat, grad, penalty.lambda);
}

double deviance_score(const Dataset& data, const FamilySpec& family,
                      const Vector& beta) {
  Vector eta = data.X * beta;
  return (cumulant_sum(family, eta) - data.y.dot(eta)) / data.n();
}

PenaltySpec tune_lambda(const Dataset& train, const Dataset& validation,
                        const FamilySpec& family,
                        const std::vector<double>& grid) {
  if (grid.empty()) throw InvalidInputError("tune_lambda: empty grid");
  train.validate(family);
  validation.validate(family);
  if (train.p() != validation.p())
    throw DataError("tune_lambda: train/validation dimension mismatch");
  const int p = train.p();
  double mean = train.y.mean();
  double sd = train.n() > 1
                  ? std::sqrt((train.y.array() - mean).square().sum() /
                              (train.n() - 1))
                  : 0.0;
  if (!(sd > 0.0)) sd = 1.0;  // constant response; keep the grid usable
  const double base = std::sqrt(2.0 * std::log(static_cast<double>(p))) * sd;

  std::vector<double> ts = grid;
  std::sort(ts.begin(), ts.end());
  bool any_ok = false;
  double best_score = 0.0;
  PenaltySpec best;
  std::string last_error;
  for (double t : ts) {
    if (!(t > 0.0)) continue;
    PenaltySpec cand = PenaltySpec::uniform(p, t * base);
    try {
      Vector beta = solve_weighted_lasso(train, cand, family, train.n());
      double score = deviance_score(validation, family, beta);
      if (!any_ok || score < best_score) {
        any_ok = true;
        best_score = score;
        best = cand;
      }
    } catch (const Error& e) {
      last_error = e.what();
    }
  }
  if (!any_ok)
    throw TuningError("every candidate failed; last error: " + last_error);
  return best;
}

}  // namespace distsi

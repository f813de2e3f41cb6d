#include "distsi/simulate.hpp"

#include <array>
#include <cmath>
#include <map>
#include <mutex>
#include <set>
#include <thread>

namespace distsi {

namespace {

enum Purpose : std::uint64_t {
  kDesign = 1,
  kBeta = 2,
  kResponse = 3,
  kTuneDesign = 4,
  kTuneResponse = 5,
  kTarget = 6,
};

}  // namespace

Matrix gen_design(int n, int p, double ar_rho, CounterRng& rng) {
  if (!(ar_rho >= 0.0 && ar_rho < 1.0))
    throw InvalidInputError("gen_design: ar_rho must lie in [0,1)");
  Matrix X(n, p);
  const double innov = std::sqrt(1.0 - ar_rho * ar_rho);
  for (int i = 0; i < n; ++i) {
    double prev = rng.normal();
    X(i, 0) = prev;
    for (int j = 1; j < p; ++j) {
      prev = ar_rho * prev + innov * rng.normal();
      X(i, j) = prev;
    }
  }
  return X;
}

Vector make_beta(int p, int s, double c, CounterRng& rng) {
  if (s > p) throw InvalidInputError("make_beta: s must not exceed p");
  Vector beta = Vector::Zero(p);
  const double magnitude = std::sqrt(2.0 * c * std::log(static_cast<double>(p)));
  std::vector<int> pool(p);
  for (int i = 0; i < p; ++i) pool[i] = i;
  for (int i = 0; i < s; ++i) {
    int j = i + rng.uniform_int(p - i);
    std::swap(pool[i], pool[j]);
  }
  for (int i = 0; i < s; ++i) {
    double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
    beta(pool[i]) = sign * magnitude;
  }
  return beta;
}

Vector gen_response(const Matrix& X, const Vector& beta,
                    const FamilySpec& family, CounterRng& rng) {
  if (X.cols() != beta.size())
    throw InvalidInputError("gen_response: shape mismatch");
  Vector eta = X * beta;
  Vector y(X.rows());
  if (family.is_gaussian()) {
    double sd = std::sqrt(family.dispersion);
    for (Eigen::Index i = 0; i < y.size(); ++i)
      y(i) = eta(i) + sd * rng.normal();
  } else {
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      double mu = family_eval(family, eta(i)).A1;
      y(i) = rng.uniform() < mu ? 1.0 : 0.0;
    }
  }
  return y;
}

void ScenarioConfig::validate() const {
  if (reps < 1) throw ConfigError("scenario: reps must be >= 1");
  if (K < 1) throw ConfigError("scenario: K must be >= 1");
  if (n_k < 1 || n0 < 1) throw ConfigError("scenario: node sizes must be >= 1");
  if (p < 1) throw ConfigError("scenario: p must be >= 1");
  if (sparsity > p) throw ConfigError("scenario: sparsity exceeds p");
  if (!(ar_rho >= 0.0 && ar_rho < 1.0))
    throw ConfigError("scenario: ar_rho must lie in [0,1)");
  if (!(alpha > 0.0 && alpha < 1.0))
    throw ConfigError("scenario: alpha must lie in (0,1)");
  if (lambda_grid.empty()) throw ConfigError("scenario: empty lambda grid");
  if (methods.empty()) throw ConfigError("scenario: no methods requested");
  if (signal < 0.0) throw ConfigError("scenario: signal must be >= 0");
}

namespace {

Matrix ar1_covariance(int p, double ar_rho) {
  Matrix S(p, p);
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < p; ++j) S(i, j) = std::pow(ar_rho, std::abs(i - j));
  return S;
}

}  // namespace

Vector projected_target(const Vector& beta, const IndexList& E,
                        const FamilySpec& family, double ar_rho,
                        int oracle_n, CounterRng& rng) {
  const int p = static_cast<int>(beta.size());
  if (family.is_gaussian()) {
    Matrix S = ar1_covariance(p, ar_rho);
    IndexList all(p);
    for (int j = 0; j < p; ++j) all[j] = j;
    Matrix S_EE = slice(S, E, E);
    Matrix S_Ep = slice(S, E, all);
    return spd_solve(S_EE, Vector(S_Ep * beta), "projected target");
  }
  // Logistic: fit the selected model against the conditional mean response
  // on a large synthetic design. The minimizer sits near the restriction of
  // the true coefficients, which makes a good Newton start even when the
  // responses are strongly saturated.
  Matrix X = gen_design(oracle_n, p, ar_rho, rng);
  Vector mu = cumulant_mean(family, X * beta);
  Matrix X_E(oracle_n, E.size());
  for (std::size_t j = 0; j < E.size(); ++j) X_E.col(j) = X.col(E[j]);
  Vector b = slice(beta, E);
  Vector eta = X_E * b;
  double loss = (cumulant_sum(family, eta) - mu.dot(eta)) / oracle_n;
  for (int iter = 0; iter < 200; ++iter) {
    Vector grad = X_E.transpose() * (cumulant_mean(family, eta) - mu) / oracle_n;
    if (grad.lpNorm<Eigen::Infinity>() < 1e-9) break;
    Vector w = cumulant_var(family, eta);
    Matrix hess = X_E.transpose() * w.asDiagonal() * X_E / oracle_n;
    Vector step = spd_solve(hess, Vector(-grad), "projected target curvature");
    double slope = grad.dot(step);
    double t = 1.0;
    while (t > 1e-14) {
      Vector eta_new = eta + t * (X_E * step);
      double loss_new =
          (cumulant_sum(family, eta_new) - mu.dot(eta_new)) / oracle_n;
      if (loss_new <= loss + 1e-4 * t * slope) {
        b += t * step;
        eta = std::move(eta_new);
        loss = loss_new;
        break;
      }
      t *= 0.5;
    }
  }
  return b;
}

namespace {

struct ReplicateOutput {
  std::vector<MetricsRow> rows;
  bool failed = false;
};

ReplicateOutput run_replicate_sim(const ScenarioConfig& cfg, int rep) {
  ReplicateOutput out;
  try {
    CounterRng rng_beta(cfg.seed, rep, kBeta);
    Vector beta = make_beta(cfg.p, cfg.sparsity, cfg.signal, rng_beta);

    const int n = cfg.n0 + cfg.K * cfg.n_k;
    CounterRng rng_x(cfg.seed, rep, kDesign);
    Matrix X = gen_design(n, cfg.p, cfg.ar_rho, rng_x);
    CounterRng rng_y(cfg.seed, rep, kResponse);
    Vector y = gen_response(X, beta, cfg.family, rng_y);

    std::vector<Dataset> nodes(cfg.K + 1);
    nodes[0] = Dataset{X.topRows(cfg.n0), y.head(cfg.n0), 0};
    for (int k = 1; k <= cfg.K; ++k) {
      int start = cfg.n0 + (k - 1) * cfg.n_k;
      nodes[k] = Dataset{X.middleRows(start, cfg.n_k),
                         y.segment(start, cfg.n_k), k};
    }

    // Fresh tuning dataset of size n0, split into train/validation halves;
    // used only to pick lambda.
    CounterRng rng_tx(cfg.seed, rep, kTuneDesign);
    Matrix Xt = gen_design(cfg.n0, cfg.p, cfg.ar_rho, rng_tx);
    CounterRng rng_ty(cfg.seed, rep, kTuneResponse);
    Vector yt = gen_response(Xt, beta, cfg.family, rng_ty);
    int half = cfg.n0 / 2;
    Dataset tune_train{Xt.topRows(half), yt.head(half), 0};
    Dataset tune_val{Xt.bottomRows(cfg.n0 - half), yt.tail(cfg.n0 - half), 0};
    PenaltySpec penalty =
        tune_lambda(tune_train, tune_val, cfg.family, cfg.lambda_grid);

    ProtocolOptions opts;
    opts.alpha = cfg.alpha;
    opts.rule = cfg.rule;
    ProtocolResult dist = run_protocol(nodes, cfg.family, {penalty}, opts);
    const IndexList& E = dist.E;
    const int model_size = static_cast<int>(E.size());

    CounterRng rng_target(cfg.seed, rep, kTarget);
    Vector target = projected_target(beta, E, cfg.family, cfg.ar_rho,
                                     cfg.target_oracle_n, rng_target);

    std::set<int> support;
    for (int j = 0; j < cfg.p; ++j)
      if (beta(j) != 0.0) support.insert(j);

    auto append = [&](const InferenceReport& report) {
      for (std::size_t j = 0; j < report.rows.size(); ++j) {
        const auto& r = report.rows[j];
        MetricsRow row;
        row.rep = rep;
        row.method = r.method;
        row.coef = r.coef;
        row.covered = (r.ci_lo <= target(j) && target(j) <= r.ci_hi) ? 1 : 0;
        row.length = r.ci_hi - r.ci_lo;
        row.detected =
            (support.count(r.coef) && (r.ci_lo > 0.0 || r.ci_hi < 0.0)) ? 1 : 0;
        row.model_size = model_size;
        out.rows.push_back(row);
      }
    };

    for (Method m : cfg.methods) {
      if (m == Method::dist_si) {
        append(dist.report);
      } else if (m == Method::splitting) {
        append(baseline_infer(Method::splitting, nodes[0].X, nodes[0].y, E,
                              cfg.family, cfg.alpha));
      } else {
        append(baseline_infer(Method::naive, X, y, E, cfg.family, cfg.alpha));
      }
    }
  } catch (const Error&) {
    out.failed = true;
    out.rows.clear();
  }
  return out;
}

}  // namespace

ScenarioResult run_scenario(const ScenarioConfig& cfg) {
  cfg.validate();
  std::vector<ReplicateOutput> outputs(cfg.reps);
  int threads = std::max(1, cfg.threads);
  if (threads == 1) {
    for (int r = 0; r < cfg.reps; ++r) outputs[r] = run_replicate_sim(cfg, r);
  } else {
    std::mutex mu;
    int next = 0;
    auto worker = [&]() {
      for (;;) {
        int r;
        {
          std::lock_guard<std::mutex> lock(mu);
          if (next >= cfg.reps) return;
          r = next++;
        }
        outputs[r] = run_replicate_sim(cfg, r);
      }
    };
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  ScenarioResult result;
  std::map<Method, std::vector<double>> cover_by_rep_m;
  std::map<Method, std::array<double, 4>> acc;  // cover, length, detected, count
  std::map<Method, std::map<int, std::pair<double, double>>> per_rep;
  for (int r = 0; r < cfg.reps; ++r) {
    if (outputs[r].failed) {
      ++result.failures;
      continue;
    }
    for (const auto& row : outputs[r].rows) {
      result.rows.push_back(row);
      auto& a = acc[row.method];
      a[0] += row.covered;
      a[1] += row.length;
      a[2] += row.detected;
      a[3] += 1.0;
      auto& pr = per_rep[row.method][row.rep];
      pr.first += row.covered;
      pr.second += 1.0;
    }
  }
  const double denom_signals =
      static_cast<double>(std::max(1, cfg.reps - result.failures)) *
      std::max(1, cfg.sparsity);
  for (auto& [method, a] : acc) {
    MethodSummary s;
    s.method = method;
    s.coverage = a[3] > 0 ? a[0] / a[3] : 0.0;
    s.mean_length = a[3] > 0 ? a[1] / a[3] : 0.0;
    s.power = a[2] / denom_signals;
    // Normal-approximation error bar across replicate-level coverage means.
    std::vector<double> reps_cov;
    for (auto& [rep, pr] : per_rep[method])
      if (pr.second > 0) reps_cov.push_back(pr.first / pr.second);
    if (reps_cov.size() > 1) {
      double mean = 0.0;
      for (double v : reps_cov) mean += v;
      mean /= reps_cov.size();
      double var = 0.0;
      for (double v : reps_cov) var += (v - mean) * (v - mean);
      var /= (reps_cov.size() - 1);
      s.coverage_se = std::sqrt(var / reps_cov.size());
    }
    result.summary.push_back(s);
  }
  return result;
}

}  // namespace distsi

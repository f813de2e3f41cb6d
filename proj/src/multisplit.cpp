#include "distsi/multisplit.hpp"

#include "distsi/bundle.hpp"
#include "distsi/rng.hpp"

#include <cmath>
#include <set>

namespace distsi {

void MultisplitConfig::validate(int n) const {
  if (B < 1) throw ConfigError("multisplit: B must be >= 1");
  if (K < 1) throw ConfigError("multisplit: K must be >= 1");
  if (!(n1 > 0 && n1 < n))
    throw ConfigError("multisplit: need 0 < n1 < n");
  if (!(gamma_min > 0.0 && gamma_min < 1.0))
    throw ConfigError("multisplit: gamma_min must lie in (0,1)");
  if (!(alpha > 0.0 && alpha < 1.0))
    throw ConfigError("multisplit: alpha must lie in (0,1)");
}

void PvalueMatrix::validate() const {
  for (Eigen::Index i = 0; i < p.rows(); ++i)
    for (Eigen::Index j = 0; j < p.cols(); ++j)
      if (!(p(i, j) >= 0.0 && p(i, j) <= 1.0))
        throw InvalidInputError("p-values must lie in [0,1]");
}

namespace {

// Simple random sample of size m without replacement (partial Fisher-Yates);
// subsets across calls are independent streams.
IndexList draw_subset(int n, int m, CounterRng& rng) {
  std::vector<int> pool(n);
  for (int i = 0; i < n; ++i) pool[i] = i;
  for (int i = 0; i < m; ++i) {
    int j = i + rng.uniform_int(n - i);
    std::swap(pool[i], pool[j]);
  }
  IndexList out(pool.begin(), pool.begin() + m);
  std::sort(out.begin(), out.end());
  return out;
}

Dataset subset_rows(const Dataset& data, const IndexList& rows, int node_id) {
  Dataset out;
  out.X = slice_rows(data.X, rows);
  out.y = slice(data.y, rows);
  out.node_id = node_id;
  return out;
}

constexpr std::uint64_t kPurposeSubset = 0x73756273ull;

}  // namespace

Vector run_replicate(const Dataset& data, const MultisplitConfig& config,
                     const FamilySpec& family, const PenaltySpec& penalty,
                     int replicate_index) {
  const int n = data.n();
  const int p = data.p();
  config.validate(n);
  data.validate(family);
  penalty.validate(p);
  Vector ones = Vector::Ones(p);
  const double rho = static_cast<double>(config.n1) / n;
  const double sqrt_n = std::sqrt(static_cast<double>(n));

  std::vector<IndexList> E_sets(config.K);
  std::vector<SelectionSummary> selections(config.K);
  for (int k = 0; k < config.K; ++k) {
    CounterRng rng(config.seed,
                   static_cast<std::uint64_t>(replicate_index) * 1000 + k,
                   kPurposeSubset);
    Dataset sub = subset_rows(data, draw_subset(n, config.n1, rng), k + 1);
    Vector beta = solve_weighted_lasso(sub, penalty, family, n);
    Vector grad = lasso_gradient(sub, family, n, beta);
    selections[k] = extract_selection(beta, grad, penalty);
    E_sets[k] = selections[k].E;
  }

  IndexList E;
  {
    std::set<int> u;
    for (const auto& s : E_sets) u.insert(s.begin(), s.end());
    E.assign(u.begin(), u.end());
  }
  // Empty or over-wide models cannot support inference; the replicate
  // reports all-ones (conservative).
  if (E.empty() || static_cast<int>(E.size()) >= n) return ones;

  Matrix X_E(n, E.size());
  for (std::size_t j = 0; j < E.size(); ++j) X_E.col(j) = data.X.col(E[j]);
  GlmFit fit = fit_glm(X_E, data.y, family);
  double dispersion_scale = 1.0;
  if (family.is_gaussian() &&
      family.dispersion_mode == DispersionMode::estimate) {
    double rss = (data.y - X_E * fit.beta).squaredNorm();
    dispersion_scale = rss / (n - static_cast<int>(E.size()));
  }
  Matrix info_EE = fit.obs_fi / dispersion_scale;
  const double total_dispersion = family.dispersion * dispersion_scale;

  AssemblyInputs inputs;
  inputs.info = info_EE;
  inputs.support = E;
  inputs.E = E;
  inputs.E_sets = E_sets;
  inputs.rho.assign(config.K + 1, rho);
  inputs.rho[0] = 1.0 - rho;
  for (int k = 0; k < config.K; ++k) {
    inputs.gammas.push_back(slice(selections[k].gamma, E) / total_dispersion);
    inputs.signs.push_back(selections[k].S);
  }
  MatrixBundle bundle = assemble_matrices_wr(inputs, rho);

  Vector W0(bundle.d_bar());
  int off = 0;
  for (int k = 0; k < config.K; ++k) {
    for (Eigen::Index i = 0; i < selections[k].B.size(); ++i)
      W0(off + i) = sqrt_n * selections[k].B(i);
    off += static_cast<int>(selections[k].B.size());
  }
  OptResult opt = solve_selection_opt(bundle, fit.beta, n, W0);
  Vector mle = selective_mle(bundle, fit.beta, opt, n, info_EE);
  Matrix fisher = selective_fisher(bundle, opt, info_EE);
  InferenceReport report = infer(mle, fisher, E, n, config.alpha,
                                 Method::dist_si);
  Vector out = ones;
  for (const auto& row : report.rows) out(row.coef) = row.pvalue;
  return out;
}

Vector run_replicate_splitting(const Dataset& data,
                               const MultisplitConfig& config,
                               const FamilySpec& family,
                               const PenaltySpec& penalty,
                               int replicate_index) {
  const int n = data.n();
  const int p = data.p();
  config.validate(n);
  Vector ones = Vector::Ones(p);
  // Same subset stream as the conditional method so comparisons are paired.
  CounterRng rng(config.seed,
                 static_cast<std::uint64_t>(replicate_index) * 1000,
                 kPurposeSubset);
  IndexList sel_rows = draw_subset(n, config.n1, rng);
  Dataset sub = subset_rows(data, sel_rows, 1);
  Vector beta = solve_weighted_lasso(sub, penalty, family, n);
  Vector grad = lasso_gradient(sub, family, n, beta);
  SelectionSummary sel = extract_selection(beta, grad, penalty);
  if (sel.E.empty()) return ones;

  std::vector<char> in_sel(n, 0);
  for (int i : sel_rows) in_sel[i] = 1;
  IndexList rest;
  for (int i = 0; i < n; ++i)
    if (!in_sel[i]) rest.push_back(i);
  if (static_cast<int>(sel.E.size()) >= static_cast<int>(rest.size()))
    return ones;
  Dataset hold = subset_rows(data, rest, 0);
  InferenceReport report;
  try {
    report = baseline_infer(Method::splitting, hold.X, hold.y, sel.E, family,
                            config.alpha);
  } catch (const SeparationError&) {
    return ones;
  }
  Vector out = ones;
  for (const auto& row : report.rows) out(row.coef) = row.pvalue;
  return out;
}

Vector aggregate_pvalues(const PvalueMatrix& P, double gamma_min) {
  if (!(gamma_min > 0.0 && gamma_min < 1.0))
    throw InvalidInputError("gamma_min must lie in (0,1)");
  P.validate();
  const int B = static_cast<int>(P.p.rows());
  const int p = static_cast<int>(P.p.cols());
  const double factor = 1.0 - std::log(gamma_min);
  Vector out(p);
  std::vector<double> col(B);
  for (int j = 0; j < p; ++j) {
    for (int b = 0; b < B; ++b) col[b] = P.p(b, j);
    std::sort(col.begin(), col.end());
    // Q_j(gamma) is piecewise p_(m)/gamma on ((m-1)/B, m/B]; the infimum
    // over (gamma_min, 1) is attained along the breakpoints m/B > gamma_min.
    double inf_q = 1.0;
    for (int m = 1; m <= B; ++m) {
      double gamma_hi = static_cast<double>(m) / B;
      if (!(gamma_hi > gamma_min)) continue;
      inf_q = std::min(inf_q, col[m - 1] / gamma_hi);
    }
    out(j) = std::min(1.0, factor * inf_q);
  }
  return out;
}

double dor(const std::vector<bool>& predicted, const std::vector<bool>& truth) {
  if (predicted.size() != truth.size())
    throw InvalidInputError("dor: vectors must have equal length");
  double tp = 0, tn = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    if (predicted[i] && truth[i]) ++tp;
    else if (predicted[i] && !truth[i]) ++fp;
    else if (!predicted[i] && truth[i]) ++fn;
    else ++tn;
  }
  if (tp == 0 || tn == 0 || fp == 0 || fn == 0) {
    tp += 0.5;
    tn += 0.5;
    fp += 0.5;
    fn += 0.5;
  }
  return (tp * tn) / (fp * fn);
}

namespace {

MultisplitResult run_driver(const Dataset& data, const MultisplitConfig& config,
                            const FamilySpec& family,
                            const PenaltySpec& penalty, bool baseline) {
  config.validate(data.n());
  PvalueMatrix P;
  P.p = Matrix::Ones(config.B, data.p());
  for (int b = 0; b < config.B; ++b) {
    Vector row = baseline
                     ? run_replicate_splitting(data, config, family, penalty, b)
                     : run_replicate(data, config, family, penalty, b);
    P.p.row(b) = row.transpose();
  }
  MultisplitResult out;
  out.P = aggregate_pvalues(P, config.gamma_min);
  out.reject.resize(data.p());
  for (int j = 0; j < data.p(); ++j) out.reject[j] = out.P(j) < config.alpha;
  out.replicates = std::move(P);
  return out;
}

}  // namespace

MultisplitResult run_multisplit(const Dataset& data,
                                const MultisplitConfig& config,
                                const FamilySpec& family,
                                const PenaltySpec& penalty) {
  return run_driver(data, config, family, penalty, false);
}

MultisplitResult run_multisplit_baseline(const Dataset& data,
                                         const MultisplitConfig& config,
                                         const FamilySpec& family,
                                         const PenaltySpec& penalty) {
  return run_driver(data, config, family, penalty, true);
}

}  // namespace distsi

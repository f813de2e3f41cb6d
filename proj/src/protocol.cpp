#include "distsi/protocol.hpp"

#include "distsi/rng.hpp"

#include <cmath>
#include <set>

namespace distsi {

IndexList aggregate_models(const std::vector<IndexList>& sets,
                           const AggregationRule& rule) {
  if (sets.empty())
    throw InvalidInputError("aggregate_models: no selected sets supplied");
  bool any = false;
  for (const auto& s : sets)
    if (!s.empty()) any = true;
  if (!any)
    throw EmptyModelError("every machine selected the empty model");

  if (rule.kind == AggregationRule::Kind::union_rule) {
    std::set<int> u;
    for (const auto& s : sets) u.insert(s.begin(), s.end());
    return IndexList(u.begin(), u.end());
  }

  // Grouped rule: one seeded uniform pick from every group touched by a
  // selected predictor.
  if (rule.groups.empty())
    throw InvalidInputError("grouped aggregation requires a partition of [p]");
  int p = 0;
  for (const auto& g : rule.groups) p += static_cast<int>(g.size());
  std::vector<int> group_of(p, -1);
  for (std::size_t gi = 0; gi < rule.groups.size(); ++gi)
    for (int j : rule.groups[gi]) {
      if (j < 0 || j >= p || group_of[j] != -1)
        throw InvalidInputError("groups must form a partition of [p]");
      group_of[j] = static_cast<int>(gi);
    }
  std::set<int> touched;
  for (const auto& s : sets)
    for (int j : s) {
      if (j < 0 || j >= p)
        throw InvalidInputError("selected index outside the grouped range");
      touched.insert(group_of[j]);
    }
  std::set<int> picked;
  for (int gi : touched) {
    CounterRng rng(rule.seed, static_cast<std::uint64_t>(gi), 0x67726f75ull);
    const auto& g = rule.groups[gi];
    picked.insert(g[rng.uniform_int(static_cast<int>(g.size()))]);
  }
  return IndexList(picked.begin(), picked.end());
}

namespace {

IndexList sorted_union_with(const IndexList& E,
                            const std::vector<IndexList>& sets) {
  std::set<int> u(E.begin(), E.end());
  for (const auto& s : sets) u.insert(s.begin(), s.end());
  return IndexList(u.begin(), u.end());
}

// Rethrow with node attribution, preserving the concrete error type.
[[noreturn]] void rethrow_for_node(int node_id, const Error& e) {
  std::string msg = "node " + std::to_string(node_id) + ": " + e.what();
  switch (e.category()) {
    case ErrorCategory::config: throw ConfigError(msg);
    case ErrorCategory::data: throw DataError(msg);
    case ErrorCategory::numeric:
      if (dynamic_cast<const SeparationError*>(&e)) throw SeparationError(msg);
      if (dynamic_cast<const SingularDesignError*>(&e))
        throw SingularDesignError(msg);
      if (dynamic_cast<const SolverError*>(&e)) throw SolverError(msg);
      if (dynamic_cast<const KktViolationError*>(&e))
        throw KktViolationError(msg);
      if (dynamic_cast<const EmptyModelError*>(&e)) throw EmptyModelError(msg);
      throw SolverError(msg);
  }
  throw SolverError(msg);
}

// A local machine. Raw data stays private to this class; every value that
// leaves does so through a WireMessage, and every touch of the data is
// recorded in the access log.
class LocalNode {
 public:
  LocalNode(const Dataset& data, const FamilySpec& family,
            const PenaltySpec& penalty, int n_total, Transcript* transcript)
      : data_(data),
        family_(family),
        penalty_(penalty),
        n_total_(n_total),
        transcript_(transcript) {}

  WireMessage select() {
    touch("selection");
    try {
      Vector beta = solve_weighted_lasso(data_, penalty_, family_, n_total_);
      Vector grad = lasso_gradient(data_, family_, n_total_, beta);
      selection_ = extract_selection(beta, grad, penalty_);
    } catch (const Error& e) {
      rethrow_for_node(data_.node_id, e);
    }
    SelectedSetBody body;
    body.indices = selection_.E;
    body.values = selection_.B;
    return WireMessage{1, MsgKind::SelectedSet, data_.node_id, body};
  }

  WireMessage summarize(const ModelBroadcastBody& model) {
    touch("summarize");
    LocalSummaryBody body;
    try {
      Matrix X_E = slice_cols(model.E);
      GlmFit fit = fit_glm(X_E, data_.y, family_);
      body.beta_E = fit.beta;
      // obs-FI over the broadcast support, weighted at the local selected-
      // model MLE (zero outside E).
      Matrix X_S = slice_cols(model.support);
      Vector w = cumulant_var(family_, X_E * fit.beta);
      body.info = symmetrized(X_S.transpose() * w.asDiagonal() * X_S /
                              (data_.n() * family_.dispersion));
      body.gamma = slice(selection_.gamma, model.support);
      body.yty = data_.y.squaredNorm();
      body.n_k = data_.n();
    } catch (const Error& e) {
      rethrow_for_node(data_.node_id, e);
    }
    return WireMessage{1, MsgKind::LocalSummary, data_.node_id, body};
  }

  WireMessage compensate(const ModelBroadcastBody& model,
                         const MleBroadcastBody& mle) {
    touch("compensate");
    ResidualCompensationBody body;
    try {
      Matrix X_E = slice_cols(model.E);
      Vector resid = cumulant_mean(family_, X_E * mle.beta_E) - data_.y;
      IndexList off_E = support_minus_E(model);
      body.values = Vector(off_E.size());
      for (std::size_t i = 0; i < off_E.size(); ++i)
        body.values(i) = data_.X.col(off_E[i]).dot(resid);
    } catch (const Error& e) {
      rethrow_for_node(data_.node_id, e);
    }
    return WireMessage{1, MsgKind::ResidualCompensation, data_.node_id, body};
  }

  static IndexList support_minus_E(const ModelBroadcastBody& model) {
    std::set<int> e(model.E.begin(), model.E.end());
    IndexList out;
    for (int j : model.support)
      if (!e.count(j)) out.push_back(j);
    return out;
  }

 private:
  Matrix slice_cols(const IndexList& idx) const {
    Matrix out(data_.X.rows(), idx.size());
    for (std::size_t j = 0; j < idx.size(); ++j) out.col(j) = data_.X.col(idx[j]);
    return out;
  }

  void touch(const char* phase) {
    transcript_->data_access.push_back({data_.node_id, phase});
  }

  const Dataset& data_;
  const FamilySpec& family_;
  const PenaltySpec& penalty_;
  int n_total_;
  SelectionSummary selection_;
  Transcript* transcript_;
};

}  // namespace

ProtocolResult run_protocol(const std::vector<Dataset>& nodes,
                            const FamilySpec& family,
                            const std::vector<PenaltySpec>& penalties,
                            const ProtocolOptions& options) {
  if (nodes.size() < 2)
    throw InvalidInputError("run_protocol: need a holdout plus K >= 1 locals");
  const int K = static_cast<int>(nodes.size()) - 1;
  if (penalties.size() != 1 && static_cast<int>(penalties.size()) != K)
    throw InvalidInputError("run_protocol: one penalty, or one per local node");
  const int p = nodes[0].p();
  int n = 0;
  for (const auto& d : nodes) {
    d.validate(family);
    if (d.p() != p) throw DataError("nodes disagree on the predictor count");
    n += d.n();
  }
  const double sqrt_n = std::sqrt(static_cast<double>(n));
  std::vector<double> rho(K + 1);
  for (int k = 0; k <= K; ++k) rho[k] = static_cast<double>(nodes[k].n()) / n;

  ProtocolResult result;
  result.n = n;
  Transcript& tr = result.transcript;

  auto penalty_for = [&](int k) -> const PenaltySpec& {
    return penalties.size() == 1 ? penalties[0] : penalties[k - 1];
  };

  std::vector<LocalNode> machines;
  machines.reserve(K);
  for (int k = 1; k <= K; ++k)
    machines.emplace_back(nodes[k], family, penalty_for(k), n, &tr);

  // Step 1: local variable selection; supports announced to the center.
  std::vector<IndexList> E_sets(K);
  std::vector<Vector> B_values(K);
  for (int k = 0; k < K; ++k) {
    std::string frame = encode(machines[k].select());
    tr.messages.push_back({0, k + 1, -1, frame});
    WireMessage msg = decode(frame);
    const auto& body = std::get<SelectedSetBody>(msg.body);
    E_sets[k] = body.indices;
    B_values[k] = body.values;
  }
  result.E_sets = E_sets;
  result.lasso_values = B_values;

  // Step 2: the center aggregates the base models.
  IndexList E = aggregate_models(E_sets, options.rule);
  result.E = E;
  const bool general = options.rule.is_general();
  IndexList support = general ? sorted_union_with(E, E_sets) : E;

  // Exchange 1: model broadcast.
  ModelBroadcastBody model{E, support, general};
  tr.exchanges = 1;
  std::vector<ModelBroadcastBody> received_model(K);
  for (int k = 0; k < K; ++k) {
    std::string frame =
        encode(WireMessage{1, MsgKind::ModelBroadcast, -1, model});
    tr.messages.push_back({1, -1, k + 1, frame});
    received_model[k] = std::get<ModelBroadcastBody>(decode(frame).body);
  }

  // Exchange 2: local estimators, information, subgradients.
  tr.exchanges = 2;
  std::vector<LocalSummaryBody> summaries(K);
  for (int k = 0; k < K; ++k) {
    std::string frame = encode(machines[k].summarize(received_model[k]));
    tr.messages.push_back({2, k + 1, -1, frame});
    summaries[k] = std::get<LocalSummaryBody>(decode(frame).body);
  }

  // Central machine's own fit and information over the support.
  tr.data_access.push_back({nodes[0].node_id, "central-fit"});
  Matrix X0_E(nodes[0].n(), E.size());
  for (std::size_t j = 0; j < E.size(); ++j) X0_E.col(j) = nodes[0].X.col(E[j]);
  GlmFit fit0 = fit_glm(X0_E, nodes[0].y, family);
  Matrix X0_S(nodes[0].n(), support.size());
  for (std::size_t j = 0; j < support.size(); ++j)
    X0_S.col(j) = nodes[0].X.col(support[j]);
  Vector w0 = cumulant_var(family, X0_E * fit0.beta);
  Matrix info0 = symmetrized(X0_S.transpose() * w0.asDiagonal() * X0_S /
                             (nodes[0].n() * family.dispersion));

  // Information-weighted MLE merge over E, all nodes including the holdout.
  IndexList E_pos = positions_in(E, support);
  std::vector<GlmFit> fits(K + 1);
  fits[0] = GlmFit{fit0.beta, slice(info0, E_pos, E_pos), true, 0};
  for (int k = 0; k < K; ++k)
    fits[k + 1] = GlmFit{summaries[k].beta_E,
                         slice(summaries[k].info, E_pos, E_pos), true, 0};
  AggregatedMle agg = aggregate_mle(fits, rho);
  result.beta_E = agg.beta_E;

  // Pooled dispersion from the communicated residual second moments.
  double sigma2_extra = 1.0;
  if (family.is_gaussian() &&
      family.dispersion_mode == DispersionMode::estimate) {
    const int d = static_cast<int>(E.size());
    if (n <= d) throw InsufficientHoldoutError("n <= d; cannot estimate sigma^2");
    Matrix gram = Matrix::Zero(d, d);
    Vector xty = Vector::Zero(d);
    double yty = nodes[0].y.squaredNorm();
    gram += nodes[0].n() * family.dispersion * fits[0].obs_fi;
    xty += nodes[0].n() * family.dispersion * (fits[0].obs_fi * fits[0].beta);
    for (int k = 0; k < K; ++k) {
      gram += summaries[k].n_k * family.dispersion * fits[k + 1].obs_fi;
      xty += summaries[k].n_k * family.dispersion *
             (fits[k + 1].obs_fi * fits[k + 1].beta);
      yty += summaries[k].yty;
    }
    double rss = yty - 2.0 * agg.beta_E.dot(xty) +
                 agg.beta_E.dot(gram * agg.beta_E);
    sigma2_extra = rss / (n - d);
    if (!(sigma2_extra > 0.0))
      throw SolverError("nonpositive dispersion estimate");
  }
  result.sigma2_hat = family.dispersion * sigma2_extra;

  // Exchanges 3 and 4 (general rules): ship the MLE out, pool the
  // residual-score compensations back.
  std::optional<Vector> compensation;
  if (general) {
    MleBroadcastBody mle_body{agg.beta_E};
    tr.exchanges = 3;
    std::vector<MleBroadcastBody> received_mle(K);
    for (int k = 0; k < K; ++k) {
      std::string frame =
          encode(WireMessage{1, MsgKind::MleBroadcast, -1, mle_body});
      tr.messages.push_back({3, -1, k + 1, frame});
      received_mle[k] = std::get<MleBroadcastBody>(decode(frame).body);
    }
    tr.exchanges = 4;
    IndexList off_E = LocalNode::support_minus_E(model);
    Vector pooled = Vector::Zero(off_E.size());
    for (int k = 0; k < K; ++k) {
      std::string frame =
          encode(machines[k].compensate(received_model[k], received_mle[k]));
      tr.messages.push_back({4, k + 1, -1, frame});
      pooled += std::get<ResidualCompensationBody>(decode(frame).body).values;
    }
    tr.data_access.push_back({nodes[0].node_id, "central-compensation"});
    Vector resid0 = cumulant_mean(family, X0_E * agg.beta_E) - nodes[0].y;
    for (std::size_t i = 0; i < off_E.size(); ++i)
      pooled(i) += nodes[0].X.col(off_E[i]).dot(resid0);
    pooled /= n;

    Vector comp = Vector::Zero(support.size());
    IndexList off_pos = positions_in(off_E, support);
    for (std::size_t i = 0; i < off_E.size(); ++i)
      comp(off_pos[i]) =
          sqrt_n * pooled(i) / (family.dispersion * sigma2_extra);
    compensation = std::move(comp);
  }

  // Selective inference at the central machine.
  Matrix info_support = rho[0] * info0;
  for (int k = 0; k < K; ++k) info_support += rho[k + 1] * summaries[k].info;
  info_support = symmetrized(info_support / sigma2_extra);

  AssemblyInputs inputs;
  inputs.info = info_support;
  inputs.support = support;
  inputs.E = E;
  inputs.E_sets = E_sets;
  inputs.rho = rho;
  inputs.compensation_sqrt_n = compensation;
  for (int k = 0; k < K; ++k) {
    inputs.gammas.push_back(summaries[k].gamma /
                            (family.dispersion * sigma2_extra));
    Vector signs(E_sets[k].size());
    IndexList kpos = positions_in(E_sets[k], support);
    for (std::size_t i = 0; i < E_sets[k].size(); ++i)
      signs(i) = summaries[k].gamma(kpos[i]) > 0.0 ? 1.0 : -1.0;
    inputs.signs.push_back(std::move(signs));
  }
  MatrixBundle bundle = assemble_matrices(inputs);
  result.info_EE = slice(info_support, E_pos, E_pos);

  int d_bar = bundle.d_bar();
  Vector W0(d_bar);
  int off = 0;
  for (int k = 0; k < K; ++k) {
    for (Eigen::Index i = 0; i < B_values[k].size(); ++i)
      W0(off + i) = sqrt_n * B_values[k](i);
    off += static_cast<int>(B_values[k].size());
  }
  OptResult opt = solve_selection_opt(bundle, agg.beta_E, n, W0);
  Vector mle = selective_mle(bundle, agg.beta_E, opt, n, result.info_EE);
  Matrix fisher = selective_fisher(bundle, opt, result.info_EE);
  result.report = infer(mle, fisher, E, n, options.alpha, Method::dist_si);
  return result;
}

}  // namespace distsi

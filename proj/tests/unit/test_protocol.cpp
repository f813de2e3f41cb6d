#include "distsi/protocol.hpp"
#include "distsi/rng.hpp"

#include "../support/oracles.hpp"

#include <doctest.h>

#include <set>

using namespace distsi;

namespace {

struct SimData {
  std::vector<Dataset> nodes;
  Matrix X;
  Vector y;
};

SimData gaussian_nodes(int n0, int nk, int K, int p, CounterRng& rng,
                       double signal = 1.0) {
  const int n = n0 + K * nk;
  SimData s;
  s.X = Matrix(n, p);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < p; ++j) s.X(i, j) = rng.normal();
  Vector beta = Vector::Zero(p);
  beta(0) = signal;
  if (p > 2) beta(2) = -signal;
  s.y = Vector(n);
  for (int i = 0; i < n; ++i) s.y(i) = s.X.row(i).dot(beta) + rng.normal();
  s.nodes.resize(K + 1);
  s.nodes[0] = Dataset{s.X.topRows(n0), s.y.head(n0), 0};
  for (int k = 1; k <= K; ++k)
    s.nodes[k] = Dataset{s.X.middleRows(n0 + (k - 1) * nk, nk),
                         s.y.segment(n0 + (k - 1) * nk, nk), k};
  return s;
}

// The monolithic pipeline: identical math, no wire types anywhere.
InferenceReport inprocess_pipeline(const SimData& s, const FamilySpec& fam,
                                   const PenaltySpec& pen, double alpha) {
  const int K = static_cast<int>(s.nodes.size()) - 1;
  const int n = static_cast<int>(s.X.rows());
  std::vector<SelectionSummary> sels(K);
  std::vector<Vector> betas(K);
  for (int k = 0; k < K; ++k) {
    betas[k] = solve_weighted_lasso(s.nodes[k + 1], pen, fam, n);
    sels[k] = extract_selection(
        betas[k], lasso_gradient(s.nodes[k + 1], fam, n, betas[k]), pen);
  }
  std::set<int> u;
  for (auto& sel : sels) u.insert(sel.E.begin(), sel.E.end());
  IndexList E(u.begin(), u.end());

  std::vector<GlmFit> fits;
  std::vector<double> rho;
  for (int k = 0; k <= K; ++k) {
    Matrix Xe(s.nodes[k].n(), E.size());
    for (std::size_t j = 0; j < E.size(); ++j)
      Xe.col(j) = s.nodes[k].X.col(E[j]);
    fits.push_back(fit_glm(Xe, s.nodes[k].y, fam));
    rho.push_back(static_cast<double>(s.nodes[k].n()) / n);
  }
  auto [beta_E, I_EE_raw] = aggregate_mle(fits, rho);

  double scale = 1.0;
  if (fam.is_gaussian() && fam.dispersion_mode == DispersionMode::estimate) {
    Matrix Xe(n, E.size());
    for (std::size_t j = 0; j < E.size(); ++j) Xe.col(j) = s.X.col(E[j]);
    scale = (s.y - Xe * beta_E).squaredNorm() / (n - static_cast<int>(E.size()));
  }
  Matrix I_EE = I_EE_raw / scale;

  AssemblyInputs in;
  in.info = I_EE;
  in.support = E;
  in.E = E;
  in.rho = rho;
  for (int k = 0; k < K; ++k) {
    in.E_sets.push_back(sels[k].E);
    in.gammas.push_back(slice(sels[k].gamma, E) / scale);
    in.signs.push_back(sels[k].S);
  }
  MatrixBundle bundle = assemble_matrices(in);
  Vector W0(bundle.d_bar());
  int off = 0;
  const double sqrt_n = std::sqrt(static_cast<double>(n));
  for (int k = 0; k < K; ++k) {
    for (Eigen::Index i = 0; i < sels[k].B.size(); ++i)
      W0(off + i) = sqrt_n * sels[k].B(i);
    off += static_cast<int>(sels[k].B.size());
  }
  OptResult opt = solve_selection_opt(bundle, beta_E, n, W0);
  Vector mle = selective_mle(bundle, beta_E, opt, n, I_EE);
  Matrix fisher = selective_fisher(bundle, opt, I_EE);
  return infer(mle, fisher, E, n, alpha, Method::dist_si);
}

}  // namespace

TEST_CASE("aggregate_models union and grouped rules") {
  AggregationRule uni;
  CHECK(aggregate_models({{1, 2}, {2, 3}}, uni) == IndexList{1, 2, 3});
  CHECK(aggregate_models({{4, 0}}, uni) == IndexList{0, 4});
  CHECK_THROWS_AS(aggregate_models({{}, {}}, uni), EmptyModelError);

  AggregationRule grouped;
  grouped.kind = AggregationRule::Kind::grouped;
  grouped.seed = 99;
  for (int g = 0; g < 4; ++g) {
    IndexList grp;
    for (int i = 0; i < 5; ++i) grp.push_back(5 * g + i);
    grouped.groups.push_back(grp);
  }
  IndexList picked = aggregate_models({{0, 7}, {8, 19}}, grouped);
  CHECK(picked.size() == 3);  // groups 0, 1, 3 touched
  // one member per touched group
  std::set<int> gids;
  for (int j : picked) gids.insert(j / 5);
  CHECK(gids == std::set<int>{0, 1, 3});
  // deterministic across runs
  for (int trial = 0; trial < 3; ++trial)
    CHECK(aggregate_models({{0, 7}, {8, 19}}, grouped) == picked);
  // different seed may move the picks but stays a valid choice
  grouped.seed = 100;
  IndexList picked2 = aggregate_models({{0, 7}, {8, 19}}, grouped);
  std::set<int> gids2;
  for (int j : picked2) gids2.insert(j / 5);
  CHECK(gids2 == std::set<int>{0, 1, 3});
}

TEST_CASE("wire round trips are identity and encoding is canonical") {
  std::vector<WireMessage> msgs;
  msgs.push_back({1, MsgKind::SelectedSet, 3,
                  SelectedSetBody{{1, 5, 9}, Vector::LinSpaced(3, -1.0, 1.0)}});
  msgs.push_back({1, MsgKind::ModelBroadcast, -1,
                  ModelBroadcastBody{{1, 5}, {1, 5, 9}, true}});
  LocalSummaryBody ls;
  ls.beta_E = Vector::LinSpaced(2, 0.1, 0.9);
  ls.info = (Matrix(2, 2) << 2.0, 0.25, 0.25, 1.0).finished();
  ls.gamma = Vector::LinSpaced(2, -0.3, 0.3);
  ls.yty = 123.456789012345678;
  ls.n_k = 500;
  msgs.push_back({1, MsgKind::LocalSummary, 2, ls});
  msgs.push_back({1, MsgKind::MleBroadcast, -1,
                  MleBroadcastBody{Vector::LinSpaced(2, 0.4, -3.7)}});
  msgs.push_back({1, MsgKind::ResidualCompensation, 1,
                  ResidualCompensationBody{Vector::LinSpaced(3, 1e-17, 1e17)}});

  for (const auto& m : msgs) {
    std::string f1 = encode(m);
    WireMessage back = decode(f1);
    std::string f2 = encode(back);
    CHECK(f1 == f2);  // byte-identical re-encode
    CHECK(back.kind == m.kind);
    CHECK(back.node_id == m.node_id);
  }
  // exact double round trip
  WireMessage probe = decode(encode(msgs[4]));
  const auto& body = std::get<ResidualCompensationBody>(probe.body);
  const auto& orig = std::get<ResidualCompensationBody>(msgs[4].body);
  for (int i = 0; i < 3; ++i) CHECK(body.values(i) == orig.values(i));
}

TEST_CASE("malformed frames raise protocol errors without crashing") {
  std::string good = encode(
      {1, MsgKind::SelectedSet, 0, SelectedSetBody{{1}, Vector::Ones(1)}});
  CHECK_THROWS_AS(decode(good.substr(0, good.size() / 2)), ProtocolError);
  CHECK_THROWS_AS(decode(""), ProtocolError);
  std::string wrong_version = good;
  wrong_version[3] = '9';  // DSI9
  CHECK_THROWS_AS(decode(wrong_version), ProtocolError);
  CHECK_THROWS_AS(decode("XYZ1 SelectedSet 0 0\n\n"), ProtocolError);
  std::string padded = good + "extra";
  CHECK_THROWS_AS(decode(padded), ProtocolError);
}

TEST_CASE("protocol output matches the monolithic in-process pipeline") {
  CounterRng rng(51, 0, 0);
  SimData s = gaussian_nodes(80, 120, 2, 8, rng);
  FamilySpec fam = FamilySpec::gaussian(1.0, DispersionMode::estimate);
  PenaltySpec pen = PenaltySpec::uniform(8, 1.0);

  ProtocolOptions opts;
  ProtocolResult viaWire = run_protocol(s.nodes, fam, {pen}, opts);
  InferenceReport direct = inprocess_pipeline(s, fam, pen, opts.alpha);

  REQUIRE(viaWire.report.rows.size() == direct.rows.size());
  for (std::size_t j = 0; j < direct.rows.size(); ++j) {
    CHECK(viaWire.report.rows[j].coef == direct.rows[j].coef);
    CHECK(std::fabs(viaWire.report.rows[j].estimate - direct.rows[j].estimate) <
          1e-10);
    CHECK(std::fabs(viaWire.report.rows[j].stderr_ - direct.rows[j].stderr_) <
          1e-10);
    CHECK(std::fabs(viaWire.report.rows[j].pvalue - direct.rows[j].pvalue) <
          1e-10);
    CHECK(std::fabs(viaWire.report.rows[j].ci_lo - direct.rows[j].ci_lo) <
          1e-10);
  }
}

TEST_CASE("union rule runs two exchanges, grouped rule runs four") {
  CounterRng rng(52, 0, 0);
  SimData s = gaussian_nodes(60, 80, 1, 10, rng);
  FamilySpec fam = FamilySpec::gaussian(1.0, DispersionMode::estimate);
  PenaltySpec pen = PenaltySpec::uniform(10, 1.0);

  ProtocolOptions opts;
  ProtocolResult union_run = run_protocol(s.nodes, fam, {pen}, opts);
  CHECK(union_run.transcript.exchanges == 2);

  ProtocolOptions gopts;
  gopts.rule.kind = AggregationRule::Kind::grouped;
  gopts.rule.seed = 5;
  for (int g = 0; g < 5; ++g) {
    IndexList grp;
    for (int i = 0; i < 2; ++i) grp.push_back(2 * g + i);
    gopts.rule.groups.push_back(grp);
  }
  ProtocolResult grouped_run = run_protocol(s.nodes, fam, {pen}, gopts);
  CHECK(grouped_run.transcript.exchanges == 4);
  // the four-exchange transcript contains MLE and compensation frames
  int mle_frames = 0, comp_frames = 0;
  for (const auto& e : grouped_run.transcript.messages) {
    WireMessage m = decode(e.frame);
    if (m.kind == MsgKind::MleBroadcast) ++mle_frames;
    if (m.kind == MsgKind::ResidualCompensation) ++comp_frames;
  }
  CHECK(mle_frames == 1);
  CHECK(comp_frames == 1);
  // grouped reports are well formed
  for (const auto& r : grouped_run.report.rows) {
    CHECK(r.pvalue >= 0.0);
    CHECK(r.pvalue <= 1.0);
    CHECK(r.ci_lo < r.ci_hi);
  }
}

TEST_CASE("local summary payload size does not grow with p") {
  CounterRng rng(53, 0, 0);
  auto summary_bytes = [&](int p) {
    CounterRng local(53, p, 0);
    SimData s = gaussian_nodes(60, 90, 1, p, local, 2.0);
    FamilySpec fam = FamilySpec::gaussian(1.0, DispersionMode::estimate);
    // dominate all but the two real signals so d stays fixed at 2
    Vector g0 = lasso_gradient(s.nodes[1], fam, s.X.rows(), Vector::Zero(p));
    PenaltySpec pen;
    pen.lambda = Vector::Constant(p, 0.45 * g0.lpNorm<Eigen::Infinity>());
    ProtocolOptions opts;
    ProtocolResult run = run_protocol(s.nodes, fam, {pen}, opts);
    REQUIRE(run.E.size() == 2);
    std::size_t bytes = 0;
    for (const auto& e : run.transcript.messages)
      if (decode(e.frame).kind == MsgKind::LocalSummary)
        bytes = std::max(bytes, e.frame.size());
    return bytes;
  };
  std::size_t at_p20 = summary_bytes(20);
  std::size_t at_p40 = summary_bytes(40);
  // identical d: payloads agree up to digit-width jitter in the numbers
  double rel = std::fabs(static_cast<double>(at_p20) -
                         static_cast<double>(at_p40)) /
               static_cast<double>(at_p20);
  CHECK(rel < 0.05);
}

TEST_CASE("central machine never touches local rows outside local phases") {
  CounterRng rng(54, 0, 0);
  SimData s = gaussian_nodes(50, 70, 2, 6, rng);
  FamilySpec fam = FamilySpec::gaussian(1.0, DispersionMode::estimate);
  PenaltySpec pen = PenaltySpec::uniform(6, 0.8);
  ProtocolOptions opts;
  ProtocolResult run = run_protocol(s.nodes, fam, {pen}, opts);
  const std::set<std::string> local_phases = {"selection", "summarize",
                                              "compensate"};
  for (const auto& ev : run.transcript.data_access) {
    if (ev.node_id >= 1) CHECK(local_phases.count(ev.phase) == 1);
    else CHECK(local_phases.count(ev.phase) == 0);
  }
}

TEST_CASE("union-rule protocol result is invariant to node ordering") {
  CounterRng rng(55, 0, 0);
  SimData s = gaussian_nodes(60, 80, 2, 7, rng);
  FamilySpec fam = FamilySpec::gaussian(1.0, DispersionMode::estimate);
  PenaltySpec pen = PenaltySpec::uniform(7, 0.9);
  ProtocolOptions opts;
  ProtocolResult a = run_protocol(s.nodes, fam, {pen}, opts);
  std::vector<Dataset> swapped = {s.nodes[0], s.nodes[2], s.nodes[1]};
  ProtocolResult b = run_protocol(swapped, fam, {pen}, opts);
  REQUIRE(a.E == b.E);
  for (std::size_t j = 0; j < a.report.rows.size(); ++j) {
    CHECK(std::fabs(a.report.rows[j].estimate - b.report.rows[j].estimate) <
          1e-10);
    CHECK(std::fabs(a.report.rows[j].pvalue - b.report.rows[j].pvalue) < 1e-10);
  }
}

TEST_CASE("protocol errors carry node attribution") {
  // local machine 2 holds a rank-deficient design
  CounterRng rng(56, 0, 0);
  SimData s = gaussian_nodes(40, 50, 2, 4, rng);
  s.nodes[2].X.col(1) = 2.0 * s.nodes[2].X.col(0);
  FamilySpec fam = FamilySpec::gaussian(1.0, DispersionMode::estimate);
  PenaltySpec pen = PenaltySpec::uniform(4, 1e-4);  // select everything
  ProtocolOptions opts;
  try {
    run_protocol(s.nodes, fam, {pen}, opts);
    CHECK(false);
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("node 2") != std::string::npos);
  }
}

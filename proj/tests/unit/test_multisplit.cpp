#include "distsi/multisplit.hpp"
#include "distsi/rng.hpp"
#include "distsi/simulate.hpp"

#include <doctest.h>

#include <cmath>

using namespace distsi;

namespace {

Dataset planted_dataset(int n, int p, int s, double magnitude, CounterRng& rng) {
  Dataset d;
  d.X = gen_design(n, p, 0.0, rng);
  Vector beta = Vector::Zero(p);
  for (int j = 0; j < s; ++j) beta(j) = (j % 2 ? -1.0 : 1.0) * magnitude;
  d.y = Vector(n);
  for (int i = 0; i < n; ++i) d.y(i) = d.X.row(i).dot(beta) + rng.normal();
  d.node_id = 0;
  return d;
}

}  // namespace

TEST_CASE("aggregate_pvalues hand examples") {
  // five identical replicates at 0.01, gamma_min = 0.05:
  // P = (1 - log 0.05) * 0.01
  PvalueMatrix P;
  P.p = Matrix::Constant(5, 1, 0.01);
  Vector out = aggregate_pvalues(P, 0.05);
  double expect = (1.0 - std::log(0.05)) * 0.01;
  CHECK(std::fabs(out(0) - expect) < 1e-6);
  CHECK(out(0) == doctest::Approx(0.039957).epsilon(1e-3));

  // all ones stay at one
  P.p = Matrix::Ones(5, 3);
  out = aggregate_pvalues(P, 0.05);
  for (int j = 0; j < 3; ++j) CHECK(out(j) == 1.0);

  // explicit quantile convention: values (0.01, 1, 1, 1, 1) at gamma = 0.5
  // have ceil(0.5*5) = 3rd order statistic 1, so Q(0.5) = 1.
  Matrix column(5, 1);
  column << 0.01, 1.0, 1.0, 1.0, 1.0;
  // reproduce Q_j(gamma) directly from its definition
  auto Q = [&](double gamma) {
    std::vector<double> v = {0.01, 1.0, 1.0, 1.0, 1.0};
    std::sort(v.begin(), v.end());
    int m = static_cast<int>(std::ceil(gamma * 5));
    return std::min(1.0, v[m - 1] / gamma);
  };
  CHECK(Q(0.5) == 1.0);
  // and the aggregator's infimum is attained at the first breakpoint 1/5
  P.p = column;
  out = aggregate_pvalues(P, 0.05);
  CHECK(out(0) == doctest::Approx(std::min(1.0, (1.0 - std::log(0.05)) *
                                                    (0.01 / 0.2))));
}

TEST_CASE("aggregate_pvalues is monotone and bounded") {
  CounterRng rng(61, 0, 0);
  for (int trial = 0; trial < 50; ++trial) {
    int B = 1 + rng.uniform_int(8);
    PvalueMatrix P;
    P.p = Matrix(B, 1);
    for (int b = 0; b < B; ++b) P.p(b, 0) = rng.uniform();
    double gmin = 0.02 + 0.9 * rng.uniform() * 0.9;
    Vector base = aggregate_pvalues(P, gmin);
    // bounds: min_b p_b <= P <= 1
    CHECK(base(0) <= 1.0 + 1e-15);
    CHECK(base(0) >= P.p.col(0).minCoeff() - 1e-15);
    // raising one replicate value never lowers the aggregate
    PvalueMatrix Q = P;
    int b = rng.uniform_int(B);
    Q.p(b, 0) = std::min(1.0, Q.p(b, 0) + rng.uniform() * (1.0 - Q.p(b, 0)));
    Vector raised = aggregate_pvalues(Q, gmin);
    CHECK(raised(0) >= base(0) - 1e-12);
  }
  PvalueMatrix bad;
  bad.p = Matrix::Constant(2, 2, 1.5);
  CHECK_THROWS_AS(aggregate_pvalues(bad, 0.05), InvalidInputError);
}

TEST_CASE("diagnostic odds ratio with Haldane correction") {
  // TP=10, TN=180, FP=5, FN=5 -> 72
  std::vector<bool> truth, pred;
  auto push = [&](int count, bool t, bool p) {
    for (int i = 0; i < count; ++i) {
      truth.push_back(t);
      pred.push_back(p);
    }
  };
  push(10, true, true);
  push(180, false, false);
  push(5, false, true);
  push(5, true, false);
  CHECK(dor(pred, truth) == doctest::Approx(72.0));

  // zero cells get +0.5 everywhere: (10.5*190.5)/(0.5*0.5) = 8001
  truth.clear();
  pred.clear();
  push(10, true, true);
  push(190, false, false);
  CHECK(dor(pred, truth) == doctest::Approx(8001.0));

  // truth-independent predictions give DOR near 1 on average
  CounterRng rng(62, 0, 0);
  double log_sum = 0.0;
  const int draws = 300;
  for (int t = 0; t < draws; ++t) {
    truth.clear();
    pred.clear();
    for (int i = 0; i < 400; ++i) {
      truth.push_back(rng.uniform() < 0.3);
      pred.push_back(rng.uniform() < 0.3);
    }
    log_sum += std::log(dor(pred, truth));
  }
  CHECK(std::fabs(log_sum / draws) < 0.1);
}

TEST_CASE("run_replicate: dominating penalty yields all ones, seeds reproduce") {
  CounterRng rng(63, 0, 0);
  Dataset data = planted_dataset(120, 12, 2, 1.5, rng);
  FamilySpec fam = FamilySpec::gaussian(1.0, DispersionMode::estimate);
  MultisplitConfig cfg;
  cfg.B = 3;
  cfg.K = 2;
  cfg.n1 = 60;
  cfg.seed = 17;

  Vector ones = run_replicate(data, cfg, fam, PenaltySpec::uniform(12, 1e6), 0);
  CHECK(ones.minCoeff() == 1.0);

  PenaltySpec pen = PenaltySpec::uniform(12, 0.6);
  Vector a = run_replicate(data, cfg, fam, pen, 1);
  Vector b = run_replicate(data, cfg, fam, pen, 1);
  CHECK((a - b).lpNorm<Eigen::Infinity>() == 0.0);
  Vector c = run_replicate(data, cfg, fam, pen, 2);
  CHECK((a - c).lpNorm<Eigen::Infinity>() > 0.0);  // distinct subsets

  for (Eigen::Index j = 0; j < a.size(); ++j) {
    CHECK(a(j) >= 0.0);
    CHECK(a(j) <= 1.0);
  }

  MultisplitConfig badcfg = cfg;
  badcfg.n1 = 0;
  CHECK_THROWS_AS(run_replicate(data, badcfg, fam, pen, 0), ConfigError);
}

TEST_CASE("multisplit driver aggregates across replicates") {
  CounterRng rng(64, 0, 0);
  Dataset data = planted_dataset(100, 10, 2, 2.0, rng);
  FamilySpec fam = FamilySpec::gaussian(1.0, DispersionMode::estimate);
  MultisplitConfig cfg;
  cfg.B = 5;
  cfg.K = 1;
  cfg.n1 = 50;
  cfg.seed = 3;
  cfg.gamma_min = 0.05;
  PenaltySpec pen = PenaltySpec::uniform(10, 0.5);

  MultisplitResult res = run_multisplit(data, cfg, fam, pen);
  CHECK(res.P.size() == 10);
  CHECK(res.replicates.p.rows() == 5);
  for (int j = 0; j < 10; ++j) {
    CHECK(res.P(j) >= 0.0);
    CHECK(res.P(j) <= 1.0);
    CHECK(res.reject[j] == (res.P(j) < cfg.alpha));
  }
  // strong planted signals on coordinates 0 and 1 should be found
  CHECK(res.P(0) < 0.1);
  CHECK(res.P(1) < 0.1);

  MultisplitResult base = run_multisplit_baseline(data, cfg, fam, pen);
  CHECK(base.P.size() == 10);
  for (int j = 0; j < 10; ++j) {
    CHECK(base.P(j) >= 0.0);
    CHECK(base.P(j) <= 1.0);
  }
}

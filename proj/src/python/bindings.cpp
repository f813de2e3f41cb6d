#include "distsi/lasso.hpp"
#include "distsi/multisplit.hpp"
#include "distsi/protocol.hpp"
#include "distsi/simulate.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using namespace distsi;

namespace {

FamilySpec family_from_name(const std::string& name, bool estimate_dispersion) {
  if (name == "gaussian")
    return FamilySpec::gaussian(1.0, estimate_dispersion
                                         ? DispersionMode::estimate
                                         : DispersionMode::known);
  if (name == "logistic") return FamilySpec::logistic();
  throw InvalidInputError("family must be 'gaussian' or 'logistic'");
}

py::list report_to_list(const InferenceReport& report) {
  py::list rows;
  for (const auto& r : report.rows) {
    py::dict row;
    row["coef"] = r.coef;
    row["estimate"] = r.estimate;
    row["stderr"] = r.stderr_;
    row["pvalue"] = r.pvalue;
    row["ci_lo"] = r.ci_lo;
    row["ci_hi"] = r.ci_hi;
    row["method"] = method_name(r.method);
    rows.append(row);
  }
  return rows;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "distributed selective inference core";

  py::register_exception<Error>(m, "DistsiError");

  m.def(
      "family_eval",
      [](const std::string& family, double eta) {
        FamilyEval ev = family_eval(family_from_name(family, false), eta);
        return py::make_tuple(ev.A, ev.A1, ev.A2);
      },
      py::arg("family"), py::arg("eta"),
      "Cumulant A(eta) and its first two derivatives.");

  m.def(
      "fit_glm",
      [](const Matrix& X, const Vector& y, const std::string& family) {
        GlmFit fit = fit_glm(X, y, family_from_name(family, false));
        py::dict out;
        out["beta"] = fit.beta;
        out["obs_fi"] = fit.obs_fi;
        out["iterations"] = fit.iterations;
        return out;
      },
      py::arg("X"), py::arg("y"), py::arg("family") = "gaussian",
      "Selected-model MLE and observed Fisher information.");

  m.def(
      "solve_weighted_lasso",
      [](const Matrix& X, const Vector& y, const Vector& lambda,
         const std::string& family, int n_total) {
        Dataset d{X, y, 1};
        PenaltySpec pen{lambda};
        FamilySpec fam = family_from_name(family, false);
        if (n_total <= 0) n_total = d.n();
        return solve_weighted_lasso(d, pen, fam, n_total);
      },
      py::arg("X"), py::arg("y"), py::arg("lambda_"),
      py::arg("family") = "gaussian", py::arg("n_total") = 0,
      "Weighted-lasso solution at the node loss scaling.");

  m.def(
      "check_kkt",
      [](const Matrix& X, const Vector& y, const Vector& lambda,
         const std::string& family, int n_total, const Vector& beta) {
        Dataset d{X, y, 1};
        if (n_total <= 0) n_total = d.n();
        return check_kkt(d, PenaltySpec{lambda}, family_from_name(family, false),
                         n_total, beta);
      },
      py::arg("X"), py::arg("y"), py::arg("lambda_"), py::arg("family"),
      py::arg("n_total"), py::arg("beta"));

  m.def(
      "run_protocol",
      [](const std::vector<Matrix>& Xs, const std::vector<Vector>& ys,
         const std::string& family, const Vector& lambda, double alpha,
         const std::string& rule, std::uint64_t rule_seed, int group_size) {
        if (Xs.size() != ys.size() || Xs.size() < 2)
          throw InvalidInputError(
              "need aligned X/y lists: holdout first, then local nodes");
        std::vector<Dataset> nodes(Xs.size());
        for (std::size_t k = 0; k < Xs.size(); ++k)
          nodes[k] = Dataset{Xs[k], ys[k], static_cast<int>(k)};
        FamilySpec fam = family_from_name(family, true);
        ProtocolOptions opts;
        opts.alpha = alpha;
        if (rule == "grouped") {
          opts.rule.kind = AggregationRule::Kind::grouped;
          opts.rule.seed = rule_seed;
          int p = nodes[0].p();
          if (group_size < 1 || p % group_size != 0)
            throw InvalidInputError("group_size must divide p");
          for (int g = 0; g < p / group_size; ++g) {
            IndexList grp(group_size);
            for (int i = 0; i < group_size; ++i) grp[i] = g * group_size + i;
            opts.rule.groups.push_back(grp);
          }
        } else if (rule != "union") {
          throw InvalidInputError("rule must be 'union' or 'grouped'");
        }
        ProtocolResult res =
            run_protocol(nodes, fam, {PenaltySpec{lambda}}, opts);
        py::dict out;
        out["E"] = res.E;
        out["beta_E"] = res.beta_E;
        out["sigma2_hat"] = res.sigma2_hat;
        out["rows"] = report_to_list(res.report);
        out["exchanges"] = res.transcript.exchanges;
        return out;
      },
      py::arg("Xs"), py::arg("ys"), py::arg("family"), py::arg("lambda_"),
      py::arg("alpha") = 0.1, py::arg("rule") = "union",
      py::arg("rule_seed") = 0, py::arg("group_size") = 5,
      "Full exchange protocol: selection, aggregation, selective inference.");

  m.def(
      "baseline_infer",
      [](const Matrix& X, const Vector& y, const IndexList& E,
         const std::string& family, double alpha, const std::string& kind) {
        Method m_kind;
        if (kind == "splitting") m_kind = Method::splitting;
        else if (kind == "naive") m_kind = Method::naive;
        else throw InvalidInputError("kind must be 'splitting' or 'naive'");
        return report_to_list(
            baseline_infer(m_kind, X, y, E, family_from_name(family, true),
                           alpha));
      },
      py::arg("X"), py::arg("y"), py::arg("E"), py::arg("family"),
      py::arg("alpha") = 0.1, py::arg("kind") = "splitting");

  m.def(
      "multisplit_pvalues",
      [](const Matrix& X, const Vector& y, const std::string& family, int B,
         int K, int n1, double gamma_min, double alpha, std::uint64_t seed,
         const Vector& lambda) {
        Dataset d{X, y, 0};
        MultisplitConfig cfg;
        cfg.B = B;
        cfg.K = K;
        cfg.n1 = n1 > 0 ? n1 : d.n() / 2;
        cfg.gamma_min = gamma_min;
        cfg.alpha = alpha;
        cfg.seed = seed;
        MultisplitResult res = run_multisplit(d, cfg, family_from_name(family, true),
                                              PenaltySpec{lambda});
        py::dict out;
        out["P"] = res.P;
        out["replicates"] = res.replicates.p;
        std::vector<int> reject(res.reject.begin(), res.reject.end());
        out["reject"] = reject;
        return out;
      },
      py::arg("X"), py::arg("y"), py::arg("family"), py::arg("B") = 5,
      py::arg("K") = 1, py::arg("n1") = 0, py::arg("gamma_min") = 0.05,
      py::arg("alpha") = 0.1, py::arg("seed") = 0, py::arg("lambda_"),
      "Quantile-aggregated selective p-values over repeated subsets.");

  m.def(
      "aggregate_pvalues",
      [](const Matrix& P, double gamma_min) {
        return aggregate_pvalues(PvalueMatrix{P}, gamma_min);
      },
      py::arg("P"), py::arg("gamma_min") = 0.05);

  m.def(
      "dor",
      [](const std::vector<bool>& predicted, const std::vector<bool>& truth) {
        return dor(predicted, truth);
      },
      py::arg("predicted"), py::arg("truth"),
      "Diagnostic odds ratio with the +0.5 zero-cell correction.");
}

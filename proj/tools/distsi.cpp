#include "distsi/config.hpp"
#include "distsi/csv.hpp"
#include "distsi/lasso.hpp"
#include "distsi/multisplit.hpp"
#include "distsi/protocol.hpp"
#include "distsi/simulate.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>

namespace {

using namespace distsi;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

int exit_code_for(const Error& e) {
  switch (e.category()) {
    case ErrorCategory::config: return kExitConfig;
    case ErrorCategory::data: return kExitData;
    case ErrorCategory::numeric: return kExitNumeric;
  }
  return kExitNumeric;
}

int threads_from_env() {
  const char* env = std::getenv("DISTSI_THREADS");
  if (!env) return 0;
  int v = std::atoi(env);
  return v > 0 ? v : 0;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open output file '" + path + "'");
  return out;
}

FamilySpec family_from_flag(const std::string& name) {
  if (name == "gaussian")
    return FamilySpec::gaussian(1.0, DispersionMode::estimate);
  if (name == "logistic") return FamilySpec::logistic();
  throw ConfigError("--family must be gaussian or logistic");
}

Dataset dataset_from_csv(const std::string& path, int node_id,
                         const std::vector<std::string>* expect_header) {
  CsvTable table = read_csv(path);
  if (expect_header && table.header != *expect_header)
    throw DataError("CSV '" + path + "' does not match the column schema of "
                    "the first file");
  const int p = static_cast<int>(table.header.size()) - 1;
  if (p < 1) throw DataError("CSV '" + path + "' needs predictors plus a "
                             "response column");
  Dataset d;
  d.X = table.values.leftCols(p);
  d.y = table.values.col(p);
  d.node_id = node_id;
  return d;
}

void write_report_rows(std::ostream& out, const InferenceReport& report) {
  for (const auto& r : report.rows)
    out << r.coef << ',' << format_double(r.estimate) << ','
        << format_double(r.stderr_) << ',' << format_double(r.pvalue) << ','
        << format_double(r.ci_lo) << ',' << format_double(r.ci_hi) << ','
        << method_name(r.method) << '\n';
}

int cmd_simulate(const std::string& config_path, const std::string& out_dir,
                 long seed_override, int threads_override) {
  ConfigFile file = ConfigFile::parse_file(config_path);
  ScenarioConfig cfg = scenario_from_config(file);
  if (seed_override >= 0) cfg.seed = static_cast<std::uint64_t>(seed_override);
  if (threads_override > 0) cfg.threads = threads_override;
  else if (int env = threads_from_env(); env > 0 && cfg.threads == 1)
    cfg.threads = env;

  ScenarioResult result = run_scenario(cfg);

  auto metrics = open_out(out_dir + "/metrics.csv");
  metrics << "rep,method,coef,covered,length,detected,model_size\n";
  for (const auto& row : result.rows)
    metrics << row.rep << ',' << method_name(row.method) << ',' << row.coef
            << ',' << row.covered << ',' << format_double(row.length) << ','
            << row.detected << ',' << row.model_size << '\n';

  auto summary = open_out(out_dir + "/summary.csv");
  summary << "method,coverage,coverage_se,mean_length,power\n";
  for (const auto& s : result.summary)
    summary << method_name(s.method) << ',' << format_double(s.coverage) << ','
            << format_double(s.coverage_se) << ','
            << format_double(s.mean_length) << ',' << format_double(s.power)
            << '\n';
  if (result.failures > 0)
    std::cerr << "excluded " << result.failures
              << " failed replicate(s); see metrics for the rest\n";
  return kExitOk;
}

int cmd_analyze(const std::string& central_csv,
                const std::vector<std::string>& local_csvs,
                const std::string& family_name, double alpha,
                const std::string& out_path, double lambda_value,
                double lambda_scale, const std::string& tuning_csv) {
  if (local_csvs.empty())
    throw ConfigError("analyze needs at least one --local file");
  FamilySpec family = family_from_flag(family_name);

  CsvTable head = read_csv(central_csv);
  std::vector<std::string> schema = head.header;
  std::vector<Dataset> nodes;
  nodes.push_back(dataset_from_csv(central_csv, 0, nullptr));
  for (std::size_t k = 0; k < local_csvs.size(); ++k)
    nodes.push_back(dataset_from_csv(local_csvs[k], static_cast<int>(k) + 1,
                                     &schema));
  for (auto& d : nodes) d.validate(family);
  const int p = nodes[0].p();

  PenaltySpec penalty;
  if (lambda_value > 0.0) {
    penalty = PenaltySpec::uniform(p, lambda_value);
  } else if (!tuning_csv.empty()) {
    Dataset tune = dataset_from_csv(tuning_csv, 0, &schema);
    int half = tune.n() / 2;
    if (half < 1 || tune.n() - half < 1)
      throw DataError("tuning CSV needs at least two rows");
    Dataset train{tune.X.topRows(half), tune.y.head(half), 0};
    Dataset val{tune.X.bottomRows(tune.n() - half), tune.y.tail(tune.n() - half),
                0};
    penalty = tune_lambda(train, val, family,
                          {0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0, 4.5, 5.0});
  } else {
    // lambda = t * sqrt(2 log p) * sd(y) over the pooled selection nodes
    double n_tot = 0.0, mean = 0.0;
    for (std::size_t k = 1; k < nodes.size(); ++k) {
      mean += nodes[k].y.sum();
      n_tot += nodes[k].n();
    }
    mean /= n_tot;
    double ss = 0.0;
    for (std::size_t k = 1; k < nodes.size(); ++k)
      ss += (nodes[k].y.array() - mean).square().sum();
    double sd = std::sqrt(ss / (n_tot - 1.0));
    if (!(sd > 0.0)) sd = 1.0;
    penalty = PenaltySpec::uniform(
        p, lambda_scale * std::sqrt(2.0 * std::log(p)) * sd);
  }

  ProtocolOptions opts;
  opts.alpha = alpha;
  ProtocolResult res = run_protocol(nodes, family, {penalty}, opts);
  InferenceReport split = baseline_infer(Method::splitting, nodes[0].X,
                                         nodes[0].y, res.E, family, alpha);

  auto out = open_out(out_path);
  out << "coef,estimate,stderr,pvalue,ci_lo,ci_hi,method\n";
  write_report_rows(out, res.report);
  write_report_rows(out, split);
  return kExitOk;
}

int cmd_multisplit(const std::string& data_csv, const std::string& config_path,
                   const std::string& out_path, long seed_override) {
  ConfigFile file = ConfigFile::parse_file(config_path);
  MultisplitRunConfig cfg = multisplit_from_config(file);
  if (seed_override >= 0) cfg.ms.seed = static_cast<std::uint64_t>(seed_override);
  Dataset data = dataset_from_csv(data_csv, 0, nullptr);
  data.validate(cfg.family);
  if (cfg.ms.n1 == 0) cfg.ms.n1 = data.n() / 2;

  double mean = data.y.mean();
  double sd = data.n() > 1 ? std::sqrt((data.y.array() - mean).square().sum() /
                                       (data.n() - 1))
                           : 1.0;
  if (!(sd > 0.0)) sd = 1.0;
  PenaltySpec penalty = PenaltySpec::uniform(
      data.p(), cfg.lambda_scale * std::sqrt(2.0 * std::log(data.p())) * sd);

  MultisplitResult res = run_multisplit(data, cfg.ms, cfg.family, penalty);
  auto out = open_out(out_path);
  out << "coef,pvalue,reject\n";
  for (int j = 0; j < data.p(); ++j)
    out << j << ',' << format_double(res.P(j)) << ','
        << (res.reject[j] ? 1 : 0) << '\n';
  return kExitOk;
}

int cmd_validate(const std::string& config_path) {
  ConfigFile file = ConfigFile::parse_file(config_path);
  if (file.sections.count("scenario")) {
    scenario_from_config(file);
    std::cout << "scenario config ok\n";
  } else if (file.sections.count("multisplit")) {
    multisplit_from_config(file);
    std::cout << "multisplit config ok\n";
  } else {
    throw ConfigError("config needs a [scenario] or [multisplit] section");
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"distributed selective inference for sparse GLMs"};
  app.require_subcommand(1);

  std::string config_path, out_path = ".", data_csv, central_csv, tuning_csv;
  std::vector<std::string> local_csvs;
  std::string family_name = "gaussian";
  double alpha = 0.1;
  double lambda_value = 0.0;
  double lambda_scale = 1.0;
  long seed = -1;
  int threads = 0;

  auto* sim = app.add_subcommand("simulate", "run a Monte Carlo scenario");
  sim->add_option("--config", config_path, "scenario config file")->required();
  sim->add_option("--out", out_path, "output directory for the CSV files");
  sim->add_option("--seed", seed, "override the config seed");
  sim->add_option("--threads", threads, "worker threads");

  auto* ana = app.add_subcommand("analyze", "distributed analysis of CSV data");
  ana->add_option("--central", central_csv, "holdout node CSV")->required();
  ana->add_option("--local", local_csvs, "local node CSV (repeatable)")
      ->required();
  ana->add_option("--family", family_name, "gaussian or logistic");
  ana->add_option("--alpha", alpha, "significance level");
  ana->add_option("--out", out_path, "output CSV path")->required();
  ana->add_option("--lambda", lambda_value, "explicit penalty level");
  ana->add_option("--lambda-scale", lambda_scale,
                  "t in lambda = t sqrt(2 log p) sd(y)");
  ana->add_option("--tuning", tuning_csv, "CSV used only to tune lambda");

  auto* ms = app.add_subcommand("multisplit", "p-value-lottery analysis");
  ms->add_option("--data", data_csv, "dataset CSV")->required();
  ms->add_option("--config", config_path, "multisplit config file")->required();
  ms->add_option("--out", out_path, "output CSV path")->required();
  ms->add_option("--seed", seed, "override the config seed");

  auto* val = app.add_subcommand("validate", "check a config file");
  val->add_option("--config", config_path, "config file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  try {
    if (sim->parsed()) return cmd_simulate(config_path, out_path, seed, threads);
    if (ana->parsed())
      return cmd_analyze(central_csv, local_csvs, family_name, alpha, out_path,
                         lambda_value, lambda_scale, tuning_csv);
    if (ms->parsed()) return cmd_multisplit(data_csv, config_path, out_path, seed);
    if (val->parsed()) return cmd_validate(config_path);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return kExitNumeric;
  }
  return kExitConfig;
}

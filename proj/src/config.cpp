#include "distsi/config.hpp"

#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

namespace distsi {

namespace {

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r");
  auto e = s.find_last_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, e - b + 1);
}

[[noreturn]] void fail(const std::string& name, int line, const std::string& msg) {
  throw ConfigError(name + ":" + std::to_string(line) + ": " + msg);
}

bool parse_number(const std::string& tok, double& out) {
  auto res = std::from_chars(tok.data(), tok.data() + tok.size(), out);
  return res.ec == std::errc() && res.ptr == tok.data() + tok.size();
}

ConfigValue parse_value(const std::string& name, int line, std::string raw) {
  raw = trim(raw);
  ConfigValue v;
  v.line = line;
  if (raw.empty()) fail(name, line, "missing value");
  if (raw.front() == '"') {
    if (raw.size() < 2 || raw.back() != '"')
      fail(name, line, "unterminated string");
    v.type = ConfigValue::Type::string;
    v.str = raw.substr(1, raw.size() - 2);
    return v;
  }
  if (raw.front() == '[') {
    if (raw.back() != ']') fail(name, line, "unterminated array");
    v.type = ConfigValue::Type::array;
    std::string inner = raw.substr(1, raw.size() - 2);
    std::stringstream ss(inner);
    std::string item;
    while (std::getline(ss, item, ',')) {
      item = trim(item);
      if (item.empty()) continue;
      if (item.front() == '"') {
        if (item.size() < 2 || item.back() != '"')
          fail(name, line, "unterminated string in array");
        v.str_arr.push_back(item.substr(1, item.size() - 2));
      } else {
        double x;
        if (!parse_number(item, x))
          fail(name, line, "bad array element '" + item + "'");
        v.arr.push_back(x);
      }
    }
    return v;
  }
  if (raw == "true" || raw == "false") {
    v.type = ConfigValue::Type::boolean;
    v.flag = raw == "true";
    return v;
  }
  double x;
  if (!parse_number(raw, x)) fail(name, line, "bad value '" + raw + "'");
  v.type = ConfigValue::Type::number;
  v.num = x;
  return v;
}

}  // namespace

ConfigFile ConfigFile::parse_text(const std::string& text,
                                  const std::string& name) {
  ConfigFile out;
  std::istringstream in(text);
  std::string line;
  std::string section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') fail(name, lineno, "unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty()) fail(name, lineno, "empty section name");
      out.sections[section];
      continue;
    }
    auto eq = line.find('=');
    if (eq == std::string::npos) fail(name, lineno, "expected key = value");
    std::string key = trim(line.substr(0, eq));
    if (key.empty()) fail(name, lineno, "empty key");
    if (section.empty()) fail(name, lineno, "key outside any section");
    if (out.sections[section].count(key))
      fail(name, lineno, "duplicate key '" + key + "'");
    out.sections[section][key] = parse_value(name, lineno, line.substr(eq + 1));
  }
  return out;
}

ConfigFile ConfigFile::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_text(ss.str(), path);
}

namespace {

class SectionReader {
 public:
  SectionReader(const ConfigFile& file, const std::string& section)
      : section_(section) {
    auto it = file.sections.find(section);
    if (it == file.sections.end())
      throw ConfigError("missing [" + section + "] section");
    values_ = &it->second;
  }

  bool has(const std::string& key) const { return values_->count(key) > 0; }

  double number(const std::string& key, double fallback) {
    if (!has(key)) return fallback;
    const ConfigValue& v = fetch(key);
    if (v.type != ConfigValue::Type::number)
      bad(key, v.line, "expected a number");
    return v.num;
  }

  long integer(const std::string& key, long fallback) {
    double x = number(key, static_cast<double>(fallback));
    long r = static_cast<long>(x);
    if (static_cast<double>(r) != x) {
      auto it = values_->find(key);
      bad(key, it == values_->end() ? 0 : it->second.line, "expected an integer");
    }
    return r;
  }

  std::string str(const std::string& key, const std::string& fallback) {
    if (!has(key)) return fallback;
    const ConfigValue& v = fetch(key);
    if (v.type != ConfigValue::Type::string) bad(key, v.line, "expected a string");
    return v.str;
  }

  std::vector<double> numbers(const std::string& key,
                              std::vector<double> fallback) {
    if (!has(key)) return fallback;
    const ConfigValue& v = fetch(key);
    if (v.type != ConfigValue::Type::array || !v.str_arr.empty())
      bad(key, v.line, "expected a numeric array");
    return v.arr;
  }

  std::vector<std::string> strings(const std::string& key,
                                   std::vector<std::string> fallback) {
    if (!has(key)) return fallback;
    const ConfigValue& v = fetch(key);
    if (v.type != ConfigValue::Type::array || !v.arr.empty())
      bad(key, v.line, "expected a string array");
    return v.str_arr;
  }

  void finish() const {
    for (const auto& [key, value] : *values_)
      if (!seen_.count(key))
        throw ConfigError("line " + std::to_string(value.line) +
                          ": unknown key '" + key + "' in [" + section_ + "]");
  }

 private:
  const ConfigValue& fetch(const std::string& key) {
    seen_.insert(key);
    return values_->at(key);
  }
  [[noreturn]] void bad(const std::string& key, int line,
                        const std::string& what) {
    throw ConfigError("line " + std::to_string(line) + ": field '" + key +
                      "': " + what);
  }

  std::string section_;
  const std::map<std::string, ConfigValue>* values_;
  std::set<std::string> seen_;
};

FamilySpec family_from_strings(const std::string& family,
                               const std::string& dispersion_mode,
                               double sigma2) {
  if (family == "logistic" || family == "logit" || family == "bernoulli-logit")
    return FamilySpec::logistic();
  if (family != "gaussian")
    throw ConfigError("field 'family': expected gaussian or logistic, got '" +
                      family + "'");
  if (dispersion_mode == "estimate")
    return FamilySpec::gaussian(1.0, DispersionMode::estimate);
  if (dispersion_mode != "known")
    throw ConfigError("field 'dispersion': expected known or estimate");
  return FamilySpec::gaussian(sigma2, DispersionMode::known);
}

}  // namespace

ScenarioConfig scenario_from_config(const ConfigFile& config) {
  SectionReader s(config, "scenario");
  ScenarioConfig out;
  std::string family = s.str("family", "gaussian");
  std::string dispersion = s.str("dispersion", "estimate");
  double sigma2 = s.number("sigma2", 1.0);
  out.family = family_from_strings(family, dispersion, sigma2);
  if (!out.family.is_gaussian()) {
    // logistic ignores dispersion settings; reject contradictions
    if (dispersion == "known" && sigma2 != 1.0)
      throw ConfigError("field 'sigma2': logistic family has dispersion 1");
  }
  out.K = static_cast<int>(s.integer("k", out.K));
  out.n_k = static_cast<int>(s.integer("n_k", out.n_k));
  out.n0 = static_cast<int>(s.integer("n0", out.n0));
  out.p = static_cast<int>(s.integer("p", out.p));
  out.ar_rho = s.number("ar_rho", out.ar_rho);
  out.sparsity = static_cast<int>(s.integer("sparsity", out.sparsity));
  out.signal = s.number("signal", out.signal);
  out.reps = static_cast<int>(s.integer("reps", out.reps));
  out.seed = static_cast<std::uint64_t>(s.integer("seed", 0));
  out.alpha = s.number("alpha", out.alpha);
  out.lambda_grid = s.numbers("lambda_grid", out.lambda_grid);
  out.target_oracle_n =
      static_cast<int>(s.integer("target_oracle_n", out.target_oracle_n));
  out.threads = static_cast<int>(s.integer("threads", out.threads));

  std::vector<std::string> methods =
      s.strings("methods", {"dist-si", "splitting", "naive"});
  out.methods.clear();
  for (const auto& m : methods) {
    if (m == "dist-si") out.methods.push_back(Method::dist_si);
    else if (m == "splitting") out.methods.push_back(Method::splitting);
    else if (m == "naive") out.methods.push_back(Method::naive);
    else throw ConfigError("field 'methods': unknown method '" + m + "'");
  }

  std::string rule = s.str("aggregation", "union");
  if (rule == "union") {
    out.rule.kind = AggregationRule::Kind::union_rule;
  } else if (rule == "grouped") {
    out.rule.kind = AggregationRule::Kind::grouped;
    int gsize = static_cast<int>(s.integer("group_size", 5));
    if (gsize < 1 || out.p % gsize != 0)
      throw ConfigError("field 'group_size': must divide p");
    for (int g = 0; g < out.p / gsize; ++g) {
      IndexList grp(gsize);
      for (int i = 0; i < gsize; ++i) grp[i] = g * gsize + i;
      out.rule.groups.push_back(std::move(grp));
    }
    out.rule.seed = out.seed;
  } else {
    throw ConfigError("field 'aggregation': expected union or grouped");
  }
  if (rule != "grouped" && s.has("group_size"))
    throw ConfigError("field 'group_size': only valid with grouped aggregation");
  s.finish();
  out.validate();
  return out;
}

MultisplitRunConfig multisplit_from_config(const ConfigFile& config) {
  SectionReader s(config, "multisplit");
  MultisplitRunConfig out;
  out.ms.B = static_cast<int>(s.integer("b", out.ms.B));
  out.ms.K = static_cast<int>(s.integer("k", out.ms.K));
  out.ms.n1 = static_cast<int>(s.integer("n1", out.ms.n1));
  out.ms.gamma_min = s.number("gamma_min", out.ms.gamma_min);
  out.ms.alpha = s.number("alpha", out.ms.alpha);
  out.ms.seed = static_cast<std::uint64_t>(s.integer("seed", 0));
  std::string family = s.str("family", "gaussian");
  std::string dispersion = s.str("dispersion", "estimate");
  double sigma2 = s.number("sigma2", 1.0);
  out.family = family_from_strings(family, dispersion, sigma2);
  out.lambda_scale = s.number("lambda_scale", out.lambda_scale);
  if (!(out.lambda_scale > 0.0))
    throw ConfigError("field 'lambda_scale': must be positive");
  s.finish();
  return out;
}

}  // namespace distsi

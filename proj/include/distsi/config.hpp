#pragma once

#include "distsi/multisplit.hpp"
#include "distsi/simulate.hpp"

#include <map>
#include <string>

namespace distsi {

/// Minimal declarative config format: `[section]` headers, `key = value`
/// lines, `#` comments. Values are numbers, booleans, quoted strings, or
/// flat arrays like [0.5, 1.0]. Unknown keys are rejected with the line
/// number and field name.
struct ConfigValue {
  enum class Type { number, boolean, string, array } type = Type::number;
  double num = 0.0;
  bool flag = false;
  std::string str;
  std::vector<double> arr;
  std::vector<std::string> str_arr;
  int line = 0;
};

struct ConfigFile {
  // section -> key -> value
  std::map<std::string, std::map<std::string, ConfigValue>> sections;

  static ConfigFile parse_file(const std::string& path);
  static ConfigFile parse_text(const std::string& text, const std::string& name);
};

/// Maps [scenario] (plus optional [grouped]) onto a ScenarioConfig,
/// rejecting unknown keys.
ScenarioConfig scenario_from_config(const ConfigFile& config);

struct MultisplitRunConfig {
  MultisplitConfig ms;
  FamilySpec family = FamilySpec::gaussian(1.0, DispersionMode::estimate);
  double lambda_scale = 1.0;  // t in lambda = t sqrt(2 log p) sd(y)
};

/// Maps [multisplit] onto MultisplitRunConfig, rejecting unknown keys.
MultisplitRunConfig multisplit_from_config(const ConfigFile& config);

}  // namespace distsi

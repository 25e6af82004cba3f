#pragma once

#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "apm/backtest.hpp"
#include "apm/evaluate.hpp"

namespace apm {

// Value of one config entry. Numbers are stored as double; integer-valued
// settings are range-checked when mapped onto typed fields.
using ConfigValue =
    std::variant<double, bool, std::string, std::vector<double>, std::vector<std::string>>;

// Flat view of a TOML-style file: keys are "table.key".
class ConfigTable {
 public:
  void set(std::string key, ConfigValue value);
  bool has(const std::string& key) const;

  double get_number(const std::string& key, double fallback) const;
  long get_integer(const std::string& key, long fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  std::vector<double> get_numbers(const std::string& key) const;
  std::vector<std::string> get_strings(const std::string& key) const;

  // Keys present in the file but never read; used to reject typos.
  std::vector<std::string> unused_keys() const;

 private:
  const ConfigValue* find(const std::string& key) const;

  std::map<std::string, ConfigValue> values_;
  mutable std::map<std::string, bool> touched_;
};

// Parses the supported TOML subset: [table] headers, `key = value` lines,
// `#` comments, values being numbers, booleans, quoted strings, or
// single-type arrays thereof.
ConfigTable parse_config_file(const std::string& path);
ConfigTable parse_config_text(const std::string& text, const std::string& origin);

struct SplitSpec {
  double is_fraction = 0.6;  // in-sample share of the period grid
  int n_folds = 5;
  Eigen::Index min_train = 104;
};

struct SynthSpec {
  Eigen::Index n_assets = 50;
  Eigen::Index n_periods = 500;
  Eigen::Index n_factors = 2;
  double idio_vol = 0.03;
  double planted_bvtp_payoff = 0.0;
  std::optional<double> payoff_half_life_weeks;
  bool student_t = false;
  std::uint64_t seed = 1;
};

struct RunConfig {
  std::string data_dir;    // directory holding prices/characteristics/rf CSVs
  std::string output_dir = "out";
  HyperParams hyper;
  GridSpec grid;
  SplitSpec split;
  SynthSpec synth;
  int cscv_blocks = 16;
  std::uint64_t seed = 1;

  void validate() const;
};

RunConfig load_run_config(const std::string& path);

}  // namespace apm

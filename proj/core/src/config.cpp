#include "apm/config.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include "apm/errors.hpp"

namespace apm {
namespace {

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

// Strips a trailing comment that is not inside a quoted string.
std::string strip_comment(const std::string& line) {
  bool in_string = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') in_string = !in_string;
    if (line[i] == '#' && !in_string) return line.substr(0, i);
  }
  return line;
}

[[noreturn]] void fail(const std::string& origin, int line_no, const std::string& what) {
  throw DataError(origin + ":" + std::to_string(line_no) + ": " + what);
}

ConfigValue parse_scalar(const std::string& tok, const std::string& origin, int line_no) {
  if (tok.empty()) fail(origin, line_no, "empty value");
  if (tok == "true") return true;
  if (tok == "false") return false;
  if (tok.front() == '"') {
    if (tok.size() < 2 || tok.back() != '"')
      fail(origin, line_no, "unterminated string: " + tok);
    return tok.substr(1, tok.size() - 2);
  }
  try {
    std::size_t used = 0;
    const double v = std::stod(tok, &used);
    if (used != tok.size()) fail(origin, line_no, "malformed number: " + tok);
    return v;
  } catch (const std::invalid_argument&) {
    fail(origin, line_no, "unrecognized value: " + tok);
  } catch (const std::out_of_range&) {
    fail(origin, line_no, "number out of range: " + tok);
  }
}

ConfigValue parse_value(const std::string& raw, const std::string& origin, int line_no) {
  const std::string tok = trim(raw);
  if (tok.empty()) fail(origin, line_no, "missing value");
  if (tok.front() != '[') return parse_scalar(tok, origin, line_no);
  if (tok.back() != ']') fail(origin, line_no, "unterminated array");

  std::vector<std::string> items;
  std::string cur;
  bool in_string = false;
  for (std::size_t i = 1; i + 1 < tok.size(); ++i) {
    const char c = tok[i];
    if (c == '"') in_string = !in_string;
    if (c == ',' && !in_string) {
      items.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!trim(cur).empty()) items.push_back(trim(cur));

  std::vector<double> numbers;
  std::vector<std::string> strings;
  for (const auto& item : items) {
    const ConfigValue v = parse_scalar(item, origin, line_no);
    if (std::holds_alternative<double>(v)) {
      numbers.push_back(std::get<double>(v));
    } else if (std::holds_alternative<std::string>(v)) {
      strings.push_back(std::get<std::string>(v));
    } else {
      fail(origin, line_no, "arrays may hold numbers or strings only");
    }
  }
  if (!numbers.empty() && !strings.empty())
    fail(origin, line_no, "mixed-type array");
  if (!strings.empty()) return strings;
  return numbers;
}

bool valid_key(const std::string& key) {
  if (key.empty()) return false;
  for (char c : key)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_' && c != '.') return false;
  return true;
}

ActiveModel model_from_name(const std::string& name) {
  if (name == "all") return ActiveModel::kAll;
  if (name == "value") return ActiveModel::kValue;
  if (name == "momentum") return ActiveModel::kMomentum;
  if (name == "value_moms") return ActiveModel::kValueMoms;
  throw DataError("unknown active model '" + name +
                  "' (expected all, value, momentum, or value_moms)");
}

}  // namespace

void ConfigTable::set(std::string key, ConfigValue value) {
  values_[std::move(key)] = std::move(value);
}

bool ConfigTable::has(const std::string& key) const { return find(key) != nullptr; }

const ConfigValue* ConfigTable::find(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) return nullptr;
  touched_[key] = true;
  return &it->second;
}

double ConfigTable::get_number(const std::string& key, double fallback) const {
  const auto* v = find(key);
  if (!v) return fallback;
  if (!std::holds_alternative<double>(*v))
    throw DataError("config field '" + key + "' must be a number");
  return std::get<double>(*v);
}

long ConfigTable::get_integer(const std::string& key, long fallback) const {
  const auto* v = find(key);
  if (!v) return fallback;
  if (!std::holds_alternative<double>(*v))
    throw DataError("config field '" + key + "' must be an integer");
  const double d = std::get<double>(*v);
  if (d != std::floor(d)) throw DataError("config field '" + key + "' must be an integer");
  return static_cast<long>(d);
}

bool ConfigTable::get_bool(const std::string& key, bool fallback) const {
  const auto* v = find(key);
  if (!v) return fallback;
  if (!std::holds_alternative<bool>(*v))
    throw DataError("config field '" + key + "' must be true or false");
  return std::get<bool>(*v);
}

std::string ConfigTable::get_string(const std::string& key, const std::string& fallback) const {
  const auto* v = find(key);
  if (!v) return fallback;
  if (!std::holds_alternative<std::string>(*v))
    throw DataError("config field '" + key + "' must be a string");
  return std::get<std::string>(*v);
}

std::vector<double> ConfigTable::get_numbers(const std::string& key) const {
  const auto* v = find(key);
  if (!v) return {};
  if (std::holds_alternative<double>(*v)) return {std::get<double>(*v)};
  if (!std::holds_alternative<std::vector<double>>(*v))
    throw DataError("config field '" + key + "' must be a number array");
  return std::get<std::vector<double>>(*v);
}

std::vector<std::string> ConfigTable::get_strings(const std::string& key) const {
  const auto* v = find(key);
  if (!v) return {};
  if (std::holds_alternative<std::string>(*v)) return {std::get<std::string>(*v)};
  if (!std::holds_alternative<std::vector<std::string>>(*v))
    throw DataError("config field '" + key + "' must be a string array");
  return std::get<std::vector<std::string>>(*v);
}

std::vector<std::string> ConfigTable::unused_keys() const {
  std::vector<std::string> out;
  for (const auto& [key, value] : values_)
    if (!touched_.count(key)) out.push_back(key);
  return out;
}

ConfigTable parse_config_text(const std::string& text, const std::string& origin) {
  ConfigTable table;
  std::istringstream in(text);
  std::string line;
  std::string section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(strip_comment(line));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') fail(origin, line_no, "malformed table header: " + line);
      section = trim(line.substr(1, line.size() - 2));
      if (!valid_key(section)) fail(origin, line_no, "malformed table name: " + section);
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail(origin, line_no, "expected key = value: " + line);
    const std::string key = trim(line.substr(0, eq));
    if (!valid_key(key)) fail(origin, line_no, "malformed key: " + key);
    const std::string full = section.empty() ? key : section + "." + key;
    if (table.has(full)) fail(origin, line_no, "duplicate key: " + full);
    table.set(full, parse_value(line.substr(eq + 1), origin, line_no));
  }
  return table;
}

ConfigTable parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str(), path);
}

void RunConfig::validate() const {
  hyper.validate();
  if (split.is_fraction <= 0.0 || split.is_fraction >= 1.0)
    throw DataError("split.is_fraction must lie in (0, 1)");
  if (split.n_folds < 1) throw DataError("split.folds must be >= 1");
  if (split.min_train < 1) throw DataError("split.min_train must be >= 1");
  if (cscv_blocks < 2 || cscv_blocks % 2 != 0)
    throw DataError("evaluate.cscv_blocks must be even and >= 2");
  if (synth.n_assets < 2 || synth.n_periods < 2 || synth.n_factors < 1)
    throw DataError("synth dimensions out of range");
  if (synth.idio_vol < 0.0) throw DataError("synth.idio_vol must be >= 0");
}

RunConfig load_run_config(const std::string& path) {
  const ConfigTable t = parse_config_file(path);
  RunConfig c;

  c.data_dir = t.get_string("data.dir", c.data_dir);
  c.output_dir = t.get_string("output.dir", c.output_dir);
  c.seed = static_cast<std::uint64_t>(t.get_integer("run.seed", static_cast<long>(c.seed)));

  HyperParams& h = c.hyper;
  h.lambda_s = t.get_number("hyper.lambda_s", h.lambda_s);
  h.lambda_a = t.get_number("hyper.lambda_a", h.lambda_a);
  h.kappa_s = t.get_number("hyper.kappa_s", h.kappa_s);
  h.kappa_a = t.get_number("hyper.kappa_a", h.kappa_a);
  h.gamma_s = t.get_number("hyper.gamma_s", h.gamma_s);
  h.gamma_a = t.get_number("hyper.gamma_a", h.gamma_a);
  h.rlma_step = t.get_number("hyper.rlma_step", h.rlma_step);
  h.rlma_huber_c = t.get_number("hyper.rlma_huber_c", h.rlma_huber_c);
  h.ridge = t.get_number("hyper.ridge", h.ridge);
  h.universe_size = t.get_integer("hyper.universe_size", h.universe_size);
  h.max_leverage = t.get_number("hyper.max_leverage", h.max_leverage);
  h.burn_in = t.get_integer("hyper.burn_in", h.burn_in);
  h.diagonal_omega = t.get_bool("hyper.diagonal_omega", h.diagonal_omega);
  h.char_interactions = t.get_bool("hyper.char_interactions", h.char_interactions);
  if (t.has("hyper.active_model"))
    h.active_model = model_from_name(t.get_string("hyper.active_model", "all"));

  GridSpec& g = c.grid;
  g.lambda_s = t.get_numbers("grid.lambda_s");
  g.lambda_a = t.get_numbers("grid.lambda_a");
  g.kappa_s = t.get_numbers("grid.kappa_s");
  g.kappa_a = t.get_numbers("grid.kappa_a");
  g.gamma_s = t.get_numbers("grid.gamma_s");
  g.gamma_a = t.get_numbers("grid.gamma_a");
  for (const auto& name : t.get_strings("grid.active_models"))
    g.active_models.push_back(model_from_name(name));

  c.split.is_fraction = t.get_number("split.is_fraction", c.split.is_fraction);
  c.split.n_folds = static_cast<int>(t.get_integer("split.folds", c.split.n_folds));
  c.split.min_train = t.get_integer("split.min_train", c.split.min_train);

  c.cscv_blocks = static_cast<int>(t.get_integer("evaluate.cscv_blocks", c.cscv_blocks));

  SynthSpec& s = c.synth;
  s.n_assets = t.get_integer("synth.assets", s.n_assets);
  s.n_periods = t.get_integer("synth.periods", s.n_periods);
  s.n_factors = t.get_integer("synth.factors", s.n_factors);
  s.idio_vol = t.get_number("synth.idio_vol", s.idio_vol);
  s.planted_bvtp_payoff = t.get_number("synth.bvtp_payoff", s.planted_bvtp_payoff);
  if (t.has("synth.payoff_half_life"))
    s.payoff_half_life_weeks = t.get_number("synth.payoff_half_life", 52.0);
  s.student_t = t.get_bool("synth.student_t", s.student_t);
  s.seed = static_cast<std::uint64_t>(t.get_integer("synth.seed", static_cast<long>(s.seed)));

  const auto unused = t.unused_keys();
  if (!unused.empty()) {
    std::string msg = path + ": unrecognized config keys:";
    for (const auto& k : unused) msg += " " + k;
    throw DataError(msg);
  }

  c.validate();
  return c;
}

}  // namespace apm

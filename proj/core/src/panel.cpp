#include "apm/panel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

namespace apm {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  fields.push_back(cur);
  return fields;
}

double parse_double(const std::string& s, const std::string& file, std::size_t lineno) {
  std::size_t pos = 0;
  double v;
  try {
    v = std::stod(s, &pos);
  } catch (const std::exception&) {
    throw DataError(file + ":" + std::to_string(lineno) + ": not a number: '" + s + "'");
  }
  if (pos != s.size())
    throw DataError(file + ":" + std::to_string(lineno) + ": trailing junk in '" + s + "'");
  return v;
}

struct CsvFile {
  std::vector<std::vector<std::string>> rows;  // without header
  std::vector<std::size_t> linenos;
};

CsvFile read_csv(const std::string& path, std::size_t min_fields) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  CsvFile out;
  std::string line;
  std::size_t lineno = 0;
  bool header = true;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    if (header) {  // header row is named but not interpreted
      header = false;
      continue;
    }
    auto fields = split_csv_line(line);
    if (fields.size() < min_fields)
      throw DataError(path + ":" + std::to_string(lineno) + ": expected >= " +
                      std::to_string(min_fields) + " fields, got " +
                      std::to_string(fields.size()));
    out.rows.push_back(std::move(fields));
    out.linenos.push_back(lineno);
  }
  return out;
}

}  // namespace

Eigen::Index AssetPanel::char_index(const std::string& name) const {
  for (std::size_t m = 0; m < char_names.size(); ++m)
    if (char_names[m] == name) return static_cast<Eigen::Index>(m);
  throw DataError("unknown characteristic: " + name);
}

void AssetPanel::validate() const {
  const auto T = periods();
  const auto N = assets();
  if (excess_returns.rows() != T || excess_returns.cols() != N ||
      available.rows() != T || available.cols() != N || rf.size() != T)
    throw DataError("panel dimensions inconsistent");
  for (Eigen::Index t = 1; t < T; ++t)
    if (!(dates[t - 1] < dates[t])) throw DataError("dates not strictly increasing at " + dates[t]);
  for (Eigen::Index t = 0; t < T; ++t)
    for (Eigen::Index i = 0; i < N; ++i) {
      if (available(t, i)) {
        if (!std::isfinite(returns(t, i)))
          throw DataError("non-finite return marked available at t=" + std::to_string(t));
        if (std::abs(excess_returns(t, i) - (returns(t, i) - rf(t))) > 1e-12)
          throw DataError("excess return identity violated");
      }
    }
  for (std::size_t m = 0; m < char_names.size(); ++m) {
    if (char_names[m] != chars::kMV) continue;
    const auto& mv = characteristics[m];
    for (Eigen::Index t = 0; t < T; ++t)
      for (Eigen::Index i = 0; i < N; ++i)
        if (available(t, i) && std::isfinite(mv(t, i)) && mv(t, i) <= 0.0)
          throw DataError("non-positive MV at t=" + std::to_string(t));
  }
}

AssetPanel load_panel(const std::string& prices_path,
                      const std::string& characteristics_path,
                      const std::string& rf_path) {
  // rf.csv defines the date grid.
  CsvFile rf_csv = read_csv(rf_path, 2);
  std::vector<std::string> dates;
  std::vector<double> rf_vals;
  std::map<std::string, Eigen::Index> date_index;
  for (std::size_t r = 0; r < rf_csv.rows.size(); ++r) {
    const auto& row = rf_csv.rows[r];
    if (!dates.empty() && !(dates.back() < row[0]))
      throw DataError(rf_path + ":" + std::to_string(rf_csv.linenos[r]) +
                      ": dates not strictly increasing at " + row[0]);
    date_index[row[0]] = static_cast<Eigen::Index>(dates.size());
    dates.push_back(row[0]);
    rf_vals.push_back(parse_double(row[1], rf_path, rf_csv.linenos[r]));
  }
  const auto T = static_cast<Eigen::Index>(dates.size());
  if (T == 0) throw DataError(rf_path + ": no data rows");

  CsvFile px_csv = read_csv(prices_path, 3);
  std::map<std::string, Eigen::Index> asset_index;
  for (const auto& row : px_csv.rows) asset_index.emplace(row[1], 0);
  {
    Eigen::Index k = 0;
    for (auto& [id, idx] : asset_index) idx = k++;
  }
  const auto N = static_cast<Eigen::Index>(asset_index.size());
  if (N == 0) throw DataError(prices_path + ": no data rows");

  Eigen::MatrixXd prices = Eigen::MatrixXd::Constant(T, N, kNaN);
  for (std::size_t r = 0; r < px_csv.rows.size(); ++r) {
    const auto& row = px_csv.rows[r];
    auto dit = date_index.find(row[0]);
    if (dit == date_index.end())
      throw DataError(prices_path + ":" + std::to_string(px_csv.linenos[r]) +
                      ": date " + row[0] + " not in risk-free grid");
    if (row[2].empty()) continue;  // missing price cell
    const double p = parse_double(row[2], prices_path, px_csv.linenos[r]);
    if (p <= 0.0)
      throw DataError(prices_path + ":" + std::to_string(px_csv.linenos[r]) +
                      ": non-positive price");
    prices(dit->second, asset_index.at(row[1])) = p;
  }

  AssetPanel panel;
  panel.dates = std::move(dates);
  panel.asset_ids.reserve(asset_index.size());
  for (const auto& [id, idx] : asset_index) panel.asset_ids.push_back(id);
  panel.rf = Eigen::Map<const Eigen::VectorXd>(rf_vals.data(), T);
  panel.returns = Eigen::MatrixXd::Constant(T, N, kNaN);
  panel.excess_returns = Eigen::MatrixXd::Constant(T, N, kNaN);
  panel.available = BoolArray::Constant(T, N, false);
  for (Eigen::Index i = 0; i < N; ++i)
    for (Eigen::Index t = 1; t < T; ++t)
      if (std::isfinite(prices(t, i)) && std::isfinite(prices(t - 1, i))) {
        panel.available(t, i) = true;
        panel.returns(t, i) = prices(t, i) / prices(t - 1, i) - 1.0;
        panel.excess_returns(t, i) = panel.returns(t, i) - panel.rf(t);
      }

  panel.char_names = {chars::kBVTP, chars::kMV};
  panel.characteristics.assign(2, Eigen::MatrixXd::Constant(T, N, kNaN));
  CsvFile ch_csv = read_csv(characteristics_path, 4);
  for (std::size_t r = 0; r < ch_csv.rows.size(); ++r) {
    const auto& row = ch_csv.rows[r];
    auto dit = date_index.find(row[0]);
    if (dit == date_index.end())
      throw DataError(characteristics_path + ":" + std::to_string(ch_csv.linenos[r]) +
                      ": date " + row[0] + " not in risk-free grid");
    auto ait = asset_index.find(row[1]);
    if (ait == asset_index.end()) continue;  // characteristic for a never-priced asset
    if (!row[2].empty())
      panel.characteristics[0](dit->second, ait->second) =
          parse_double(row[2], characteristics_path, ch_csv.linenos[r]);
    if (!row[3].empty()) {
      const double mv = parse_double(row[3], characteristics_path, ch_csv.linenos[r]);
      if (mv <= 0.0)
        throw DataError(characteristics_path + ":" + std::to_string(ch_csv.linenos[r]) +
                        ": non-positive MV");
      panel.characteristics[1](dit->second, ait->second) = mv;
    }
  }
  panel.macro.resize(T, 0);
  panel.validate();
  return panel;
}

namespace {

Eigen::MatrixXd rolling_compound(const AssetPanel& panel, Eigen::Index window) {
  const auto T = panel.periods();
  const auto N = panel.assets();
  Eigen::MatrixXd out = Eigen::MatrixXd::Constant(T, N, kNaN);
  for (Eigen::Index i = 0; i < N; ++i) {
    for (Eigen::Index t = window - 1; t < T; ++t) {
      double acc = 1.0;
      bool ok = true;
      for (Eigen::Index s = t - window + 1; s <= t; ++s) {
        if (!panel.is_available(s, i)) {
          ok = false;
          break;
        }
        acc *= 1.0 + panel.returns(s, i);
      }
      if (ok && panel.is_available(t, i)) out(t, i) = acc - 1.0;
    }
  }
  return out;
}

}  // namespace

AssetPanel compute_momentum(AssetPanel panel) {
  panel.char_names.push_back(chars::kMOMS);
  panel.characteristics.push_back(rolling_compound(panel, 13));
  panel.char_names.push_back(chars::kMOML);
  panel.characteristics.push_back(rolling_compound(panel, 52));
  return panel;
}

namespace {

double leg_mean(const AssetPanel& panel, Eigen::Index t,
                const std::vector<Eigen::Index>& leg) {
  double s = 0.0;
  for (auto i : leg) s += panel.return_at(t, i);
  return s / static_cast<double>(leg.size());
}

}  // namespace

FactorSeries build_factor_portfolios(const AssetPanel& panel, const FactorConfig& cfg) {
  const auto T = panel.periods();
  const auto mv_idx = panel.char_index(chars::kMV);
  const auto bvtp_idx = panel.char_index(chars::kBVTP);
  FactorSeries fs;
  fs.factor_names = {"SMB", "HML"};
  fs.factor_returns = Eigen::MatrixXd::Constant(T, 2, kNaN);
  fs.factor_available = Eigen::Array<bool, Eigen::Dynamic, 1>::Constant(T, false);
  fs.breakpoints = Eigen::MatrixXd::Constant(T, 3, kNaN);

  for (Eigen::Index t = 1; t < T; ++t) {
    // Sorted at t-1, held over week t; needs both the formation
    // characteristics and a realized return.
    std::vector<Eigen::Index> eligible;
    for (Eigen::Index i = 0; i < panel.assets(); ++i)
      if (panel.is_available(t, i) && panel.char_present(mv_idx, t - 1, i) &&
          panel.char_present(bvtp_idx, t - 1, i))
        eligible.push_back(i);
    const auto n = static_cast<Eigen::Index>(eligible.size());
    if (n < 2) continue;

    auto by_char = [&](Eigen::Index m) {
      auto order = eligible;
      std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
        const double va = panel.char_at(m, t - 1, a);
        const double vb = panel.char_at(m, t - 1, b);
        if (va != vb) return va < vb;
        return a < b;  // deterministic tie-break by asset id
      });
      return order;
    };

    // SMB: median MV split, equal-weighted small minus big.
    {
      auto order = by_char(mv_idx);
      const auto half = n / 2;
      std::vector<Eigen::Index> small(order.begin(), order.begin() + half);
      std::vector<Eigen::Index> big(order.begin() + half, order.end());
      if (static_cast<int>(small.size()) >= cfg.min_leg_size &&
          static_cast<int>(big.size()) >= cfg.min_leg_size) {
        fs.factor_returns(t, 0) = leg_mean(panel, t, small) - leg_mean(panel, t, big);
        fs.breakpoints(t, 0) = panel.char_at(mv_idx, t - 1, order[static_cast<std::size_t>(half)]);
      }
    }
    // HML: top minus bottom BVTP quantile legs.
    {
      auto order = by_char(bvtp_idx);
      const auto lo_n = static_cast<Eigen::Index>(
          std::floor(cfg.value_lo_quantile * static_cast<double>(n) + 1e-12));
      const auto hi_n = static_cast<Eigen::Index>(
          std::floor((1.0 - cfg.value_hi_quantile) * static_cast<double>(n) + 1e-12));
      if (lo_n >= cfg.min_leg_size && hi_n >= cfg.min_leg_size && lo_n + hi_n <= n) {
        std::vector<Eigen::Index> lo(order.begin(), order.begin() + lo_n);
        std::vector<Eigen::Index> hi(order.end() - hi_n, order.end());
        fs.factor_returns(t, 1) = leg_mean(panel, t, hi) - leg_mean(panel, t, lo);
        fs.breakpoints(t, 1) = panel.char_at(bvtp_idx, t - 1, order[static_cast<std::size_t>(lo_n - 1)]);
        fs.breakpoints(t, 2) = panel.char_at(bvtp_idx, t - 1, order[static_cast<std::size_t>(n - hi_n)]);
      }
    }
    fs.factor_available(t) =
        std::isfinite(fs.factor_returns(t, 0)) && std::isfinite(fs.factor_returns(t, 1));
  }
  return fs;
}

std::vector<Eigen::Index> investible_universe(const AssetPanel& panel, Eigen::Index t,
                                              Eigen::Index universe_size) {
  if (t < 0 || t >= panel.periods())
    throw DataError("investible_universe: period " + std::to_string(t) + " out of range");
  const auto mv_idx = panel.char_index(chars::kMV);
  std::vector<Eigen::Index> candidates;
  for (Eigen::Index i = 0; i < panel.assets(); ++i)
    if (panel.is_available(t, i) && panel.char_present(mv_idx, t, i))
      candidates.push_back(i);
  // The index tiebreak makes the order total, so plain sort is already
  // deterministic.
  std::sort(candidates.begin(), candidates.end(),
            [&](Eigen::Index a, Eigen::Index b) {
              const double va = panel.char_at(mv_idx, t, a);
              const double vb = panel.char_at(mv_idx, t, b);
              if (va != vb) return va > vb;
              return a < b;
            });
  if (static_cast<Eigen::Index>(candidates.size()) > universe_size)
    candidates.resize(static_cast<std::size_t>(universe_size));
  std::sort(candidates.begin(), candidates.end());
  return candidates;
}

}  // namespace apm

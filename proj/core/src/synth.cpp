#include "apm/synth.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>

namespace apm {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Howard Hinnant's civil-date algorithm, used to stamp weekly grids.
long days_from_civil(int y, int m, int d) {
  y -= m <= 2;
  const long era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153u * static_cast<unsigned>(m + (m > 2 ? -3 : 9)) + 2u) / 5u +
                       static_cast<unsigned>(d) - 1u;
  const unsigned doe = yoe * 365u + yoe / 4u - yoe / 100u + doy;
  return era * 146097 + static_cast<long>(doe) - 719468;
}

std::string civil_from_days(long z) {
  z += 719468;
  const long era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const long y = static_cast<long>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  const unsigned d = doy - (153 * mp + 2) / 5 + 1;
  const unsigned m = mp < 10 ? mp + 3 : mp - 9;
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04ld-%02u-%02u", y + (m <= 2), m, d);
  return buf;
}

double rolling_mom(const Eigen::MatrixXd& excess, const Eigen::VectorXd& rf,
                   Eigen::Index t, Eigen::Index i, Eigen::Index window) {
  if (t < window) return kNaN;
  double acc = 1.0;
  for (Eigen::Index s = t - window + 1; s <= t; ++s) acc *= 1.0 + excess(s, i) + rf(s);
  return acc - 1.0;
}

}  // namespace

SyntheticMarket generate(const GeneratorSpec& spec) {
  const auto N = spec.n_assets;
  const auto T = spec.periods;
  const auto P = spec.n_factors;
  if (N <= 0 || T <= 2 || P <= 0) throw DataError("generate: bad dimensions");

  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::student_t_distribution<double> student(spec.t_dof);

  GeneratorTruth truth;
  truth.betas = spec.true_betas.size() ? spec.true_betas : Eigen::MatrixXd(N, P);
  if (!spec.true_betas.size())
    for (Eigen::Index i = 0; i < N; ++i)
      for (Eigen::Index p = 0; p < P; ++p) truth.betas(i, p) = 0.5 + unif(rng);
  truth.factor_vol =
      spec.factor_vol.size() ? spec.factor_vol : Eigen::VectorXd::Constant(P, 0.02);
  truth.factor_premia =
      spec.factor_premia.size() ? spec.factor_premia : Eigen::VectorXd::Constant(P, 0.001);
  truth.idio_vol = spec.idio_vol.size() ? spec.idio_vol : Eigen::VectorXd::Constant(N, 0.03);
  if ((truth.factor_vol.array() <= 0.0).any() || (truth.idio_vol.array() < 0.0).any())
    throw DataError("generate: vols must be positive");

  constexpr Eigen::Index kChars = 4;  // bvtp, mv, moms, moml
  Eigen::VectorXd payoff0 = spec.planted_payoffs.size()
                                ? spec.planted_payoffs
                                : Eigen::VectorXd::Zero(kChars + 1);
  if (payoff0.size() != kChars + 1) throw DataError("generate: planted_payoffs must have 5 entries");
  truth.payoff_path.resize(T, kChars + 1);
  for (Eigen::Index t = 0; t < T; ++t) {
    const double decay = spec.payoff_half_life_weeks > 0.0
                             ? std::pow(2.0, -static_cast<double>(t) / spec.payoff_half_life_weeks)
                             : 1.0;
    truth.payoff_path.row(t) = (payoff0 * decay).transpose();
  }

  // Persistent characteristic scores; MV is log-normal around a fixed
  // per-asset size.
  Eigen::MatrixXd bvtp(T, N), mv(T, N);
  Eigen::VectorXd size_base(N), bvtp_state(N), mv_state(N);
  for (Eigen::Index i = 0; i < N; ++i) {
    size_base(i) = gauss(rng);
    bvtp_state(i) = gauss(rng);
    mv_state(i) = gauss(rng);
  }
  const double rho = 0.95;
  const double innov = std::sqrt(1.0 - rho * rho);
  for (Eigen::Index t = 0; t < T; ++t) {
    for (Eigen::Index i = 0; i < N; ++i) {
      bvtp_state(i) = rho * bvtp_state(i) + innov * gauss(rng);
      mv_state(i) = rho * mv_state(i) + innov * gauss(rng);
      bvtp(t, i) = bvtp_state(i);
      mv(t, i) = std::exp(size_base(i) + 0.2 * mv_state(i));
    }
  }

  Eigen::MatrixXd factors = Eigen::MatrixXd::Constant(T, P, kNaN);
  Eigen::MatrixXd excess = Eigen::MatrixXd::Constant(T, N, kNaN);
  Eigen::VectorXd rf = Eigen::VectorXd::Constant(T, spec.rf_rate);
  const double t_scale =
      spec.t_dof > 2.0 ? std::sqrt(spec.t_dof / (spec.t_dof - 2.0)) : 1.0;

  for (Eigen::Index t = 1; t < T; ++t) {
    for (Eigen::Index p = 0; p < P; ++p)
      factors(t, p) = truth.factor_premia(p) + truth.factor_vol(p) * gauss(rng);
    const auto& delta = truth.payoff_path.row(t - 1);
    for (Eigen::Index i = 0; i < N; ++i) {
      const double moms = rolling_mom(excess, rf, t - 1, i, 13);
      const double moml = rolling_mom(excess, rf, t - 1, i, 52);
      double alpha = delta(0) + delta(1) * bvtp(t - 1, i) + delta(2) * mv(t - 1, i);
      if (std::isfinite(moms)) alpha += delta(3) * moms;
      if (std::isfinite(moml)) alpha += delta(4) * moml;
      const double eps = spec.student_t ? student(rng) / t_scale : gauss(rng);
      excess(t, i) = alpha + truth.betas.row(i).dot(factors.row(t)) + truth.idio_vol(i) * eps;
    }
  }

  SyntheticMarket out;
  AssetPanel& panel = out.panel;
  panel.dates.reserve(static_cast<std::size_t>(T));
  const long day0 = days_from_civil(2000, 1, 7);
  for (Eigen::Index t = 0; t < T; ++t) panel.dates.push_back(civil_from_days(day0 + 7 * t));
  panel.asset_ids.reserve(static_cast<std::size_t>(N));
  for (Eigen::Index i = 0; i < N; ++i) {
    char buf[8];
    std::snprintf(buf, sizeof(buf), "A%03d", static_cast<int>(i));
    panel.asset_ids.push_back(buf);
  }
  panel.rf = rf;
  panel.excess_returns = excess;
  panel.returns = excess;
  for (Eigen::Index t = 0; t < T; ++t) panel.returns.row(t).array() += rf(t);
  panel.available = BoolArray::Constant(T, N, true);
  panel.available.row(0).setConstant(false);
  panel.returns.row(0).setConstant(kNaN);
  panel.excess_returns.row(0).setConstant(kNaN);

  panel.char_names = {chars::kBVTP, chars::kMV};
  panel.characteristics = {bvtp, mv};
  Eigen::MatrixXd moms_mat = Eigen::MatrixXd::Constant(T, N, kNaN);
  Eigen::MatrixXd moml_mat = Eigen::MatrixXd::Constant(T, N, kNaN);
  for (Eigen::Index t = 1; t < T; ++t)
    for (Eigen::Index i = 0; i < N; ++i) {
      moms_mat(t, i) = rolling_mom(excess, rf, t, i, 13);
      moml_mat(t, i) = rolling_mom(excess, rf, t, i, 52);
    }
  panel.char_names.push_back(chars::kMOMS);
  panel.characteristics.push_back(moms_mat);
  panel.char_names.push_back(chars::kMOML);
  panel.characteristics.push_back(moml_mat);
  panel.macro.resize(T, 0);

  FactorSeries& fs = out.factors;
  fs.factor_names.reserve(static_cast<std::size_t>(P));
  for (Eigen::Index p = 0; p < P; ++p)
    fs.factor_names.push_back(P == 2 ? (p == 0 ? "SMB" : "HML") : "F" + std::to_string(p));
  fs.factor_returns = factors;
  fs.factor_available = Eigen::Array<bool, Eigen::Dynamic, 1>::Constant(T, true);
  fs.factor_available(0) = false;
  fs.breakpoints = Eigen::MatrixXd::Constant(T, 3, kNaN);

  out.truth = std::move(truth);
  return out;
}

void write_panel_csv(const AssetPanel& panel, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const auto T = panel.periods();
  const auto N = panel.assets();

  {
    std::ofstream out(fs::path(dir) / "rf.csv");
    out << "date,rf\n";
    for (Eigen::Index t = 0; t < T; ++t) out << panel.dates[t] << "," << panel.rf(t) << "\n";
  }
  {
    // Rebuild a price path consistent with the stored returns.
    Eigen::MatrixXd prices = Eigen::MatrixXd::Constant(T, N, kNaN);
    for (Eigen::Index i = 0; i < N; ++i) {
      double p = 100.0;
      Eigen::Index last_t = -1;
      for (Eigen::Index t = 0; t < T; ++t) {
        if (t == 0) {
          prices(t, i) = p;
          last_t = t;
        } else if (panel.is_available(t, i) && last_t == t - 1) {
          p *= 1.0 + panel.returns(t, i);
          prices(t, i) = p;
          last_t = t;
        } else if (panel.is_available(t, i)) {
          prices(t, i) = p;  // re-listing after a gap at the last price
          last_t = t;
        }
      }
    }
    std::ofstream out(fs::path(dir) / "prices.csv");
    out << "date,asset_id,price\n";
    out.precision(12);
    for (Eigen::Index t = 0; t < T; ++t)
      for (Eigen::Index i = 0; i < N; ++i)
        if (std::isfinite(prices(t, i)))
          out << panel.dates[t] << "," << panel.asset_ids[i] << "," << prices(t, i) << "\n";
  }
  {
    const auto bvtp_idx = panel.char_index(chars::kBVTP);
    const auto mv_idx = panel.char_index(chars::kMV);
    std::ofstream out(fs::path(dir) / "characteristics.csv");
    out << "date,asset_id,bvtp,mv\n";
    out.precision(12);
    for (Eigen::Index t = 0; t < T; ++t)
      for (Eigen::Index i = 0; i < N; ++i) {
        const double b = panel.characteristics[static_cast<std::size_t>(bvtp_idx)](t, i);
        const double m = panel.characteristics[static_cast<std::size_t>(mv_idx)](t, i);
        if (!std::isfinite(b) && !std::isfinite(m)) continue;
        out << panel.dates[t] << "," << panel.asset_ids[i] << ",";
        if (std::isfinite(b)) out << b;
        out << ",";
        if (std::isfinite(m)) out << m;
        out << "\n";
      }
  }
}

}  // namespace apm

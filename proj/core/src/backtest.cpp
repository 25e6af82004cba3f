#include "apm/backtest.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace apm {
namespace {

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace

std::vector<std::string> active_model_chars(ActiveModel id) {
  switch (id) {
    case ActiveModel::kAll: return {chars::kBVTP, chars::kMV, chars::kMOMS, chars::kMOML};
    case ActiveModel::kValue: return {chars::kBVTP, chars::kMV};
    case ActiveModel::kMomentum: return {chars::kMOMS, chars::kMOML};
    case ActiveModel::kValueMoms: return {chars::kBVTP, chars::kMOMS};
  }
  throw DataError("unknown active model id");
}

void HyperParams::validate() const {
  auto in01 = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (!(lambda_s > 0.0 && lambda_s < 1.0) || !(lambda_a > 0.0 && lambda_a < 1.0))
    throw DataError("HyperParams: memory factors must lie in (0,1)");
  if (!in01(kappa_s) || !in01(kappa_a))
    throw DataError("HyperParams: shrinkage intensities must lie in [0,1]");
  if (gamma_s <= 0.0 || gamma_a <= 0.0)
    throw DataError("HyperParams: risk tolerances must be positive");
  if (universe_size < 1) throw DataError("HyperParams: universe size must be >= 1");
  if (max_leverage < 1.0) throw DataError("HyperParams: leverage bound must be >= 1");
  if (burn_in < 1) throw DataError("HyperParams: burn-in must be >= 1 period");
  if (rlma_step <= 0.0 || rlma_huber_c <= 0.0 || ridge <= 0.0)
    throw DataError("HyperParams: filter settings must be positive");
}

std::string HyperParams::encode() const {
  std::ostringstream os;
  os.precision(17);
  os << "lambda_s=" << lambda_s << ";lambda_a=" << lambda_a << ";kappa_s=" << kappa_s
     << ";kappa_a=" << kappa_a << ";gamma_s=" << gamma_s << ";gamma_a=" << gamma_a
     << ";model=" << static_cast<int>(active_model) << ";step=" << rlma_step
     << ";huber=" << rlma_huber_c << ";ridge=" << ridge << ";U=" << universe_size
     << ";L=" << max_leverage << ";burn_in=" << burn_in
     << ";diag_omega=" << diagonal_omega << ";interactions=" << char_interactions;
  return os.str();
}

std::uint64_t HyperParams::digest() const { return fnv1a(encode()); }

namespace {

// Shared accounting for the strategy and benchmark loops: per-period
// weight choice differs, everything else is identical.
class Accounting {
 public:
  Accounting(const AssetPanel& panel, Eigen::Index first_trade, Eigen::Index end)
      : panel_(panel), first_trade_(first_trade) {
    const auto T_hold = end - first_trade - 1;
    const auto N = panel.assets();
    result_.period_returns = Eigen::VectorXd::Zero(T_hold);
    result_.weights = Eigen::MatrixXd::Zero(T_hold, N);
    result_.component_returns = Eigen::MatrixXd::Zero(T_hold, 3);
    result_.turnover = Eigen::VectorXd::Zero(T_hold);
    result_.equity_curve = Eigen::VectorXd::Ones(T_hold + 1);
    result_.dates.reserve(static_cast<std::size_t>(T_hold));
    w_prev_ = Eigen::VectorXd::Zero(N);
    legs_prev_ = Eigen::MatrixXd::Zero(N, 3);
    w_drift_ = Eigen::VectorXd::Zero(N);
  }

  // Step 1 of the loop: realize the held portfolio over week t.
  void realize(Eigen::Index t) {
    if (t <= first_trade_) return;
    const auto N = panel_.assets();
    double excess = 0.0;
    Eigen::Vector3d leg_excess = Eigen::Vector3d::Zero();
    for (Eigen::Index i = 0; i < N; ++i) {
      if (!panel_.is_available(t, i)) continue;
      const double re = panel_.excess_at(t, i);
      excess += w_prev_(i) * re;
      for (int l = 0; l < 3; ++l) leg_excess(l) += legs_prev_(i, l) * re;
    }
    const auto k = t - first_trade_ - 1;
    result_.period_returns(k) = excess;
    result_.component_returns.row(k) = leg_excess.transpose();
    result_.equity_curve(k + 1) = result_.equity_curve(k) * (1.0 + excess);
    result_.dates.push_back(panel_.dates[static_cast<std::size_t>(t)]);

    // Post-return drift; positions that lost their price go to cash.
    const double growth = 1.0 + panel_.rf(t) + excess;
    w_drift_.setZero();
    for (Eigen::Index i = 0; i < N; ++i)
      if (panel_.is_available(t, i) && w_prev_(i) != 0.0)
        w_drift_(i) = w_prev_(i) * (1.0 + panel_.return_at(t, i)) / growth;
  }

  // Step 8: record the rebalanced weights chosen at t.
  void rebalance(Eigen::Index t, const Eigen::VectorXd& w, const Eigen::MatrixXd& legs) {
    const auto k = t - first_trade_;
    if (k < result_.weights.rows()) {
      result_.weights.row(k) = w.transpose();
      result_.turnover(k) = (w - w_drift_).lpNorm<1>();
    }
    w_prev_ = w;
    legs_prev_ = legs;
  }

  const Eigen::VectorXd& previous_weights() const { return w_prev_; }
  const Eigen::VectorXd& drifted_weights() const { return w_drift_; }
  const Eigen::MatrixXd& previous_legs() const { return legs_prev_; }
  BacktestResult take() { return std::move(result_); }
  void warn(std::string msg) { result_.warnings.push_back(std::move(msg)); }

 private:
  const AssetPanel& panel_;
  Eigen::Index first_trade_;
  BacktestResult result_;
  Eigen::VectorXd w_prev_, w_drift_;
  Eigen::MatrixXd legs_prev_;
};

void check_range(const AssetPanel& panel, const HyperParams& hp, Eigen::Index start,
                 Eigen::Index end) {
  hp.validate();
  if (start < 0 || end > panel.periods() || start >= end)
    throw DataError("run_backtest: bad period range");
  if (start + hp.burn_in + 1 >= end)
    throw DataError("run_backtest: range leaves no holding periods after burn-in");
}

// Hold the surviving previous positions, renormalized onto the budget.
Eigen::VectorXd hold_previous(const AssetPanel& panel, Eigen::Index t,
                              const Eigen::VectorXd& w_prev) {
  Eigen::VectorXd w = Eigen::VectorXd::Zero(w_prev.size());
  double s = 0.0;
  for (Eigen::Index i = 0; i < w_prev.size(); ++i)
    if (panel.is_available(t, i)) {
      w(i) = w_prev(i);
      s += w_prev(i);
    }
  if (std::abs(s) > 1e-12) w /= s;
  return w;
}

}  // namespace

BacktestResult run_backtest(const AssetPanel& panel, const FactorSeries& factors,
                            const HyperParams& hp, Eigen::Index start, Eigen::Index end) {
  check_range(panel, hp, start, end);
  if (factors.periods() != panel.periods())
    throw DataError("run_backtest: factor series not aligned with panel");

  const auto N = panel.assets();
  const auto P = factors.factors();
  const auto K = panel.macro_vars();
  const auto first_trade = start + hp.burn_in;

  const auto names = active_model_chars(hp.active_model);
  std::vector<Eigen::Index> char_idx;
  for (const auto& nm : names) char_idx.push_back(panel.char_index(nm));
  const auto M = static_cast<Eigen::Index>(char_idx.size());

  PricingConfig pc;
  pc.lambda_s = hp.lambda_s;
  pc.lambda_a = hp.lambda_a;
  pc.rlma_step = hp.rlma_step;
  pc.rlma_huber_c = hp.rlma_huber_c;
  pc.cov_ridge = hp.ridge;
  pc.char_interactions = hp.char_interactions;

  FactorModelState fm(N, P, M, K, pc);
  CharModelState cm(N, M, hp.lambda_a);
  UncertaintyState unc(N, hp.lambda_a, hp.diagonal_omega, hp.ridge);
  // Strategic-error memory differs from the active one.
  unc.omega_pi.lambda = hp.lambda_s;

  ConstraintSet constraints;
  constraints.max_leverage = hp.max_leverage;

  Accounting acct(panel, first_trade, end);
  std::optional<ReturnForecast> forecast;

  Eigen::MatrixXd chars_now = Eigen::MatrixXd::Zero(N, M);
  Eigen::MatrixXd chars_lag = Eigen::MatrixXd::Zero(N, M);
  std::vector<bool> chars_now_ok(static_cast<std::size_t>(N), false);
  std::vector<bool> chars_lag_ok(static_cast<std::size_t>(N), false);

  for (Eigen::Index t = start; t < end; ++t) {
    // (1) realize holdings over week t
    acct.realize(t);

    std::vector<bool> avail(static_cast<std::size_t>(N), false);
    for (Eigen::Index i = 0; i < N; ++i) avail[static_cast<std::size_t>(i)] = panel.is_available(t, i);
    Eigen::VectorXd excess_t = Eigen::VectorXd::Zero(N);
    for (Eigen::Index i = 0; i < N; ++i)
      if (avail[static_cast<std::size_t>(i)]) excess_t(i) = panel.excess_at(t, i);

    // (2) feed back forecast errors into the uncertainty estimates
    if (forecast) {
      const auto errors = record_forecast_errors(*forecast, excess_t, avail, t);
      update_uncertainty(unc, errors);
    }

    // Lagged characteristic snapshot from t-1 (predictors of week t).
    std::swap(chars_now, chars_lag);
    std::swap(chars_now_ok, chars_lag_ok);
    for (Eigen::Index i = 0; i < N; ++i) {
      bool ok = avail[static_cast<std::size_t>(i)];
      for (Eigen::Index m = 0; m < M && ok; ++m) ok = panel.char_present(char_idx[static_cast<std::size_t>(m)], t, i);
      chars_now_ok[static_cast<std::size_t>(i)] = ok;
      for (Eigen::Index m = 0; m < M; ++m)
        chars_now(i, m) = ok ? panel.char_at(char_idx[static_cast<std::size_t>(m)], t, i) : 0.0;
    }

    // (3) model updates: factor loadings on realized factors, payoffs by
    // cross-sectional regression on lagged characteristics.
    const bool factors_ok = t > start && factors.factor_available(t);
    if (factors_ok) {
      const Eigen::VectorXd f_t = factors.factor_returns.row(t).transpose();
      const Eigen::VectorXd macro_t =
          K > 0 ? Eigen::VectorXd(panel.macro.row(t).transpose()) : Eigen::VectorXd();
      std::vector<bool> update_mask = avail;
      if (hp.char_interactions)
        for (Eigen::Index i = 0; i < N; ++i)
          update_mask[static_cast<std::size_t>(i)] =
              update_mask[static_cast<std::size_t>(i)] && chars_lag_ok[static_cast<std::size_t>(i)];
      update_factor_model(fm, f_t, excess_t, macro_t, chars_lag, update_mask);
    }
    {
      std::vector<bool> reg_mask(static_cast<std::size_t>(N), false);
      for (Eigen::Index i = 0; i < N; ++i)
        reg_mask[static_cast<std::size_t>(i)] =
            avail[static_cast<std::size_t>(i)] && chars_lag_ok[static_cast<std::size_t>(i)];
      if (auto delta = cross_sectional_regress(chars_lag, excess_t, reg_mask))
        ewma_update(cm.payoff_ewma, *delta);
      // else: too few names this week, payoff EWMA freezes
    }

    // (4) forecasts for t+1 over the investible universe
    forecast.reset();
    const bool models_ready = fm.initialized && fm.premia.initialized && cm.payoff_ewma.initialized;
    std::vector<Eigen::Index> idx;
    if (models_ready) {
      std::vector<bool> valid(static_cast<std::size_t>(N), false);
      for (auto i : investible_universe(panel, t, hp.universe_size))
        if (chars_now_ok[static_cast<std::size_t>(i)]) {
          valid[static_cast<std::size_t>(i)] = true;
          idx.push_back(i);
        }
      if (!idx.empty()) {
        const Eigen::VectorXd macro_t =
            K > 0 ? Eigen::VectorXd(panel.macro.row(t).transpose()) : Eigen::VectorXd();
        ReturnForecast fc;
        fc.pi = forecast_systematic(fm, chars_now, macro_t, valid);
        fc.mu = forecast_characteristic(cm, chars_now, valid);
        fc.valid = valid;
        fc.t = t;
        cm.last_exposures.setZero();
        for (auto i : idx) {
          cm.last_exposures(i, 0) = 1.0;
          cm.last_exposures.row(i).tail(M) = chars_now.row(i);
        }
        forecast = std::move(fc);
      }
    }

    // (5)-(8) construct and store the rebalanced portfolio
    if (t < first_trade || t + 1 >= end) continue;
    const auto ns = static_cast<Eigen::Index>(idx.size());
    if (!forecast || ns == 0) {
      acct.warn("t=" + panel.dates[static_cast<std::size_t>(t)] +
                ": empty investible universe, holding previous positions");
      const Eigen::VectorXd w = hold_previous(panel, t, acct.previous_weights());
      Eigen::MatrixXd legs = Eigen::MatrixXd::Zero(N, 3);
      legs.col(0) = w;  // attribution collapses onto the benchmark leg
      acct.rebalance(t, w, legs);
      continue;
    }

    Eigen::VectorXd pi_s(ns), mu_s(ns), idio_s(ns);
    Eigen::MatrixXd B_s(ns, P);
    const bool diag_omega = unc.diagonal;
    Eigen::VectorXd opi_d, omu_d;
    Eigen::MatrixXd omega_pi_s, omega_mu_s;
    if (diag_omega) {
      opi_d.resize(ns);
      omu_d.resize(ns);
    } else {
      omega_pi_s.resize(ns, ns);
      omega_mu_s.resize(ns, ns);
    }
    const Eigen::VectorXd macro_t =
        K > 0 ? Eigen::VectorXd(panel.macro.row(t).transpose()) : Eigen::VectorXd();
    for (Eigen::Index a = 0; a < ns; ++a) {
      const auto ia = idx[static_cast<std::size_t>(a)];
      pi_s(a) = forecast->pi(ia);
      mu_s(a) = forecast->mu(ia);
      idio_s(a) = std::max(fm.idio_var(ia), 1e-10);
      B_s.row(a) = fm.conditional_betas(ia, chars_now.row(ia), macro_t).transpose();
      if (diag_omega) {
        opi_d(a) = unc.omega_pi.cov(ia, ia);
        omu_d(a) = unc.omega_mu.cov(ia, ia);
      } else {
        for (Eigen::Index b = 0; b < ns; ++b) {
          const auto ib = idx[static_cast<std::size_t>(b)];
          omega_pi_s(a, b) = unc.omega_pi.cov(ia, ib);
          omega_mu_s(a, b) = unc.omega_mu.cov(ia, ib);
        }
      }
    }

    try {
      const Eigen::MatrixXd sigma_cond = conditional_covariance(B_s, fm.factor_cov.cov, idio_s);
      // Same arithmetic as shrink_covariance, minus its PD probe:
      // sigma_cond is factor-PSD plus a positive diagonal by construction,
      // and the decomposition below factorizes (and rejects) anyway.
      const auto shrink_psd = [](const Eigen::MatrixXd& s, double kappa) {
        if (kappa < 0.0 || kappa > 1.0) throw DataError("shrink_covariance: kappa outside [0,1]");
        Eigen::MatrixXd out = (1.0 - kappa) * s;
        out.diagonal().array() += kappa * s.diagonal().mean();
        return Eigen::MatrixXd(0.5 * (out + out.transpose()));
      };
      Eigen::VectorXd alpha_bl;
      Eigen::MatrixXd sigma_strategic = shrink_psd(sigma_cond, hp.kappa_s);
      Eigen::MatrixXd sigma_active = shrink_psd(sigma_cond, hp.kappa_a);
      if (diag_omega) {
        // Elementwise counterpart of mixed_estimate / mixed_uncertainty:
        // with diagonal omegas, psi = o_pi / (o_pi + o_mu) per asset.
        constexpr double kBlendRidge = 1e-10;  // mixed_estimate's default
        const Eigen::ArrayXd denom = opi_d.array() + omu_d.array() + 2.0 * kBlendRidge;
        if (!(denom > 0.0).all())
          throw NumericError("mixed_estimate: uncertainty not positive");
        alpha_bl = (opi_d.array() / denom * (mu_s - pi_s).array()).matrix();
        sigma_strategic.diagonal() += opi_d;
        sigma_active.diagonal() += (opi_d.array() * omu_d.array() / denom).matrix();
      } else {
        const auto blend = mixed_estimate(pi_s, mu_s, omega_pi_s, omega_mu_s);
        alpha_bl = blend.alpha_bl;
        sigma_strategic = adjust_for_uncertainty(sigma_strategic, omega_pi_s);
        sigma_active = adjust_for_uncertainty(sigma_active,
                                              mixed_uncertainty(omega_pi_s, omega_mu_s));
      }

      auto decomp = decompose(pi_s, alpha_bl, sigma_strategic, sigma_active,
                              hp.gamma_s, hp.gamma_a);
      Eigen::VectorXd warm(ns);
      for (Eigen::Index a = 0; a < ns; ++a) warm(a) = acct.previous_weights()(idx[static_cast<std::size_t>(a)]);
      // decomp.total is exactly the budget-only optimum of this program,
      // so hand it over instead of having the solver refactorize sigma.
      const Eigen::VectorXd w_s = constrained_mv(
          hp.gamma_s * (sigma_strategic * decomp.total), sigma_strategic, hp.gamma_s,
          constraints, warm, &decomp.total);
      // Constraint adjustment is attributed to the active leg.
      const Eigen::VectorXd act_adj = decomp.active + (w_s - decomp.total);

      Eigen::VectorXd w = Eigen::VectorXd::Zero(N);
      Eigen::MatrixXd legs = Eigen::MatrixXd::Zero(N, 3);
      for (Eigen::Index a = 0; a < ns; ++a) {
        const auto ia = idx[static_cast<std::size_t>(a)];
        w(ia) = w_s(a);
        legs(ia, 0) = decomp.gmv(a);
        legs(ia, 1) = decomp.systematic(a);
        legs(ia, 2) = act_adj(a);
      }
      acct.rebalance(t, w, legs);
    } catch (const NumericError& e) {
      acct.warn("t=" + panel.dates[static_cast<std::size_t>(t)] + ": " + e.what() +
                "; holding previous positions");
      const Eigen::VectorXd w = hold_previous(panel, t, acct.previous_weights());
      Eigen::MatrixXd legs = Eigen::MatrixXd::Zero(N, 3);
      legs.col(0) = w;
      acct.rebalance(t, w, legs);
    }
  }

  auto result = acct.take();
  result.config_digest = hp.digest();
  return result;
}

BacktestResult run_benchmark(const AssetPanel& panel, BenchmarkKind kind,
                             const HyperParams& hp, Eigen::Index start, Eigen::Index end) {
  check_range(panel, hp, start, end);
  const auto N = panel.assets();
  const auto first_trade = start + hp.burn_in;
  const auto mv_idx = panel.char_index(chars::kMV);

  Accounting acct(panel, first_trade, end);
  for (Eigen::Index t = start; t < end; ++t) {
    acct.realize(t);
    if (t < first_trade || t + 1 >= end) continue;

    Eigen::VectorXd w = Eigen::VectorXd::Zero(N);
    if (kind != BenchmarkKind::kRiskFree) {
      const auto idx = investible_universe(panel, t, hp.universe_size);
      if (idx.empty()) {
        acct.warn("t=" + panel.dates[static_cast<std::size_t>(t)] +
                  ": empty investible universe, holding previous positions");
        w = hold_previous(panel, t, acct.previous_weights());
      } else if (kind == BenchmarkKind::kNaiveDiversification) {
        for (auto i : idx) w(i) = 1.0 / static_cast<double>(idx.size());
      } else {
        double total = 0.0;
        for (auto i : idx) total += panel.char_at(mv_idx, t, i);
        for (auto i : idx) w(i) = panel.char_at(mv_idx, t, i) / total;
      }
    }
    Eigen::MatrixXd legs = Eigen::MatrixXd::Zero(N, 3);
    legs.col(0) = w;
    acct.rebalance(t, w, legs);
  }

  auto result = acct.take();
  result.config_digest = hp.digest();
  return result;
}

double sharpe_ratio(const Eigen::VectorXd& excess_returns) {
  const auto n = excess_returns.size();
  if (n < 2) throw NumericError("sharpe_ratio: need at least 2 observations");
  const double mean = excess_returns.mean();
  const double var =
      (excess_returns.array() - mean).square().sum() / static_cast<double>(n - 1);
  if (var <= 0.0) throw NumericError("sharpe_ratio: zero variance, SR undefined");
  return mean / std::sqrt(var);
}

PerformanceStats performance_stats(const BacktestResult& result) {
  PerformanceStats s;
  const auto& r = result.period_returns;
  s.mean_turnover = result.turnover.size() ? result.turnover.mean() : 0.0;
  const double mean = r.mean();
  const double sd = std::sqrt((r.array() - mean).square().sum() / static_cast<double>(r.size() - 1));
  // A flat series (e.g. the risk-free reference) has no defined SR; report 0.
  s.sharpe = sd > 0.0 ? mean / sd : 0.0;
  s.ann_return = mean * 52.0;
  s.ann_vol = sd * std::sqrt(52.0);
  double peak = result.equity_curve(0);
  for (Eigen::Index k = 0; k < result.equity_curve.size(); ++k) {
    peak = std::max(peak, result.equity_curve(k));
    s.max_drawdown = std::max(s.max_drawdown, 1.0 - result.equity_curve(k) / peak);
  }
  return s;
}

}  // namespace apm

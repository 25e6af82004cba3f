#include "apm/pricing.hpp"

#include <cmath>

namespace apm {

FactorModelState::FactorModelState(Eigen::Index n_assets, Eigen::Index n_factors,
                                   Eigen::Index n_chars, Eigen::Index n_macro,
                                   const PricingConfig& config)
    : idio_var(Eigen::VectorXd::Zero(n_assets)),
      premia(n_factors, config.lambda_s),
      factor_cov(n_factors, config.lambda_s, config.cov_ridge),
      cfg(config),
      n_factors_(n_factors),
      n_chars_(n_chars),
      n_macro_(n_macro) {
  loadings.reserve(static_cast<std::size_t>(n_assets));
  for (Eigen::Index i = 0; i < n_assets; ++i)
    loadings.emplace_back(feature_dim(), cfg.rlma_step, cfg.rlma_huber_c);
}

Eigen::Index FactorModelState::feature_dim() const {
  Eigen::Index d = 1 + n_factors_;
  if (cfg.char_interactions) d += n_factors_ * n_chars_;
  if (cfg.macro_interactions) d += n_factors_ * n_macro_;
  return d;
}

Eigen::VectorXd FactorModelState::assemble_features(
    const Eigen::VectorXd& factor_returns, const Eigen::VectorXd& asset_chars,
    const Eigen::VectorXd& macro) const {
  Eigen::VectorXd phi(feature_dim());
  phi(0) = 1.0;
  phi.segment(1, n_factors_) = factor_returns;
  Eigen::Index k = 1 + n_factors_;
  if (cfg.char_interactions)
    for (Eigen::Index p = 0; p < n_factors_; ++p)
      for (Eigen::Index m = 0; m < n_chars_; ++m) phi(k++) = factor_returns(p) * asset_chars(m);
  if (cfg.macro_interactions)
    for (Eigen::Index p = 0; p < n_factors_; ++p)
      for (Eigen::Index j = 0; j < n_macro_; ++j) phi(k++) = factor_returns(p) * macro(j);
  return phi;
}

Eigen::VectorXd FactorModelState::conditional_betas(Eigen::Index asset,
                                                    const Eigen::VectorXd& asset_chars,
                                                    const Eigen::VectorXd& macro) const {
  const auto& coef = loadings[static_cast<std::size_t>(asset)].coef;
  Eigen::VectorXd beta = coef.segment(1, n_factors_);
  Eigen::Index k = 1 + n_factors_;
  if (cfg.char_interactions)
    for (Eigen::Index p = 0; p < n_factors_; ++p)
      for (Eigen::Index m = 0; m < n_chars_; ++m) beta(p) += coef(k++) * asset_chars(m);
  if (cfg.macro_interactions)
    for (Eigen::Index p = 0; p < n_factors_; ++p)
      for (Eigen::Index j = 0; j < n_macro_; ++j) beta(p) += coef(k++) * macro(j);
  return beta;
}

Eigen::MatrixXd FactorModelState::beta_matrix(const Eigen::MatrixXd& chars,
                                              const Eigen::VectorXd& macro) const {
  Eigen::MatrixXd B(assets(), n_factors_);
  for (Eigen::Index i = 0; i < assets(); ++i)
    B.row(i) = conditional_betas(i, chars.row(i), macro).transpose();
  return B;
}

void update_factor_model(FactorModelState& state,
                         const Eigen::VectorXd& factor_returns_t,
                         const Eigen::VectorXd& excess_returns_t,
                         const Eigen::VectorXd& macro_t,
                         const Eigen::MatrixXd& chars_t,
                         const std::vector<bool>& mask) {
  if (!factor_returns_t.allFinite()) throw NumericError("update_factor_model: factor returns not finite");
  if (static_cast<Eigen::Index>(mask.size()) != state.assets())
    throw DataError("update_factor_model: mask size mismatch");
  const double lam = state.cfg.lambda_s;
  for (Eigen::Index i = 0; i < state.assets(); ++i) {
    if (!mask[static_cast<std::size_t>(i)]) continue;  // frozen while unavailable
    const Eigen::VectorXd phi =
        state.assemble_features(factor_returns_t, chars_t.row(i), macro_t);
    const double resid =
        rlma_update(state.loadings[static_cast<std::size_t>(i)], phi, excess_returns_t(i));
    state.idio_var(i) = lam * state.idio_var(i) + (1.0 - lam) * resid * resid;
  }
  ewma_update(state.premia, factor_returns_t);
  ewma_cov_update(state.factor_cov, factor_returns_t);
  state.initialized = true;
}

Eigen::VectorXd forecast_systematic(const FactorModelState& state,
                                    const Eigen::MatrixXd& chars_t,
                                    const Eigen::VectorXd& macro_t,
                                    const std::vector<bool>& mask) {
  if (!state.initialized || !state.premia.initialized)
    throw NumericError("forecast_systematic: model not initialized");
  Eigen::VectorXd pi = Eigen::VectorXd::Zero(state.assets());
  for (Eigen::Index i = 0; i < state.assets(); ++i) {
    if (!mask[static_cast<std::size_t>(i)]) continue;
    pi(i) = state.conditional_betas(i, chars_t.row(i), macro_t).dot(state.premia.mean);
  }
  return pi;
}

Eigen::VectorXd forecast_characteristic(const CharModelState& state,
                                        const Eigen::MatrixXd& chars_t,
                                        const std::vector<bool>& mask) {
  if (!state.payoff_ewma.initialized)
    throw NumericError("forecast_characteristic: payoffs not initialized");
  const auto N = chars_t.rows();
  Eigen::VectorXd mu = Eigen::VectorXd::Zero(N);
  const auto& payoff = state.payoff_ewma.mean;
  for (Eigen::Index i = 0; i < N; ++i) {
    if (!mask[static_cast<std::size_t>(i)]) continue;
    mu(i) = payoff(0) + chars_t.row(i).dot(payoff.tail(payoff.size() - 1));
  }
  return mu;
}

ForecastErrors record_forecast_errors(const ReturnForecast& forecast,
                                      const Eigen::VectorXd& realized,
                                      const std::vector<bool>& mask,
                                      Eigen::Index realized_t) {
  if (realized_t != forecast.t + 1)
    throw DataError("record_forecast_errors: realized period " + std::to_string(realized_t) +
                    " does not follow forecast period " + std::to_string(forecast.t));
  const auto N = realized.size();
  ForecastErrors out;
  out.e_pi = Eigen::VectorXd::Zero(N);
  out.e_mu = Eigen::VectorXd::Zero(N);
  out.valid.assign(static_cast<std::size_t>(N), false);
  for (Eigen::Index i = 0; i < N; ++i) {
    if (!mask[static_cast<std::size_t>(i)] || !forecast.valid[static_cast<std::size_t>(i)])
      continue;
    out.e_pi(i) = realized(i) - forecast.pi(i);
    out.e_mu(i) = realized(i) - forecast.mu(i);
    out.valid[static_cast<std::size_t>(i)] = true;
  }
  return out;
}

}  // namespace apm

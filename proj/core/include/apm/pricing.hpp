#pragma once

#include <Eigen/Dense>
#include <vector>

#include "apm/filters.hpp"

namespace apm {

struct PricingConfig {
  double lambda_s = 0.99;  // strategic memory: premia, factor cov, idio var
  double lambda_a = 0.95;  // active memory: characteristic payoffs
  double rlma_step = 0.05;
  double rlma_huber_c = 2.0;
  double cov_ridge = 1e-6;
  // Interaction features f (x) theta and f (x) z; off by default to keep
  // the model identifiable at universe scale.
  bool char_interactions = false;
  bool macro_interactions = false;
};

/// Per-asset time-varying loadings plus the factor moment estimates.
/// Each asset's RLMA coefficient vector is [a, b per factor, optional
/// interaction terms]; rows freeze while the asset is unavailable.
struct FactorModelState {
  FactorModelState() = default;
  FactorModelState(Eigen::Index n_assets, Eigen::Index n_factors,
                   Eigen::Index n_chars, Eigen::Index n_macro,
                   const PricingConfig& cfg);

  Eigen::Index assets() const { return static_cast<Eigen::Index>(loadings.size()); }
  Eigen::Index factors() const { return n_factors_; }
  Eigen::Index feature_dim() const;

  /// RLMA regressor for one asset: [1, f, f(x)theta, f(x)z].
  Eigen::VectorXd assemble_features(const Eigen::VectorXd& factor_returns,
                                    const Eigen::VectorXd& asset_chars,
                                    const Eigen::VectorXd& macro) const;

  /// Current conditional beta row for one asset given its information set.
  Eigen::VectorXd conditional_betas(Eigen::Index asset,
                                    const Eigen::VectorXd& asset_chars,
                                    const Eigen::VectorXd& macro) const;

  /// N x P matrix of current conditional loadings.
  Eigen::MatrixXd beta_matrix(const Eigen::MatrixXd& chars,
                              const Eigen::VectorXd& macro) const;

  std::vector<RlmaState> loadings;  // one per asset
  Eigen::VectorXd idio_var;         // EWMA of squared residuals, per asset
  EwmaMeanState premia;             // Ewma of factor returns
  EwmaCovState factor_cov;
  PricingConfig cfg;
  bool initialized = false;

 private:
  Eigen::Index n_factors_ = 0;
  Eigen::Index n_chars_ = 0;
  Eigen::Index n_macro_ = 0;
};

/// Cross-sectional characteristic model: EWMA-smoothed payoffs applied to
/// the latest exposure snapshot.
struct CharModelState {
  CharModelState() = default;
  CharModelState(Eigen::Index n_assets, Eigen::Index n_chars, double lambda_a)
      : payoff_ewma(n_chars + 1, lambda_a),
        last_exposures(Eigen::MatrixXd::Zero(n_assets, n_chars + 1)) {}

  EwmaMeanState payoff_ewma;       // [intercept, M payoffs]
  Eigen::MatrixXd last_exposures;  // N x (M+1) design snapshot
};

/// Forecasts issued at period t for period t+1. pi is the systematic
/// (factor-premia) leg, mu the characteristic-model leg; alpha = mu - pi
/// is always assembled, never stored.
struct ReturnForecast {
  Eigen::VectorXd pi;
  Eigen::VectorXd mu;
  std::vector<bool> valid;
  Eigen::Index t = -1;

  Eigen::VectorXd alpha() const { return mu - pi; }
};

struct ForecastErrors {
  Eigen::VectorXd e_pi;
  Eigen::VectorXd e_mu;
  std::vector<bool> valid;  // false entries are zeroed and must be skipped
};

/// One period of factor-model adaptation: per unmasked asset an RLMA step
/// on [1, f, ...] vs realized excess return, idio-variance EWMA on the
/// squared residual, premia and factor covariance EWMA on f.
void update_factor_model(FactorModelState& state,
                         const Eigen::VectorXd& factor_returns_t,
                         const Eigen::VectorXd& excess_returns_t,
                         const Eigen::VectorXd& macro_t,
                         const Eigen::MatrixXd& chars_t,
                         const std::vector<bool>& mask);

/// pi_i = beta_i . E[f]; the asset-level intercepts are routed to the
/// active side, not added here.
Eigen::VectorXd forecast_systematic(const FactorModelState& state,
                                    const Eigen::MatrixXd& chars_t,
                                    const Eigen::VectorXd& macro_t,
                                    const std::vector<bool>& mask);

/// mu_i = [1, theta_i] . smoothed payoffs.
Eigen::VectorXd forecast_characteristic(const CharModelState& state,
                                        const Eigen::MatrixXd& chars_t,
                                        const std::vector<bool>& mask);

/// e = realized - forecast on assets valid in both the forecast and the
/// realization mask. realized_t must be forecast.t + 1 (look-ahead guard).
ForecastErrors record_forecast_errors(const ReturnForecast& forecast,
                                      const Eigen::VectorXd& realized,
                                      const std::vector<bool>& mask,
                                      Eigen::Index realized_t);

}  // namespace apm

#pragma once

#include <Eigen/Dense>
#include <vector>

#include "apm/filters.hpp"
#include "apm/pricing.hpp"

namespace apm {

/// EWMA covariances of the two realized forecast-error streams. Kept
/// diagonal by default: full error covariances from short EWMA windows
/// are rank-deficient at universe scale.
struct UncertaintyState {
  UncertaintyState() = default;
  UncertaintyState(Eigen::Index n_assets, double lambda, bool diagonal_ = true,
                   double ridge = 1e-6)
      : omega_pi(n_assets, lambda, ridge),
        omega_mu(n_assets, lambda, ridge),
        diagonal(diagonal_) {}

  EwmaCovState omega_pi;
  EwmaCovState omega_mu;
  bool diagonal = true;
};

/// The covariance stack of one rebalance: conditional, shrinkage target,
/// and the uncertainty-adjusted strategic/active matrices.
struct CovarianceStack {
  Eigen::MatrixXd sigma_cond;
  Eigen::MatrixXd sigma_target;
  Eigen::MatrixXd sigma_strategic;
  Eigen::MatrixXd sigma_active;
  double kappa_s = 0.0;
  double kappa_a = 0.0;
};

struct BlendedForecast {
  Eigen::VectorXd mu_bl;
  Eigen::MatrixXd psi;
  Eigen::VectorXd alpha_bl;  // psi * (mu - pi); mu_bl = pi + alpha_bl
};

/// Feed one period of forecast errors into the uncertainty estimates;
/// rows/columns of flagged-off assets stay frozen.
void update_uncertainty(UncertaintyState& state, const ForecastErrors& errors);

/// Precision-weighted blend:
///   mu_bl = [O_pi^-1 + O_mu^-1]^-1 [O_pi^-1 pi + O_mu^-1 mu]
/// with Psi = [O_pi^-1 + O_mu^-1]^-1 O_mu^-1 so mu_bl = pi + Psi (mu-pi).
/// Inversions are symmetric solves on ridged matrices.
BlendedForecast mixed_estimate(const Eigen::VectorXd& pi, const Eigen::VectorXd& mu,
                               const Eigen::MatrixXd& omega_pi,
                               const Eigen::MatrixXd& omega_mu,
                               double ridge = 1e-10);

/// Sigma = B Sigma_f B' + diag(sigma_eps).
Eigen::MatrixXd conditional_covariance(const Eigen::MatrixXd& B,
                                       const Eigen::MatrixXd& sigma_f,
                                       const Eigen::VectorXd& sigma_eps_diag);

/// kappa * mean(diag)*I + (1-kappa) * sigma, floored so the smallest
/// eigenvalue is at least 1e-8 * trace / N.
Eigen::MatrixXd shrink_covariance(const Eigen::MatrixXd& sigma, double kappa);

/// Sigma + Omega (marginal covariance under expected-return uncertainty).
Eigen::MatrixXd adjust_for_uncertainty(const Eigen::MatrixXd& sigma,
                                       const Eigen::MatrixXd& omega);

/// Mixed-estimate uncertainty [O_pi^-1 + O_mu^-1]^-1, used to adjust the
/// active-side covariance.
Eigen::MatrixXd mixed_uncertainty(const Eigen::MatrixXd& omega_pi,
                                  const Eigen::MatrixXd& omega_mu,
                                  double ridge = 1e-10);

}  // namespace apm

#pragma once

#include <Eigen/Dense>
#include <optional>

#include "apm/errors.hpp"

namespace apm {

/// Exponentially weighted mean: mean' = lambda*mean + (1-lambda)*x.
/// The first observation seeds the mean directly.
struct EwmaMeanState {
  Eigen::VectorXd mean;
  double lambda = 0.9;
  bool initialized = false;

  explicit EwmaMeanState(Eigen::Index dim = 0, double lambda_ = 0.9)
      : mean(Eigen::VectorXd::Zero(dim)), lambda(lambda_) {}
};

/// Exponentially weighted mean + covariance. Covariance seeds at ridge*I
/// so early uses stay invertible.
struct EwmaCovState {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
  double lambda = 0.9;
  double ridge = 1e-6;
  bool initialized = false;

  explicit EwmaCovState(Eigen::Index dim = 0, double lambda_ = 0.9, double ridge_ = 1e-6)
      : mean(Eigen::VectorXd::Zero(dim)),
        cov(Eigen::MatrixXd::Zero(dim, dim)),
        lambda(lambda_),
        ridge(ridge_) {}
};

/// Exponentially weighted recursive least squares. precision_proxy is the
/// standard inverse-Gram recursion matrix P, seeded at (1/ridge)*I.
struct RlsState {
  Eigen::VectorXd coef;
  Eigen::MatrixXd precision_proxy;
  double lambda = 0.99;
  double ridge = 1e-4;

  explicit RlsState(Eigen::Index dim = 0, double lambda_ = 0.99, double ridge_ = 1e-4)
      : coef(Eigen::VectorXd::Zero(dim)),
        precision_proxy(Eigen::MatrixXd::Identity(dim, dim) / ridge_),
        lambda(lambda_),
        ridge(ridge_) {}
};

/// Robust least-M adaptive filter: normalized gradient step with the
/// residual influence clipped at huber_c times an EWMA residual scale.
struct RlmaState {
  Eigen::VectorXd coef;
  double step = 0.05;
  double huber_c = 2.0;
  double resid_scale = 0.0;
  double scale_lambda = 0.95;
  bool initialized = false;

  explicit RlmaState(Eigen::Index dim = 0, double step_ = 0.05, double huber_c_ = 2.0)
      : coef(Eigen::VectorXd::Zero(dim)), step(step_), huber_c(huber_c_) {}
};

void ewma_update(EwmaMeanState& state, const Eigen::VectorXd& x);
void ewma_cov_update(EwmaCovState& state, const Eigen::VectorXd& x);

/// As ewma_cov_update but rows/columns of masked entries stay frozen;
/// only the unmasked principal submatrix moves.
void ewma_cov_update_masked(EwmaCovState& state, const Eigen::VectorXd& x,
                            const std::vector<Eigen::Index>& active);

/// Returns the pre-update innovation (target - phi.coef).
double rls_update(RlsState& state, const Eigen::VectorXd& features, double target);
double rlma_update(RlmaState& state, const Eigen::VectorXd& features, double target);

/// Cross-sectional least squares of targets on [1, characteristics] over
/// unmasked rows; minimum-norm solution when rank-deficient. Returns
/// nullopt when fewer than M+2 rows survive the mask (caller freezes its
/// payoff EWMA).
std::optional<Eigen::VectorXd> cross_sectional_regress(
    const Eigen::MatrixXd& characteristics, const Eigen::VectorXd& targets,
    const std::vector<bool>& mask);

}  // namespace apm

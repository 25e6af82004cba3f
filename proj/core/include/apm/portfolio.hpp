#pragma once

#include <Eigen/Dense>
#include <optional>

#include "apm/errors.hpp"

namespace apm {

/// GMV / systematic / active split of one rebalance. total is the traded
/// portfolio; the legs are attributions and sum to it exactly.
struct PortfolioDecomposition {
  Eigen::VectorXd gmv;
  Eigen::VectorXd systematic;  // sums to 0
  Eigen::VectorXd active;      // sums to 0
  Eigen::VectorXd total;
  double gamma_s = 1.0;
  double gamma_a = 1.0;
};

/// Budget is fixed at 1; leverage bounds sum(|w|); optional per-asset box.
struct ConstraintSet {
  double max_leverage = 2.0;
  std::optional<Eigen::VectorXd> lower;
  std::optional<Eigen::VectorXd> upper;

  /// Throws DataError when the feasible region is empty for n assets.
  void validate(Eigen::Index n) const;
};

struct KktReport {
  double stationarity = 0.0;
  double primal_feasibility = 0.0;
  double complementarity = 0.0;
};

/// w = Sigma^-1 1 / (1' Sigma^-1 1).
Eigen::VectorXd gmv_weights(const Eigen::MatrixXd& sigma);

/// Closed-form budget-constrained mean-variance optimum:
/// w = gmv + (1/gamma) Sigma^-1 (mu - 1 (1'Sigma^-1 mu)/(1'Sigma^-1 1)).
Eigen::VectorXd mv_closed_form(const Eigen::VectorXd& mu, const Eigen::MatrixXd& sigma,
                               double gamma);

/// Benchmark/active decomposition with separate covariances and risk
/// tolerances. Each leg reacts only to its own inputs.
PortfolioDecomposition decompose(const Eigen::VectorXd& pi, const Eigen::VectorXd& alpha_bl,
                                 const Eigen::MatrixXd& sigma_strategic,
                                 const Eigen::MatrixXd& sigma_active,
                                 double gamma_s, double gamma_a);

/// max mu'w - gamma/2 w'Sigma w  s.t.  1'w = 1, sum|w| <= L, box.
/// Projected-gradient iteration with an exact active-set polish;
/// deterministic given the warm start. A caller that already holds the
/// budget-only optimum (mv_closed_form of the same problem) may pass it
/// as closed_form_hint to skip refactorizing sigma.
Eigen::VectorXd constrained_mv(const Eigen::VectorXd& mu, const Eigen::MatrixXd& sigma,
                               double gamma, const ConstraintSet& constraints,
                               const Eigen::VectorXd& warm_start,
                               const Eigen::VectorXd* closed_form_hint = nullptr);

/// KKT residuals of a candidate solution (multipliers fit by least squares).
KktReport kkt_check(const Eigen::VectorXd& w, const Eigen::VectorXd& mu,
                    const Eigen::MatrixXd& sigma, double gamma,
                    const ConstraintSet& constraints);

/// Euclidean projection onto the constraint polytope (Dykstra).
Eigen::VectorXd project_onto_constraints(const Eigen::VectorXd& w,
                                         const ConstraintSet& constraints);

}  // namespace apm

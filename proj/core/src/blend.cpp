#include "apm/blend.hpp"

#include <cmath>

namespace apm {
namespace {

std::vector<Eigen::Index> active_indices(const std::vector<bool>& valid) {
  std::vector<Eigen::Index> idx;
  for (std::size_t i = 0; i < valid.size(); ++i)
    if (valid[i]) idx.push_back(static_cast<Eigen::Index>(i));
  return idx;
}

void diagonal_ewma_update(EwmaCovState& state, const Eigen::VectorXd& x,
                          const std::vector<Eigen::Index>& active) {
  if (active.empty()) return;
  if (!state.initialized) {
    state.mean.setZero();
    state.cov = state.ridge * Eigen::MatrixXd::Identity(state.mean.size(), state.mean.size());
    for (auto i : active) state.mean(i) = x(i);
    state.initialized = true;
    return;
  }
  for (auto i : active) {
    state.mean(i) = state.lambda * state.mean(i) + (1.0 - state.lambda) * x(i);
    const double d = x(i) - state.mean(i);
    state.cov(i, i) = state.lambda * state.cov(i, i) + (1.0 - state.lambda) * d * d;
  }
}

Eigen::LLT<Eigen::MatrixXd> ridged_llt(const Eigen::MatrixXd& m, double ridge,
                                       const char* who) {
  Eigen::MatrixXd r = m;
  r.diagonal().array() += ridge;
  Eigen::LLT<Eigen::MatrixXd> llt(r);
  if (llt.info() != Eigen::Success) {
    const double diag_max = r.diagonal().maxCoeff();
    const double diag_min = r.diagonal().minCoeff();
    throw NumericError(std::string(who) + ": matrix not PD after ridging (diag range [" +
                       std::to_string(diag_min) + ", " + std::to_string(diag_max) + "])");
  }
  return llt;
}

}  // namespace

void update_uncertainty(UncertaintyState& state, const ForecastErrors& errors) {
  const auto active = active_indices(errors.valid);
  if (state.diagonal) {
    diagonal_ewma_update(state.omega_pi, errors.e_pi, active);
    diagonal_ewma_update(state.omega_mu, errors.e_mu, active);
  } else {
    ewma_cov_update_masked(state.omega_pi, errors.e_pi, active);
    ewma_cov_update_masked(state.omega_mu, errors.e_mu, active);
  }
}

BlendedForecast mixed_estimate(const Eigen::VectorXd& pi, const Eigen::VectorXd& mu,
                               const Eigen::MatrixXd& omega_pi,
                               const Eigen::MatrixXd& omega_mu, double ridge) {
  const auto N = pi.size();
  if (mu.size() != N || omega_pi.rows() != N || omega_mu.rows() != N)
    throw DataError("mixed_estimate: dimension mismatch");
  // (O_pi^-1 + O_mu^-1)^-1 O_mu^-1 = O_pi (O_pi + O_mu)^-1: one
  // factorization of the (always better-conditioned) sum instead of
  // inverting both uncertainty matrices separately.
  auto llt_sum = ridged_llt(omega_pi + omega_mu, 2.0 * ridge, "mixed_estimate(omega sum)");

  BlendedForecast out;
  out.psi = llt_sum.solve(omega_pi).transpose();
  out.alpha_bl = out.psi * (mu - pi);
  out.mu_bl = pi + out.alpha_bl;
  if (!out.mu_bl.allFinite())
    throw NumericError("mixed_estimate: non-finite blend (combined precision ill-conditioned)");
  return out;
}

Eigen::MatrixXd conditional_covariance(const Eigen::MatrixXd& B,
                                       const Eigen::MatrixXd& sigma_f,
                                       const Eigen::VectorXd& sigma_eps_diag) {
  if (B.cols() != sigma_f.rows() || sigma_f.rows() != sigma_f.cols() ||
      B.rows() != sigma_eps_diag.size())
    throw DataError("conditional_covariance: dimension mismatch");
  Eigen::MatrixXd sigma = B * sigma_f * B.transpose();
  sigma.diagonal() += sigma_eps_diag;
  return 0.5 * (sigma + sigma.transpose());
}

Eigen::MatrixXd shrink_covariance(const Eigen::MatrixXd& sigma, double kappa) {
  if (kappa < 0.0 || kappa > 1.0) throw DataError("shrink_covariance: kappa outside [0,1]");
  const auto N = sigma.rows();
  const double avg_var = sigma.diagonal().mean();
  Eigen::MatrixXd out = (1.0 - kappa) * sigma;
  out.diagonal().array() += kappa * avg_var;
  out = 0.5 * (out + out.transpose()).eval();

  const double floor = 1e-8 * out.trace() / static_cast<double>(N);
  Eigen::MatrixXd shifted = out;
  shifted.diagonal().array() -= floor;
  if (Eigen::LLT<Eigen::MatrixXd>(shifted).info() == Eigen::Success) return out;
  // Fallback: exact smallest eigenvalue, then shift up to the floor.
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(out, Eigen::EigenvaluesOnly);
  const double lam_min = es.eigenvalues().minCoeff();
  if (lam_min < floor) out.diagonal().array() += floor - lam_min;
  return out;
}

Eigen::MatrixXd adjust_for_uncertainty(const Eigen::MatrixXd& sigma,
                                       const Eigen::MatrixXd& omega) {
  if (sigma.rows() != omega.rows() || sigma.cols() != omega.cols())
    throw DataError("adjust_for_uncertainty: dimension mismatch");
  return 0.5 * ((sigma + omega) + (sigma + omega).transpose());
}

Eigen::MatrixXd mixed_uncertainty(const Eigen::MatrixXd& omega_pi,
                                  const Eigen::MatrixXd& omega_mu, double ridge) {
  // Same parallel-sum identity as mixed_estimate:
  // (O_pi^-1 + O_mu^-1)^-1 = O_pi (O_pi + O_mu)^-1 O_mu.
  auto llt_sum = ridged_llt(omega_pi + omega_mu, 2.0 * ridge, "mixed_uncertainty(omega sum)");
  Eigen::MatrixXd out = omega_pi * llt_sum.solve(omega_mu);
  return 0.5 * (out + out.transpose()).eval();
}

}  // namespace apm

#include "apm/filters.hpp"

#include <algorithm>
#include <cmath>

namespace apm {
namespace {

void require_finite(const Eigen::VectorXd& x, const char* who) {
  if (!x.allFinite()) throw NumericError(std::string(who) + ": non-finite input");
}

}  // namespace

void ewma_update(EwmaMeanState& state, const Eigen::VectorXd& x) {
  require_finite(x, "ewma_update");
  if (!state.initialized) {
    state.mean = x;
    state.initialized = true;
    return;
  }
  state.mean = state.lambda * state.mean + (1.0 - state.lambda) * x;
}

void ewma_cov_update(EwmaCovState& state, const Eigen::VectorXd& x) {
  require_finite(x, "ewma_cov_update");
  if (!state.initialized) {
    state.mean = x;
    state.cov = state.ridge * Eigen::MatrixXd::Identity(x.size(), x.size());
    state.initialized = true;
    return;
  }
  state.mean = state.lambda * state.mean + (1.0 - state.lambda) * x;
  const Eigen::VectorXd d = x - state.mean;
  state.cov = state.lambda * state.cov + (1.0 - state.lambda) * (d * d.transpose());
  state.cov = 0.5 * (state.cov + state.cov.transpose()).eval();
}

void ewma_cov_update_masked(EwmaCovState& state, const Eigen::VectorXd& x,
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
    if (!std::isfinite(x(i))) throw NumericError("ewma_cov_update_masked: non-finite input");
    state.mean(i) = state.lambda * state.mean(i) + (1.0 - state.lambda) * x(i);
  }
  for (auto i : active) {
    const double di = x(i) - state.mean(i);
    for (auto j : active) {
      const double dj = x(j) - state.mean(j);
      state.cov(i, j) = state.lambda * state.cov(i, j) + (1.0 - state.lambda) * di * dj;
    }
  }
}

double rls_update(RlsState& state, const Eigen::VectorXd& features, double target) {
  require_finite(features, "rls_update");
  if (!std::isfinite(target)) throw NumericError("rls_update: non-finite target");
  auto& P = state.precision_proxy;
  const Eigen::VectorXd Pphi = P * features;
  const double denom = state.lambda + features.dot(Pphi);
  if (denom <= 0.0) throw NumericError("rls_update: corrupted state, lambda + phi'P phi <= 0");
  const double innovation = target - features.dot(state.coef);
  const Eigen::VectorXd gain = Pphi / denom;
  state.coef += gain * innovation;
  P = (P - gain * Pphi.transpose()) / state.lambda;
  P = 0.5 * (P + P.transpose()).eval();
  return innovation;
}

double rlma_update(RlmaState& state, const Eigen::VectorXd& features, double target) {
  require_finite(features, "rlma_update");
  if (!std::isfinite(target)) throw NumericError("rlma_update: non-finite target");
  const double e = target - features.dot(state.coef);
  if (!state.initialized) {
    state.resid_scale = std::max(std::abs(e), 1e-12);
    state.initialized = true;
  }
  const double bound = state.huber_c * state.resid_scale;
  const double psi = std::clamp(e, -bound, bound);
  constexpr double kEps = 1e-12;
  state.coef += state.step * psi * features / (kEps + features.squaredNorm());
  state.resid_scale = std::max(
      state.scale_lambda * state.resid_scale + (1.0 - state.scale_lambda) * std::abs(e), 1e-12);
  return e;
}

std::optional<Eigen::VectorXd> cross_sectional_regress(
    const Eigen::MatrixXd& characteristics, const Eigen::VectorXd& targets,
    const std::vector<bool>& mask) {
  const auto N = characteristics.rows();
  const auto M = characteristics.cols();
  if (targets.size() != N || static_cast<Eigen::Index>(mask.size()) != N)
    throw DataError("cross_sectional_regress: dimension mismatch");
  Eigen::Index n = 0;
  for (bool b : mask) n += b ? 1 : 0;
  if (n < M + 2) return std::nullopt;

  Eigen::MatrixXd X(n, M + 1);
  Eigen::VectorXd y(n);
  Eigen::Index r = 0;
  for (Eigen::Index i = 0; i < N; ++i) {
    if (!mask[static_cast<std::size_t>(i)]) continue;
    X(r, 0) = 1.0;
    X.block(r, 1, 1, M) = characteristics.row(i);
    y(r) = targets(i);
    ++r;
  }
  if (!X.allFinite() || !y.allFinite())
    throw NumericError("cross_sectional_regress: non-finite unmasked data");
  // Complete orthogonal decomposition gives the minimum-norm solution for
  // rank-deficient designs.
  Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(X);
  return cod.solve(y).eval();
}

}  // namespace apm

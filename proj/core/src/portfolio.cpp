#include "apm/portfolio.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace apm {
namespace {

Eigen::LLT<Eigen::MatrixXd> factor_pd(const Eigen::MatrixXd& sigma, const char* who) {
  if (sigma.rows() != sigma.cols()) throw DataError(std::string(who) + ": sigma not square");
  Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  if (llt.info() != Eigen::Success)
    throw NumericError(std::string(who) + ": covariance not positive definite");
  return llt;
}

Eigen::VectorXd project_hyperplane(const Eigen::VectorXd& w) {
  return w.array() - (w.sum() - 1.0) / static_cast<double>(w.size());
}

// Euclidean projection onto the l1 ball of radius L (soft threshold with
// the exact sort-based pivot).
Eigen::VectorXd project_l1_ball(const Eigen::VectorXd& w, double L) {
  if (w.lpNorm<1>() <= L) return w;
  std::vector<double> mag(static_cast<std::size_t>(w.size()));
  for (Eigen::Index i = 0; i < w.size(); ++i) mag[static_cast<std::size_t>(i)] = std::abs(w(i));
  std::sort(mag.begin(), mag.end(), std::greater<double>());
  double cum = 0.0, tau = 0.0;
  for (std::size_t k = 0; k < mag.size(); ++k) {
    cum += mag[k];
    const double cand = (cum - L) / static_cast<double>(k + 1);
    if (k + 1 == mag.size() || mag[k + 1] <= cand) {
      tau = cand;
      break;
    }
  }
  Eigen::VectorXd out(w.size());
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    const double m = std::max(std::abs(w(i)) - tau, 0.0);
    out(i) = w(i) >= 0.0 ? m : -m;
  }
  return out;
}

Eigen::VectorXd project_box(const Eigen::VectorXd& w, const ConstraintSet& c) {
  Eigen::VectorXd out = w;
  if (c.lower) out = out.cwiseMax(*c.lower);
  if (c.upper) out = out.cwiseMin(*c.upper);
  return out;
}

bool satisfies(const Eigen::VectorXd& w, const ConstraintSet& c, double tol) {
  if (std::abs(w.sum() - 1.0) > tol) return false;
  if (w.lpNorm<1>() > c.max_leverage + tol) return false;
  if (c.lower && ((w - *c.lower).minCoeff() < -tol)) return false;
  if (c.upper && ((*c.upper - w).minCoeff() < -tol)) return false;
  return true;
}

}  // namespace

void ConstraintSet::validate(Eigen::Index n) const {
  if (max_leverage < 1.0)
    throw DataError("ConstraintSet: max_leverage < 1 is infeasible with a unit budget");
  if (lower && lower->size() != n) throw DataError("ConstraintSet: lower bound size mismatch");
  if (upper && upper->size() != n) throw DataError("ConstraintSet: upper bound size mismatch");
  if (lower && upper && ((*upper - *lower).minCoeff() < 0.0))
    throw DataError("ConstraintSet: lower bound exceeds upper bound");
  if (lower && lower->sum() > 1.0 + 1e-12)
    throw DataError("ConstraintSet: lower bounds sum above the budget");
  if (upper && upper->sum() < 1.0 - 1e-12)
    throw DataError("ConstraintSet: upper bounds sum below the budget");
}

Eigen::VectorXd project_onto_constraints(const Eigen::VectorXd& w, const ConstraintSet& c) {
  // Dykstra's alternating projections over hyperplane, l1 ball, box.
  const bool boxed = c.lower || c.upper;
  Eigen::VectorXd x = w;
  Eigen::VectorXd p = Eigen::VectorXd::Zero(w.size());
  Eigen::VectorXd q = Eigen::VectorXd::Zero(w.size());
  Eigen::VectorXd r = Eigen::VectorXd::Zero(w.size());
  for (int it = 0; it < 2000; ++it) {
    const Eigen::VectorXd x_prev = x;
    Eigen::VectorXd y = project_hyperplane(x + p);
    p = x + p - y;
    x = project_l1_ball(y + q, c.max_leverage);
    q = y + q - x;
    if (boxed) {
      y = project_box(x + r, c);
      r = x + r - y;
      x = y;
    }
    if ((x - x_prev).lpNorm<Eigen::Infinity>() < 1e-14 && satisfies(x, c, 1e-10)) break;
  }
  return x;
}

Eigen::VectorXd gmv_weights(const Eigen::MatrixXd& sigma) {
  auto llt = factor_pd(sigma, "gmv_weights");
  const Eigen::VectorXd si = llt.solve(Eigen::VectorXd::Ones(sigma.rows()));
  const double denom = si.sum();
  if (!(denom > 0.0) || !si.allFinite()) throw NumericError("gmv_weights: singular covariance");
  return si / denom;
}

Eigen::VectorXd mv_closed_form(const Eigen::VectorXd& mu, const Eigen::MatrixXd& sigma,
                               double gamma) {
  if (gamma <= 0.0) throw DataError("mv_closed_form: gamma must be positive");
  auto llt = factor_pd(sigma, "mv_closed_form");
  const Eigen::VectorXd si1 = llt.solve(Eigen::VectorXd::Ones(sigma.rows()));
  const Eigen::VectorXd simu = llt.solve(mu);
  const double a = si1.sum();
  if (!(a > 0.0)) throw NumericError("mv_closed_form: singular covariance");
  return si1 / a + (simu - si1 * (simu.sum() / a)) / gamma;
}

PortfolioDecomposition decompose(const Eigen::VectorXd& pi, const Eigen::VectorXd& alpha_bl,
                                 const Eigen::MatrixXd& sigma_strategic,
                                 const Eigen::MatrixXd& sigma_active,
                                 double gamma_s, double gamma_a) {
  if (gamma_s <= 0.0 || gamma_a <= 0.0) throw DataError("decompose: risk tolerances must be positive");
  auto llt_s = factor_pd(sigma_strategic, "decompose(strategic)");
  auto llt_a = factor_pd(sigma_active, "decompose(active)");
  const auto N = pi.size();
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(N);

  PortfolioDecomposition out;
  out.gamma_s = gamma_s;
  out.gamma_a = gamma_a;

  const Eigen::VectorXd s1 = llt_s.solve(ones);
  const double sa = s1.sum();
  if (!(sa > 0.0)) throw NumericError("decompose: singular strategic covariance");
  out.gmv = s1 / sa;

  const Eigen::VectorXd spi = llt_s.solve(pi);
  out.systematic = (spi - s1 * (spi.sum() / sa)) / gamma_s;

  const Eigen::VectorXd a1 = llt_a.solve(ones);
  const double aa = a1.sum();
  if (!(aa > 0.0)) throw NumericError("decompose: singular active covariance");
  const Eigen::VectorXd aal = llt_a.solve(alpha_bl);
  out.active = (aal - a1 * (aal.sum() / aa)) / gamma_a;

  out.total = out.gmv + out.systematic + out.active;
  return out;
}

namespace {

struct PolishResult {
  Eigen::VectorXd w;
  bool valid = false;
};

// Exact equality-constrained solve on the active set implied by a point,
// with a full KKT verification. Returns valid=false when the implied
// active set is not optimal.
PolishResult polish(const Eigen::VectorXd& x, const Eigen::VectorXd& mu,
                    const Eigen::MatrixXd& sigma, double gamma, const ConstraintSet& c) {
  PolishResult res;
  const auto N = x.size();
  const double l1 = x.lpNorm<1>();
  const bool lev_active = l1 >= c.max_leverage - 1e-7 * std::max(1.0, c.max_leverage);
  const double ztol = 1e-7 * std::max(1.0, x.lpNorm<Eigen::Infinity>());

  std::vector<int> kind(static_cast<std::size_t>(N), 0);  // 0 free, 1 zero, 2 lo, 3 hi
  for (Eigen::Index i = 0; i < N; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    if (c.lower && x(i) <= (*c.lower)(i) + ztol)
      kind[ui] = 2;
    else if (c.upper && x(i) >= (*c.upper)(i) - ztol)
      kind[ui] = 3;
    else if (lev_active && std::abs(x(i)) <= ztol)
      kind[ui] = 1;
  }

  std::vector<Eigen::Index> free_idx;
  Eigen::VectorXd w = Eigen::VectorXd::Zero(N);
  double fixed_sum = 0.0, fixed_abs = 0.0;
  for (Eigen::Index i = 0; i < N; ++i) {
    switch (kind[static_cast<std::size_t>(i)]) {
      case 0: free_idx.push_back(i); break;
      case 1: w(i) = 0.0; break;
      case 2: w(i) = (*c.lower)(i); break;
      case 3: w(i) = (*c.upper)(i); break;
    }
    if (kind[static_cast<std::size_t>(i)] != 0) {
      fixed_sum += w(i);
      fixed_abs += std::abs(w(i));
    }
  }
  const auto nf = static_cast<Eigen::Index>(free_idx.size());
  if (nf == 0) return res;

  Eigen::VectorXd s = Eigen::VectorXd::Zero(nf);
  for (Eigen::Index k = 0; k < nf; ++k)
    s(k) = x(free_idx[static_cast<std::size_t>(k)]) >= 0.0 ? 1.0 : -1.0;

  const Eigen::Index m = lev_active ? 2 : 1;
  Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(nf + m, nf + m);
  Eigen::VectorXd rhs(nf + m);
  for (Eigen::Index a = 0; a < nf; ++a) {
    const auto ia = free_idx[static_cast<std::size_t>(a)];
    for (Eigen::Index b = 0; b < nf; ++b)
      kkt(a, b) = gamma * sigma(ia, free_idx[static_cast<std::size_t>(b)]);
    double cross = 0.0;
    for (Eigen::Index i = 0; i < N; ++i)
      if (kind[static_cast<std::size_t>(i)] != 0) cross += sigma(ia, i) * w(i);
    rhs(a) = mu(ia) - gamma * cross;
    kkt(a, nf) = 1.0;
    kkt(nf, a) = 1.0;
    if (lev_active) {
      kkt(a, nf + 1) = s(a);
      kkt(nf + 1, a) = s(a);
    }
  }
  rhs(nf) = 1.0 - fixed_sum;
  if (lev_active) rhs(nf + 1) = c.max_leverage - fixed_abs;

  const Eigen::PartialPivLU<Eigen::MatrixXd> lu(kkt);
  const Eigen::VectorXd sol = lu.solve(rhs);
  // Partial pivoting cannot flag singularity, so validate by residual.
  if (!sol.allFinite() ||
      (kkt * sol - rhs).lpNorm<Eigen::Infinity>() >
          1e-9 * std::max(1.0, rhs.lpNorm<Eigen::Infinity>()))
    return res;
  for (Eigen::Index k = 0; k < nf; ++k) w(free_idx[static_cast<std::size_t>(k)]) = sol(k);
  const double nu = sol(nf);
  const double eta = lev_active ? sol(nf + 1) : 0.0;

  // Verify the full KKT system at tight tolerances.
  const double scale = std::max(1.0, mu.lpNorm<Eigen::Infinity>());
  const double dual_tol = 1e-9 * scale;
  if (lev_active && eta < -dual_tol) return res;
  const Eigen::VectorXd grad = gamma * (sigma * w) - mu;
  for (Eigen::Index k = 0; k < nf; ++k) {
    const auto i = free_idx[static_cast<std::size_t>(k)];
    if (s(k) * w(i) < -1e-11) return res;  // sign flipped across the kink
    if (c.lower && w(i) < (*c.lower)(i) - 1e-11) return res;
    if (c.upper && w(i) > (*c.upper)(i) + 1e-11) return res;
  }
  for (Eigen::Index i = 0; i < N; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    const double gi = grad(i) + nu;
    if (kind[ui] == 1) {
      if (std::abs(gi) > eta + dual_tol) return res;  // zero not a kink optimum
    } else if (kind[ui] == 2) {
      const double sgn = lev_active ? (w(i) >= 0.0 ? 1.0 : -1.0) : 0.0;
      if (gi + eta * sgn < -dual_tol) return res;  // lower-bound multiplier negative
    } else if (kind[ui] == 3) {
      const double sgn = lev_active ? (w(i) >= 0.0 ? 1.0 : -1.0) : 0.0;
      if (gi + eta * sgn > dual_tol) return res;  // upper-bound multiplier negative
    }
  }
  if (!lev_active && w.lpNorm<1>() > c.max_leverage + 1e-10) return res;
  res.w = w;
  res.valid = true;
  return res;
}

double spectral_bound(const Eigen::MatrixXd& sigma) {
  Eigen::VectorXd v = Eigen::VectorXd::Ones(sigma.rows()).normalized();
  double lam = sigma.diagonal().maxCoeff();
  for (int it = 0; it < 50; ++it) {
    Eigen::VectorXd u = sigma * v;
    const double n = u.norm();
    if (n <= 0.0) break;
    lam = std::max(lam, n);
    v = u / n;
  }
  return lam * 1.01;
}

}  // namespace

Eigen::VectorXd constrained_mv(const Eigen::VectorXd& mu, const Eigen::MatrixXd& sigma,
                               double gamma, const ConstraintSet& constraints,
                               const Eigen::VectorXd& warm_start,
                               const Eigen::VectorXd* closed_form_hint) {
  const auto N = mu.size();
  if (gamma <= 0.0) throw DataError("constrained_mv: gamma must be positive");
  constraints.validate(N);

  // Unconstrained-within-budget optimum first: if the remaining
  // constraints are slack there, it is the answer.
  const Eigen::VectorXd closed = closed_form_hint && closed_form_hint->size() == N
                                     ? *closed_form_hint
                                     : mv_closed_form(mu, sigma, gamma);
  if (satisfies(closed, constraints, 1e-12)) return closed;

  Eigen::VectorXd x = project_onto_constraints(
      warm_start.size() == N ? warm_start : Eigen::VectorXd::Constant(N, 1.0 / N),
      constraints);
  if (!satisfies(x, constraints, 1e-6)) {
    const double lev = x.lpNorm<1>();
    throw DataError("constrained_mv: infeasible constraint set (leverage bound " +
                    std::to_string(constraints.max_leverage) + " vs attainable " +
                    std::to_string(lev) + ")");
  }

  // FISTA with adaptive restart on f(w) = gamma/2 w'Sw - mu'w.
  const double lip = gamma * spectral_bound(sigma);
  const double step = 1.0 / lip;
  Eigen::VectorXd y = x;
  double theta = 1.0;
  Eigen::VectorXd x_prev = x;
  constexpr int kMaxIter = 20000;
  for (int it = 0; it < kMaxIter; ++it) {
    const Eigen::VectorXd grad = gamma * (sigma * y) - mu;
    Eigen::VectorXd x_new = project_onto_constraints(y - step * grad, constraints);
    const double theta_new = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * theta * theta));
    Eigen::VectorXd y_new = x_new + ((theta - 1.0) / theta_new) * (x_new - x);
    if (grad.dot(x_new - x) > 0.0) {  // restart momentum
      y_new = x_new;
      theta = 1.0;
    } else {
      theta = theta_new;
    }
    const double move = (x_new - x).lpNorm<Eigen::Infinity>();
    x_prev = x;
    x = x_new;
    y = y_new;
    if (it % 5 == 4 || move < 1e-13) {
      auto p = polish(x, mu, sigma, gamma, constraints);
      if (p.valid) return p.w;
      if (move < 1e-13 && it > 100) break;
    }
  }
  auto p = polish(x, mu, sigma, gamma, constraints);
  if (p.valid) return p.w;
  return x;  // best iterate; KKT residual reported by kkt_check in tests
}

KktReport kkt_check(const Eigen::VectorXd& w, const Eigen::VectorXd& mu,
                    const Eigen::MatrixXd& sigma, double gamma,
                    const ConstraintSet& c) {
  const auto N = w.size();
  const Eigen::VectorXd grad = gamma * (sigma * w) - mu;
  const double l1 = w.lpNorm<1>();
  const bool lev_active = l1 >= c.max_leverage - 1e-7 * std::max(1.0, c.max_leverage);
  const double ztol = 1e-7 * std::max(1.0, w.lpNorm<Eigen::Infinity>());

  std::vector<int> kind(static_cast<std::size_t>(N), 0);
  for (Eigen::Index i = 0; i < N; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    if (c.lower && w(i) <= (*c.lower)(i) + ztol)
      kind[ui] = 2;
    else if (c.upper && w(i) >= (*c.upper)(i) - ztol)
      kind[ui] = 3;
    else if (lev_active && std::abs(w(i)) <= ztol)
      kind[ui] = 1;
  }

  // Fit (nu, eta>=0) over the free coordinates by least squares.
  double s11 = 0.0, s1s = 0.0, sss = 0.0, g1 = 0.0, gs = 0.0;
  for (Eigen::Index i = 0; i < N; ++i) {
    if (kind[static_cast<std::size_t>(i)] != 0) continue;
    const double si = w(i) >= 0.0 ? 1.0 : -1.0;
    s11 += 1.0;
    s1s += si;
    sss += 1.0;
    g1 += grad(i);
    gs += grad(i) * si;
  }
  double nu = 0.0, eta = 0.0;
  if (lev_active && s11 * sss - s1s * s1s > 1e-12) {
    const double det = s11 * sss - s1s * s1s;
    nu = -(sss * g1 - s1s * gs) / det;
    eta = -(s11 * gs - s1s * g1) / det;
  } else if (s11 > 0.0) {
    nu = -g1 / s11;
  }
  if (eta < 0.0) {
    eta = 0.0;
    if (s11 > 0.0) nu = -g1 / s11;
  }

  KktReport rep;
  for (Eigen::Index i = 0; i < N; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    const double si = w(i) >= 0.0 ? 1.0 : -1.0;
    const double gi = grad(i) + nu;
    double r = 0.0;
    if (kind[ui] == 0) {
      r = std::abs(gi + (lev_active ? eta * si : 0.0));
    } else if (kind[ui] == 1) {
      r = std::max(0.0, std::abs(gi) - eta);
    } else if (kind[ui] == 2) {
      r = std::max(0.0, -(gi + (lev_active ? eta * si : 0.0)));
    } else {
      r = std::max(0.0, gi + (lev_active ? eta * si : 0.0));
    }
    rep.stationarity = std::max(rep.stationarity, r);
  }

  rep.primal_feasibility = std::abs(w.sum() - 1.0);
  rep.primal_feasibility = std::max(rep.primal_feasibility, std::max(0.0, l1 - c.max_leverage));
  if (c.lower)
    rep.primal_feasibility =
        std::max(rep.primal_feasibility, std::max(0.0, -((w - *c.lower).minCoeff())));
  if (c.upper)
    rep.primal_feasibility =
        std::max(rep.primal_feasibility, std::max(0.0, -((*c.upper - w).minCoeff())));

  rep.complementarity = eta * std::max(0.0, c.max_leverage - l1);
  return rep;
}

}  // namespace apm

#include <doctest.h>

#include <random>

#include "apm/portfolio.hpp"
#include "helpers.hpp"

using namespace apm;

TEST_CASE("gmv_weights") {
  SUBCASE("identity covariance: equal weights") {
    const auto w = gmv_weights(Eigen::MatrixXd::Identity(4, 4));
    CHECK((w.array() - 0.25).abs().maxCoeff() < 1e-14);
  }
  SUBCASE("diag(1,4) hand solve: (0.8, 0.2)") {
    const auto w = gmv_weights(Eigen::Vector2d(1.0, 4.0).asDiagonal());
    CHECK(w(0) == doctest::Approx(0.8).epsilon(1e-12));
    CHECK(w(1) == doctest::Approx(0.2).epsilon(1e-12));
  }
  SUBCASE("always fully invested") {
    std::mt19937_64 rng(81);
    for (int rep = 0; rep < 20; ++rep) {
      const auto w = gmv_weights(apm::test::random_pd(7, rng));
      CHECK(w.sum() == doctest::Approx(1.0).epsilon(1e-10));
    }
  }
  SUBCASE("singular covariance throws") {
    CHECK_THROWS_AS(gmv_weights(Eigen::MatrixXd::Zero(3, 3)), NumericError);
  }
}

TEST_CASE("mv_closed_form") {
  SUBCASE("mu proportional to ones collapses to gmv") {
    std::mt19937_64 rng(83);
    const auto sigma = apm::test::random_pd(5, rng);
    const auto w = mv_closed_form(Eigen::VectorXd::Constant(5, 0.03), sigma, 7.0);
    CHECK((w - gmv_weights(sigma)).lpNorm<Eigen::Infinity>() < 1e-12);
  }
  SUBCASE("identity covariance oracle: (0.51, 0.49)") {
    const auto w =
        mv_closed_form(Eigen::Vector2d(0.02, 0.0), Eigen::Matrix2d::Identity(), 1.0);
    CHECK(w(0) == doctest::Approx(0.51).epsilon(1e-12));
    CHECK(w(1) == doctest::Approx(0.49).epsilon(1e-12));
  }
  SUBCASE("infinite risk aversion recovers gmv") {
    std::mt19937_64 rng(89);
    const auto sigma = apm::test::random_pd(4, rng);
    const auto mu = apm::test::random_vec(4, rng, 0.05);
    const auto w = mv_closed_form(mu, sigma, 1e12);
    CHECK((w - gmv_weights(sigma)).lpNorm<Eigen::Infinity>() < 1e-9);
  }
  SUBCASE("satisfies the budget-constrained KKT system") {
    std::mt19937_64 rng(97);
    for (int rep = 0; rep < 100; ++rep) {
      const Eigen::Index n = 2 + static_cast<Eigen::Index>(rng() % 9);
      const auto sigma = apm::test::random_pd(n, rng);
      const auto mu = apm::test::random_vec(n, rng, 0.05);
      const double gamma = 0.5 + static_cast<double>(rng() % 100) / 10.0;
      const auto w = mv_closed_form(mu, sigma, gamma);
      // stationarity: mu - gamma Sigma w = nu 1 for some scalar nu
      const Eigen::VectorXd grad = mu - gamma * sigma * w;
      const double nu = grad.mean();
      CHECK((grad.array() - nu).abs().maxCoeff() < 1e-8);
      CHECK(w.sum() == doctest::Approx(1.0).epsilon(1e-10));
    }
  }
}

TEST_CASE("decompose") {
  std::mt19937_64 rng(101);
  const Eigen::Index n = 6;
  const auto sigma_s = apm::test::random_pd(n, rng);
  const auto sigma_a = apm::test::random_pd(n, rng);
  const auto pi = apm::test::random_vec(n, rng, 0.02);
  const auto alpha = apm::test::random_vec(n, rng, 0.01);

  SUBCASE("zero alpha kills the active leg") {
    const auto d = decompose(pi, Eigen::VectorXd::Zero(n), sigma_s, sigma_a, 5.0, 8.0);
    CHECK(d.active.norm() == 0.0);
  }
  SUBCASE("legs sum to total; dollar-neutral legs") {
    const auto d = decompose(pi, alpha, sigma_s, sigma_a, 5.0, 8.0);
    CHECK((d.gmv + d.systematic + d.active - d.total).lpNorm<Eigen::Infinity>() < 1e-12);
    CHECK(std::abs(d.total.sum() - 1.0) < 1e-10);
    CHECK(std::abs(d.systematic.sum()) < 1e-10);
    CHECK(std::abs(d.active.sum()) < 1e-10);
  }
  SUBCASE("shared covariance and risk tolerance equals the closed form") {
    const auto d = decompose(pi, alpha, sigma_s, sigma_s, 5.0, 5.0);
    const auto w = mv_closed_form(pi + alpha, sigma_s, 5.0);
    CHECK((d.total - w).lpNorm<Eigen::Infinity>() < 1e-10);
  }
  SUBCASE("doubling gamma_a halves the active leg exactly") {
    const auto d1 = decompose(pi, alpha, sigma_s, sigma_a, 5.0, 4.0);
    const auto d2 = decompose(pi, alpha, sigma_s, sigma_a, 5.0, 8.0);
    CHECK((d1.active - 2.0 * d2.active).lpNorm<Eigen::Infinity>() < 1e-12);
  }
  SUBCASE("perturbing alpha leaves gmv and systematic bitwise unchanged") {
    const auto d1 = decompose(pi, alpha, sigma_s, sigma_a, 5.0, 8.0);
    const auto d2 = decompose(pi, 3.0 * alpha, sigma_s, sigma_a, 5.0, 8.0);
    CHECK(d1.gmv == d2.gmv);
    CHECK(d1.systematic == d2.systematic);
  }
}

TEST_CASE("project_onto_constraints") {
  SUBCASE("feasible points are fixed points") {
    ConstraintSet c;
    c.max_leverage = 2.0;
    const Eigen::Vector3d w(0.5, 0.3, 0.2);
    CHECK((project_onto_constraints(w, c) - w).norm() < 1e-10);
  }
  SUBCASE("L=1 projection of gmv-like weights removes shorts") {
    ConstraintSet c;
    c.max_leverage = 1.0;
    const Eigen::Vector3d w(0.8, 0.5, -0.3);
    const auto p = project_onto_constraints(w, c);
    CHECK(p.sum() == doctest::Approx(1.0).epsilon(1e-8));
    CHECK(p.cwiseAbs().sum() <= 1.0 + 1e-8);
    CHECK(p.minCoeff() >= -1e-8);
  }
}

TEST_CASE("constrained_mv") {
  std::mt19937_64 rng(103);
  SUBCASE("slack constraints reproduce the closed form") {
    for (int rep = 0; rep < 50; ++rep) {
      const Eigen::Index n = 3 + static_cast<Eigen::Index>(rng() % 8);
      const auto sigma = apm::test::random_pd(n, rng);
      const auto mu = apm::test::random_vec(n, rng, 0.02);
      const double gamma = 5.0;
      const auto closed = mv_closed_form(mu, sigma, gamma);
      if (closed.cwiseAbs().sum() > 9.5) continue;
      ConstraintSet c;
      c.max_leverage = 10.0;
      const auto w = constrained_mv(mu, sigma, gamma, c, Eigen::VectorXd::Zero(n));
      CHECK((w - closed).lpNorm<Eigen::Infinity>() < 1e-6);
    }
  }
  SUBCASE("L=1 with flat mu returns the projected gmv") {
    const Eigen::MatrixXd sigma = Eigen::Vector3d(1.0, 1.0, 4.0).asDiagonal();
    ConstraintSet c;
    c.max_leverage = 1.0;
    const auto w = constrained_mv(Eigen::VectorXd::Constant(3, 0.01), sigma, 2.0, c,
                                  Eigen::VectorXd::Zero(3));
    CHECK(w.sum() == doctest::Approx(1.0).epsilon(1e-8));
    CHECK(w.cwiseAbs().sum() <= 1.0 + 1e-8);
    CHECK(w.minCoeff() >= -1e-8);
    // gmv of diag(1,1,4) is (4/9,4/9,1/9): already feasible at L=1
    CHECK(w(0) == doctest::Approx(4.0 / 9.0).epsilon(1e-6));
    CHECK(w(2) == doctest::Approx(1.0 / 9.0).epsilon(1e-6));
  }
  SUBCASE("binding box: strong signal drives the corner solution") {
    ConstraintSet c;
    c.max_leverage = 1.0;
    c.lower = Eigen::VectorXd::Zero(3);
    c.upper = Eigen::VectorXd::Ones(3);
    const auto w = constrained_mv(Eigen::Vector3d(10.0, 0.0, 0.0),
                                  Eigen::MatrixXd::Identity(3, 3), 1.0, c,
                                  Eigen::VectorXd::Constant(3, 1.0 / 3.0));
    CHECK(w(0) == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(w(1) == doctest::Approx(0.0).epsilon(1e-6));
  }
  SUBCASE("KKT residuals small on random binding instances") {
    for (int rep = 0; rep < 100; ++rep) {
      const Eigen::Index n = 3 + static_cast<Eigen::Index>(rng() % 10);
      const auto sigma = apm::test::random_pd(n, rng);
      const auto mu = apm::test::random_vec(n, rng, 0.5);
      ConstraintSet c;
      c.max_leverage = 1.5;
      const auto w = constrained_mv(mu, sigma, 2.0, c, Eigen::VectorXd::Zero(n));
      const auto kkt = kkt_check(w, mu, sigma, 2.0, c);
      CHECK(kkt.stationarity <= 1e-6);
      CHECK(kkt.primal_feasibility <= 1e-8);
      CHECK(kkt.complementarity <= 1e-8);
    }
  }
  SUBCASE("deterministic given the warm start") {
    const auto sigma = apm::test::random_pd(6, rng);
    const auto mu = apm::test::random_vec(6, rng, 0.5);
    ConstraintSet c;
    c.max_leverage = 1.2;
    const auto w1 = constrained_mv(mu, sigma, 3.0, c, Eigen::VectorXd::Zero(6));
    const auto w2 = constrained_mv(mu, sigma, 3.0, c, Eigen::VectorXd::Zero(6));
    CHECK(w1 == w2);
  }
  SUBCASE("infeasible constraint set is rejected by name") {
    ConstraintSet c;
    c.max_leverage = 0.5;  // cannot reach 1'w = 1
    CHECK_THROWS_AS(c.validate(3), DataError);
  }
}

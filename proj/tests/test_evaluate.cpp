#include <doctest.h>

#include <cmath>
#include <random>

#include "apm/evaluate.hpp"
#include "apm/synth.hpp"
#include "helpers.hpp"

using namespace apm;

namespace {

double norm_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

Eigen::MatrixXd gaussian_matrix(Eigen::Index T, Eigen::Index N, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 0.01);
  Eigen::MatrixXd M(T, N);
  for (Eigen::Index t = 0; t < T; ++t)
    for (Eigen::Index j = 0; j < N; ++j) M(t, j) = g(rng);
  return M;
}

}  // namespace

TEST_CASE("walk_forward_splits") {
  SUBCASE("T=100, folds=4, min_train=60: four blocks of 10") {
    const auto s = walk_forward_splits(100, 4, 60);
    REQUIRE(s.size() == 4);
    for (int k = 0; k < 4; ++k) {
      CHECK(s[k].train.begin == 0);
      CHECK(s[k].train.end == 60 + 10 * k);
      CHECK(s[k].validate.begin == 60 + 10 * k);
      CHECK(s[k].validate.end == 70 + 10 * k);
    }
  }
  SUBCASE("single fold") {
    const auto s = walk_forward_splits(100, 1, 60);
    REQUIRE(s.size() == 1);
    CHECK(s[0].validate.end == 100);
  }
  SUBCASE("validation never overlaps its own training window") {
    const auto s = walk_forward_splits(103, 5, 40);
    Eigen::Index covered = 40;
    for (const auto& f : s) {
      CHECK(f.validate.begin == f.train.end);
      CHECK(f.validate.begin >= covered);
      covered = f.validate.end;
    }
    CHECK(covered == 103);  // tail exhausted
  }
  SUBCASE("infeasible sizes rejected") {
    CHECK_THROWS_AS(walk_forward_splits(10, 4, 9), DataError);
    CHECK_THROWS_AS(walk_forward_splits(100, 0, 60), DataError);
  }
}

TEST_CASE("GridSpec size and expansion") {
  GridSpec g;
  g.lambda_a = {0.9, 0.95, 0.99};
  g.gamma_a = {5.0, 10.0};
  g.active_models = {ActiveModel::kAll, ActiveModel::kValue};
  CHECK(g.size() == 12);
  const auto configs = g.expand(HyperParams{});
  CHECK(configs.size() == 12);
  // all digests distinct
  std::vector<std::uint64_t> digests;
  for (const auto& c : configs) digests.push_back(c.digest());
  std::sort(digests.begin(), digests.end());
  CHECK(std::adjacent_find(digests.begin(), digests.end()) == digests.end());
  // unset axes inherit the base value
  for (const auto& c : configs) CHECK(c.lambda_s == HyperParams{}.lambda_s);
}

TEST_CASE("grid_search on a synthetic market") {
  GeneratorSpec spec;
  spec.n_assets = 15;
  spec.periods = 280;
  spec.planted_payoffs = Eigen::VectorXd::Zero(5);
  spec.planted_payoffs(1) = 0.004;
  spec.seed = 13;
  const auto mkt = generate(spec);
  HyperParams base;
  base.universe_size = 15;
  auto splits = walk_forward_splits(280 - 53, 3, 80);
  for (auto& s : splits) {
    s.train.begin += 53;
    s.train.end += 53;
    s.validate.begin += 53;
    s.validate.end += 53;
  }

  SUBCASE("grid of one returns exactly that config") {
    GridSpec g;
    const auto res = grid_search(mkt.panel, mkt.factors, base, g, splits, 0, 280);
    REQUIRE(res.ranking.size() == 1);
    CHECK(res.ranking[0].digest == base.digest());
    CHECK(res.trials.returns.cols() == 1);
  }
  SUBCASE("two-point grid ranks deterministically and parallel matches serial") {
    GridSpec g;
    g.gamma_a = {5.0, 20.0};
    const auto serial = grid_search(mkt.panel, mkt.factors, base, g, splits, 0, 280, 1);
    const auto parallel = grid_search(mkt.panel, mkt.factors, base, g, splits, 0, 280, 4);
    REQUIRE(serial.ranking.size() == 2);
    CHECK(serial.trials.returns == parallel.trials.returns);
    CHECK(serial.ranking[0].digest == parallel.ranking[0].digest);
    CHECK(serial.ranking[0].mean_validation_sr >= serial.ranking[1].mean_validation_sr);
  }
}

TEST_CASE("probabilistic_sr") {
  SUBCASE("sr equal to the benchmark gives 0.5") {
    CHECK(probabilistic_sr(0.1, 0.1, 100, 0.0, 3.0) == doctest::Approx(0.5).epsilon(1e-12));
  }
  SUBCASE("formula oracle at sr=0.1, T=1000") {
    const double expected = norm_cdf(0.1 * std::sqrt(999.0) / std::sqrt(1.005));
    CHECK(probabilistic_sr(0.1, 0.0, 1000, 0.0, 3.0) ==
          doctest::Approx(expected).epsilon(1e-12));
  }
  SUBCASE("monotone in T") {
    CHECK(probabilistic_sr(0.1, 0.0, 400, 0.0, 3.0) >
          probabilistic_sr(0.1, 0.0, 100, 0.0, 3.0));
  }
  SUBCASE("invalid denominator throws") {
    CHECK_THROWS_AS(probabilistic_sr(2.0, 0.0, 100, 5.0, 1.0), NumericError);
  }
}

TEST_CASE("deflated_sr and expected_max_sharpe") {
  SUBCASE("single trial deflates nothing") {
    CHECK(deflated_sr(0.2, 500, 0.0, 3.0, 1, 0.01) ==
          doctest::Approx(probabilistic_sr(0.2, 0.0, 500, 0.0, 3.0)).epsilon(1e-12));
    CHECK(expected_max_sharpe(1, 0.01) == 0.0);
  }
  SUBCASE("zero trial variance deflates nothing") {
    CHECK(deflated_sr(0.2, 500, 0.0, 3.0, 100, 0.0) ==
          doctest::Approx(probabilistic_sr(0.2, 0.0, 500, 0.0, 3.0)).epsilon(1e-12));
  }
  SUBCASE("formula oracle at n=100, var=0.0004") {
    const double sr0 = expected_max_sharpe(100, 0.0004);
    // cross-check against a Monte Carlo max of 100 iid N(0, 0.02^2) draws
    std::mt19937_64 rng(71);
    std::normal_distribution<double> g(0.0, 0.02);
    double acc = 0.0;
    const int reps = 20000;
    for (int r = 0; r < reps; ++r) {
      double mx = -1e9;
      for (int i = 0; i < 100; ++i) mx = std::max(mx, g(rng));
      acc += mx;
    }
    CHECK(sr0 == doctest::Approx(acc / reps).epsilon(0.03));
    CHECK(deflated_sr(0.2, 700, 0.0, 3.0, 100, 0.0004) ==
          doctest::Approx(probabilistic_sr(0.2, sr0, 700, 0.0, 3.0)).epsilon(1e-12));
  }
  SUBCASE("DSR < PSR whenever selection happened") {
    CHECK(deflated_sr(0.2, 700, 0.0, 3.0, 100, 0.0004) <
          probabilistic_sr(0.2, 0.0, 700, 0.0, 3.0));
  }
}

TEST_CASE("haircut_sr") {
  SUBCASE("one trial, no haircut") {
    CHECK(haircut_sr(0.25, 300, 1) == doctest::Approx(0.25).epsilon(1e-9));
  }
  SUBCASE("astronomical trial counts kill the SR") {
    CHECK(haircut_sr(0.05, 100, 1000000000) == 0.0);
  }
  SUBCASE("paper-scale multiplicity gives a strictly positive haircut") {
    const double h = haircut_sr(0.3, 700, 10800);
    CHECK(h > 0.0);
    CHECK(h < 0.3);
  }
  SUBCASE("sign preserved for negative SRs") {
    CHECK(haircut_sr(-0.25, 300, 1) == doctest::Approx(-0.25).epsilon(1e-9));
  }
}

TEST_CASE("cscv_pbo") {
  SUBCASE("a strictly dominating column gives PBO = 0") {
    Eigen::MatrixXd M = gaussian_matrix(96, 6, 3);
    M.col(2).array() += 0.05;  // dominates every period
    const auto res = cscv_pbo(M, 8);
    CHECK(res.pbo == 0.0);
    CHECK_FALSE(res.degenerate);
    CHECK(res.logits.size() == 70);  // C(8,4)
  }
  SUBCASE("two columns swapping halves, S=2: PBO = 1") {
    Eigen::MatrixXd M(8, 2);
    // col 0 wins the first half, col 1 the second; both IS picks lose OOS
    M.col(0) << 0.02, 0.03, 0.02, 0.03, -0.01, 0.005, -0.01, 0.005;
    M.col(1) << -0.01, 0.005, -0.01, 0.005, 0.02, 0.03, 0.02, 0.03;
    const auto res = cscv_pbo(M, 2);
    REQUIRE(res.logits.size() == 2);
    CHECK(res.pbo == 1.0);
  }
  SUBCASE("identical columns are degenerate: PBO = 0.5 with flag") {
    Eigen::MatrixXd M(16, 3);
    M.col(0) = gaussian_matrix(16, 1, 5);
    M.col(1) = M.col(0);
    M.col(2) = M.col(0);
    const auto res = cscv_pbo(M, 4);
    CHECK(res.degenerate);
    CHECK(res.pbo == 0.5);
  }
  SUBCASE("rank-based: monotone transform of all columns preserves PBO") {
    const Eigen::MatrixXd M = gaussian_matrix(64, 8, 7);
    const auto a = cscv_pbo(M, 4);
    const auto b = cscv_pbo(3.0 * M, 4);  // positive scaling preserves all SR ranks
    CHECK(a.pbo == b.pbo);
    REQUIRE(a.logits.size() == b.logits.size());
    for (std::size_t i = 0; i < a.logits.size(); ++i)
      CHECK(a.logits[i] == doctest::Approx(b.logits[i]).epsilon(1e-12));
  }
  SUBCASE("iid null is near one half") {
    double acc = 0.0;
    for (int s = 0; s < 5; ++s) acc += cscv_pbo(gaussian_matrix(400, 30, 100 + s), 8).pbo;
    CHECK(acc / 5.0 == doctest::Approx(0.5).epsilon(0.3));
  }
  SUBCASE("input validation") {
    CHECK_THROWS_AS(cscv_pbo(gaussian_matrix(20, 4, 1), 3), DataError);
    CHECK_THROWS_AS(cscv_pbo(gaussian_matrix(20, 1, 1), 4), DataError);
    CHECK_THROWS_AS(cscv_pbo(gaussian_matrix(4, 4, 1), 8), DataError);
  }
}

TEST_CASE("is_oos_regression") {
  SUBCASE("exact line y = 1 - x") {
    std::vector<std::pair<double, double>> pairs;
    for (double x : {0.1, 0.4, 0.7, 0.9}) pairs.emplace_back(x, 1.0 - x);
    const auto fit = is_oos_regression(pairs);
    CHECK(fit.slope == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(fit.intercept == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(fit.r2 == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("iid pairs have slope and r2 near zero") {
    std::mt19937_64 rng(91);
    std::normal_distribution<double> g;
    double slope_acc = 0.0, r2_acc = 0.0;
    const int reps = 200;
    for (int r = 0; r < reps; ++r) {
      std::vector<std::pair<double, double>> pairs;
      for (int i = 0; i < 50; ++i) pairs.emplace_back(g(rng), g(rng));
      const auto fit = is_oos_regression(pairs);
      slope_acc += fit.slope;
      r2_acc += fit.r2;
    }
    CHECK(std::abs(slope_acc / reps) < 0.05);
    CHECK(r2_acc / reps < 0.1);
  }
  SUBCASE("duplicating every pair changes nothing") {
    std::vector<std::pair<double, double>> pairs = {{0.1, 0.3}, {0.5, 0.2}, {0.9, -0.1}};
    auto doubled = pairs;
    doubled.insert(doubled.end(), pairs.begin(), pairs.end());
    const auto a = is_oos_regression(pairs);
    const auto b = is_oos_regression(doubled);
    CHECK(a.slope == doctest::Approx(b.slope).epsilon(1e-12));
    CHECK(a.intercept == doctest::Approx(b.intercept).epsilon(1e-12));
  }
  SUBCASE("degenerate variance rejected") {
    std::vector<std::pair<double, double>> pairs = {{0.5, 0.3}, {0.5, 0.2}, {0.5, -0.1}};
    CHECK_THROWS_AS(is_oos_regression(pairs), NumericError);
    CHECK_THROWS_AS(is_oos_regression({{0.1, 0.2}}), DataError);
  }
}

TEST_CASE("skewness and kurtosis on known samples") {
  Eigen::VectorXd sym(4);
  sym << -1.0, -0.5, 0.5, 1.0;
  CHECK(skewness(sym) == doctest::Approx(0.0).epsilon(1e-12));
  std::mt19937_64 rng(97);
  std::normal_distribution<double> g;
  Eigen::VectorXd x(200000);
  for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = g(rng);
  CHECK(skewness(x) == doctest::Approx(0.0).epsilon(0.05));
  CHECK(kurtosis(x) == doctest::Approx(3.0).epsilon(0.05));
}

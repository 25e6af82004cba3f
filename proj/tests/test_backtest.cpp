#include <doctest.h>

#include <cmath>

#include "apm/backtest.hpp"
#include "apm/synth.hpp"
#include "helpers.hpp"

using namespace apm;

namespace {

SyntheticMarket small_market(std::uint64_t seed, Eigen::Index n = 20, Eigen::Index T = 260) {
  GeneratorSpec spec;
  spec.n_assets = n;
  spec.periods = T;
  spec.planted_payoffs = Eigen::VectorXd::Zero(5);
  spec.planted_payoffs(1) = 0.004;
  spec.seed = seed;
  return generate(spec);
}

HyperParams small_hp(Eigen::Index universe = 20) {
  HyperParams hp;
  hp.universe_size = universe;
  return hp;
}

}  // namespace

TEST_CASE("run_backtest: identical runs are bitwise identical") {
  const auto mkt = small_market(1);
  const auto hp = small_hp();
  const auto a = run_backtest(mkt.panel, mkt.factors, hp, 0, mkt.panel.periods());
  const auto b = run_backtest(mkt.panel, mkt.factors, hp, 0, mkt.panel.periods());
  CHECK(a.period_returns == b.period_returns);
  CHECK(a.weights == b.weights);
  CHECK(a.component_returns == b.component_returns);
  CHECK(a.turnover == b.turnover);
  CHECK(a.config_digest == b.config_digest);
}

TEST_CASE("run_backtest: accounting identity equity = cumprod(1 + r)") {
  const auto mkt = small_market(2);
  const auto r = run_backtest(mkt.panel, mkt.factors, small_hp(), 0, mkt.panel.periods());
  REQUIRE(r.equity_curve.size() == r.period_returns.size() + 1);
  CHECK(r.equity_curve(0) == 1.0);
  double eq = 1.0;
  for (Eigen::Index k = 0; k < r.period_returns.size(); ++k) {
    eq *= 1.0 + r.period_returns(k);
    CHECK(r.equity_curve(k + 1) == doctest::Approx(eq).epsilon(1e-12));
  }
}

TEST_CASE("run_backtest: component legs attribute the total return") {
  const auto mkt = small_market(3);
  const auto r = run_backtest(mkt.panel, mkt.factors, small_hp(), 0, mkt.panel.periods());
  for (Eigen::Index k = 0; k < r.period_returns.size(); ++k)
    CHECK(r.component_returns.row(k).sum() ==
          doctest::Approx(r.period_returns(k)).epsilon(1e-10));
}

TEST_CASE("run_backtest: weights respect the leverage constraint") {
  const auto mkt = small_market(4);
  auto hp = small_hp();
  hp.max_leverage = 1.5;
  const auto r = run_backtest(mkt.panel, mkt.factors, hp, 0, mkt.panel.periods());
  for (Eigen::Index k = 0; k < r.weights.rows(); ++k) {
    const double lev = r.weights.row(k).cwiseAbs().sum();
    if (lev == 0.0) continue;  // untraded period
    CHECK(lev <= 1.5 + 1e-6);
    CHECK(r.weights.row(k).sum() == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("run_backtest: no masked cell is ever read") {
  GeneratorSpec spec;
  spec.n_assets = 15;
  spec.periods = 200;
  spec.seed = 5;
  auto mkt = generate(spec);
  // punch extra availability holes
  for (Eigen::Index t = 60; t < 70; ++t) mkt.panel.available(t, 3) = false;
  mkt.panel.returns(65, 3) = std::numeric_limits<double>::quiet_NaN();
  mkt.panel.reset_masked_read_count();
  const auto r = run_backtest(mkt.panel, mkt.factors, small_hp(15), 0, 200);
  CHECK(mkt.panel.masked_read_count() == 0);
  CHECK(r.period_returns.allFinite());
  // the masked asset holds zero weight while dark
  for (Eigen::Index k = 0; k < r.weights.rows(); ++k) CHECK(std::isfinite(r.weights(k, 3)));
}

TEST_CASE("run_backtest: truncation replay is look-ahead free") {
  const auto mkt = small_market(6, 20, 300);
  const auto hp = small_hp();
  const auto full = run_backtest(mkt.panel, mkt.factors, hp, 0, 300);
  const auto cut = run_backtest(mkt.panel, mkt.factors, hp, 0, 200);
  REQUIRE(cut.period_returns.size() > 10);
  for (Eigen::Index k = 0; k < cut.period_returns.size(); ++k) {
    CHECK(full.period_returns(k) == cut.period_returns(k));
    CHECK(full.weights.row(k) == cut.weights.row(k));
  }
}

TEST_CASE("run_backtest: turnover measured against drifted weights") {
  const auto mkt = small_market(7);
  const auto r = run_backtest(mkt.panel, mkt.factors, small_hp(), 0, mkt.panel.periods());
  CHECK(r.turnover.minCoeff() >= 0.0);
  CHECK(r.turnover.size() == r.period_returns.size());
}

TEST_CASE("run_benchmark") {
  const auto mkt = small_market(8);
  const auto hp = small_hp();
  const Eigen::Index T = mkt.panel.periods();
  SUBCASE("risk-free leg compounds rf exactly (zero excess)") {
    const auto r = run_benchmark(mkt.panel, BenchmarkKind::kRiskFree, hp, 0, T);
    CHECK(r.period_returns.cwiseAbs().maxCoeff() == 0.0);
    CHECK((r.equity_curve.array() - 1.0).abs().maxCoeff() == 0.0);
  }
  SUBCASE("cap weights proportional to MV") {
    const auto r = run_benchmark(mkt.panel, BenchmarkKind::kCapWeighted, hp, 0, T);
    const Eigen::Index k = r.weights.rows() / 2;
    const Eigen::Index t = hp.burn_in + k;  // decision period for row k
    Eigen::VectorXd mv = Eigen::VectorXd::Zero(mkt.panel.assets());
    const auto mvi = mkt.panel.char_index(chars::kMV);
    for (Eigen::Index i = 0; i < mkt.panel.assets(); ++i)
      if (mkt.panel.available(t, i)) mv(i) = mkt.panel.characteristics[mvi](t, i);
    mv /= mv.sum();
    CHECK((r.weights.row(k).transpose() - mv).lpNorm<Eigen::Infinity>() < 1e-10);
  }
  SUBCASE("nd weights equal over the universe") {
    const auto r = run_benchmark(mkt.panel, BenchmarkKind::kNaiveDiversification, hp, 0, T);
    const Eigen::Index k = r.weights.rows() / 2;
    double nonzero = 0.0;
    for (Eigen::Index i = 0; i < r.weights.cols(); ++i)
      if (r.weights(k, i) > 0.0) nonzero += 1.0;
    for (Eigen::Index i = 0; i < r.weights.cols(); ++i)
      if (r.weights(k, i) > 0.0)
        CHECK(r.weights(k, i) == doctest::Approx(1.0 / nonzero).epsilon(1e-12));
  }
}

TEST_CASE("performance_stats hand oracle") {
  BacktestResult r;
  r.period_returns = Eigen::Vector3d(0.02, 0.00, 0.04);
  r.turnover = Eigen::Vector3d(0.1, 0.2, 0.3);
  r.equity_curve.resize(4);
  r.equity_curve << 1.0, 1.02, 1.02, 1.0608;
  const auto s = performance_stats(r);
  CHECK(s.sharpe == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(s.mean_turnover == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(s.ann_return == doctest::Approx(0.02 * 52.0).epsilon(1e-12));
  CHECK(s.max_drawdown == doctest::Approx(0.0));
}

TEST_CASE("sharpe_ratio") {
  CHECK(sharpe_ratio(Eigen::Vector4d(0.01, -0.01, 0.01, -0.01)) == doctest::Approx(0.0));
  CHECK_THROWS_AS(sharpe_ratio(Eigen::Vector3d(0.01, 0.01, 0.01)), NumericError);
}

TEST_CASE("HyperParams digest separates configs and is stable") {
  HyperParams a, b;
  CHECK(a.digest() == b.digest());
  b.lambda_a = 0.9;
  CHECK(a.digest() != b.digest());
  HyperParams c;
  c.active_model = ActiveModel::kValue;
  CHECK(a.digest() != c.digest());
}

TEST_CASE("HyperParams validation rejects out-of-domain values") {
  HyperParams hp;
  hp.lambda_s = 1.0;
  CHECK_THROWS_AS(hp.validate(), DataError);
  hp = HyperParams{};
  hp.kappa_a = 1.5;
  CHECK_THROWS_AS(hp.validate(), DataError);
  hp = HyperParams{};
  hp.gamma_s = -1.0;
  CHECK_THROWS_AS(hp.validate(), DataError);
  hp = HyperParams{};
  hp.max_leverage = 0.5;
  CHECK_THROWS_AS(hp.validate(), DataError);
}

TEST_CASE("active_model_chars spans the four documented variants") {
  CHECK(active_model_chars(ActiveModel::kAll) ==
        std::vector<std::string>{"bvtp", "mv", "moms", "moml"});
  CHECK(active_model_chars(ActiveModel::kValue) == std::vector<std::string>{"bvtp", "mv"});
  CHECK(active_model_chars(ActiveModel::kMomentum) ==
        std::vector<std::string>{"moms", "moml"});
  CHECK(active_model_chars(ActiveModel::kValueMoms) ==
        std::vector<std::string>{"bvtp", "moms"});
}

TEST_CASE("run_backtest: planted alpha earns a positive active leg on average") {
  double active_mean = 0.0;
  int wins = 0;
  const int seeds = 10;
  for (int s = 0; s < seeds; ++s) {
    const auto mkt = small_market(100 + static_cast<std::uint64_t>(s), 30, 300);
    const auto r = run_backtest(mkt.panel, mkt.factors, small_hp(30), 0, 300);
    const double m = r.component_returns.col(2).mean();
    active_mean += m;
    if (m > 0.0) ++wins;
  }
  active_mean /= seeds;
  CHECK(active_mean > 0.0);
  CHECK(wins >= 7);
}

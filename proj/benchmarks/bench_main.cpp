#include <benchmark/benchmark.h>

#include <random>

#include "apm/backtest.hpp"
#include "apm/evaluate.hpp"
#include "apm/filters.hpp"
#include "apm/portfolio.hpp"
#include "apm/synth.hpp"

namespace {

apm::SyntheticMarket market(Eigen::Index n, Eigen::Index t) {
  apm::GeneratorSpec spec;
  spec.n_assets = n;
  spec.periods = t;
  spec.planted_payoffs = Eigen::VectorXd::Zero(5);
  spec.planted_payoffs(1) = 0.004;
  spec.seed = 42;
  return apm::generate(spec);
}

void BM_Backtest(benchmark::State& state) {
  const Eigen::Index n = state.range(0);
  const Eigen::Index t = state.range(1);
  const auto mkt = market(n, t);
  apm::HyperParams hp;
  hp.universe_size = n;
  for (auto _ : state) {
    auto r = apm::run_backtest(mkt.panel, mkt.factors, hp, 0, t);
    benchmark::DoNotOptimize(r.period_returns);
  }
  state.SetItemsProcessed(state.iterations() * t);
}
BENCHMARK(BM_Backtest)->Args({50, 500})->Args({100, 1200})->Unit(benchmark::kMillisecond);

void BM_ConstrainedMv(benchmark::State& state) {
  const Eigen::Index n = state.range(0);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g;
  Eigen::MatrixXd A(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) A(i, j) = g(rng);
  const Eigen::MatrixXd sigma =
      A * A.transpose() / n + 0.1 * Eigen::MatrixXd::Identity(n, n);
  Eigen::VectorXd mu(n);
  for (Eigen::Index i = 0; i < n; ++i) mu(i) = 0.02 * g(rng);
  apm::ConstraintSet c;
  c.max_leverage = 1.5;
  const Eigen::VectorXd warm = Eigen::VectorXd::Constant(n, 1.0 / n);
  for (auto _ : state) {
    auto w = apm::constrained_mv(mu, sigma, 10.0, c, warm);
    benchmark::DoNotOptimize(w);
  }
}
BENCHMARK(BM_ConstrainedMv)->Arg(50)->Arg(100)->Unit(benchmark::kMicrosecond);

void BM_RlsUpdate(benchmark::State& state) {
  const Eigen::Index d = state.range(0);
  std::mt19937_64 rng(2);
  std::normal_distribution<double> g;
  apm::RlsState s(d, 0.99);
  Eigen::VectorXd x(d);
  for (auto _ : state) {
    for (Eigen::Index j = 0; j < d; ++j) x(j) = g(rng);
    benchmark::DoNotOptimize(apm::rls_update(s, x, g(rng)));
  }
}
BENCHMARK(BM_RlsUpdate)->Arg(5)->Arg(20);

void BM_CscvPbo(benchmark::State& state) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g(0.0, 0.01);
  Eigen::MatrixXd m(500, state.range(0));
  for (Eigen::Index t = 0; t < m.rows(); ++t)
    for (Eigen::Index j = 0; j < m.cols(); ++j) m(t, j) = g(rng);
  for (auto _ : state) {
    auto r = apm::cscv_pbo(m, 16);
    benchmark::DoNotOptimize(r.pbo);
  }
  state.SetLabel(std::to_string(m.cols()) + " trials");
}
BENCHMARK(BM_CscvPbo)->Arg(20)->Arg(100)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();

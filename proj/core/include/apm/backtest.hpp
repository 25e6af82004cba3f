#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "apm/blend.hpp"
#include "apm/panel.hpp"
#include "apm/portfolio.hpp"
#include "apm/pricing.hpp"

namespace apm {

/// Which characteristic subset the active (cross-sectional) model uses.
/// Variant 0 is the full set; the others are restricted views.
enum class ActiveModel : int {
  kAll = 0,        // bvtp, mv, moms, moml
  kValue = 1,      // bvtp, mv
  kMomentum = 2,   // moms, moml
  kValueMoms = 3,  // bvtp, moms
};

std::vector<std::string> active_model_chars(ActiveModel id);

struct HyperParams {
  double lambda_s = 0.99;
  double lambda_a = 0.95;
  double kappa_s = 0.3;
  double kappa_a = 0.3;
  double gamma_s = 10.0;
  double gamma_a = 10.0;
  ActiveModel active_model = ActiveModel::kAll;
  double rlma_step = 0.05;
  double rlma_huber_c = 2.0;
  double ridge = 1e-6;
  Eigen::Index universe_size = 100;
  double max_leverage = 2.0;
  Eigen::Index burn_in = 52;
  bool diagonal_omega = true;
  bool char_interactions = false;

  void validate() const;
  std::uint64_t digest() const;  // FNV-1a over the canonical encoding
  std::string encode() const;
};

enum class BenchmarkKind { kNaiveDiversification, kCapWeighted, kRiskFree };

struct BacktestResult {
  std::vector<std::string> dates;     // realization dates, length T'
  Eigen::VectorXd period_returns;     // realized portfolio excess returns
  Eigen::MatrixXd weights;            // T' x N, weights held over each period
  Eigen::MatrixXd component_returns;  // T' x 3: gmv, systematic, active
  Eigen::VectorXd turnover;           // vs drifted previous weights
  Eigen::VectorXd equity_curve;       // cumprod(1 + period_returns)
  std::vector<std::string> warnings;
  std::uint64_t config_digest = 0;

  Eigen::Index holding_periods() const { return period_returns.size(); }
};

struct PerformanceStats {
  double sharpe = 0.0;         // per-period (weekly), gross of costs
  double mean_turnover = 0.0;
  double ann_return = 0.0;
  double ann_vol = 0.0;
  double max_drawdown = 0.0;
};

/// One pass of the online loop per period: realize holdings, feed back
/// forecast errors, update models, forecast, blend, build the covariance
/// stack, decompose, project onto constraints, hold. First trade happens
/// after the burn-in; states of unavailable assets freeze.
BacktestResult run_backtest(const AssetPanel& panel, const FactorSeries& factors,
                            const HyperParams& hp, Eigen::Index start, Eigen::Index end);

/// ND / Cap / Rfr reference strategies with identical accounting.
BacktestResult run_benchmark(const AssetPanel& panel, BenchmarkKind kind,
                             const HyperParams& hp, Eigen::Index start, Eigen::Index end);

PerformanceStats performance_stats(const BacktestResult& result);

/// Weekly Sharpe ratio of an arbitrary excess-return series.
double sharpe_ratio(const Eigen::VectorXd& excess_returns);

}  // namespace apm

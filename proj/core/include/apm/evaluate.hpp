#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "apm/backtest.hpp"

namespace apm {

struct SplitRange {
  Eigen::Index begin = 0;  // half-open [begin, end)
  Eigen::Index end = 0;
};

struct WalkForwardSplit {
  SplitRange train;
  SplitRange validate;
};

/// Hyper-parameter grid: per-axis candidates applied on top of a base
/// configuration. Empty axes keep the base value.
struct GridSpec {
  std::vector<double> lambda_s, lambda_a;
  std::vector<double> kappa_s, kappa_a;
  std::vector<double> gamma_s, gamma_a;
  std::vector<ActiveModel> active_models;

  std::size_t size() const;
  std::vector<HyperParams> expand(const HyperParams& base) const;
};

/// Per-period strategy returns, one column per surviving configuration.
struct TrialMatrix {
  Eigen::MatrixXd returns;  // T x N_trials
  std::vector<HyperParams> configs;
};

struct TrialRank {
  std::size_t config_index = 0;
  double mean_validation_sr = 0.0;
  std::uint64_t digest = 0;
};

struct GridSearchResult {
  TrialMatrix trials;
  std::vector<TrialRank> ranking;  // best first
  std::vector<std::pair<std::size_t, std::string>> failures;
};

struct PboResult {
  double pbo = 0.5;
  std::vector<double> logits;
  bool degenerate = false;
};

struct RegressionFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
};

/// Expanding-window splits: fold k trains on [0, min_train + k*step) and
/// validates on the following block; the last block absorbs the tail.
std::vector<WalkForwardSplit> walk_forward_splits(Eigen::Index periods, int n_folds,
                                                  Eigen::Index min_train);

/// One online backtest per configuration over [start, end); fold
/// validation Sharpe ratios are sliced out of the single run (valid
/// because the strategy is online and look-ahead free). Failed configs
/// are recorded and excluded, never fatal.
GridSearchResult grid_search(const AssetPanel& panel, const FactorSeries& factors,
                             const HyperParams& base, const GridSpec& grid,
                             const std::vector<WalkForwardSplit>& splits,
                             Eigen::Index start, Eigen::Index end, int parallel = 1);

/// PSR = Phi((sr - sr_benchmark) sqrt(T-1) / sqrt(1 - skew sr + (kurt-1)/4 sr^2)).
double probabilistic_sr(double sr_hat, double sr_benchmark, Eigen::Index T, double skew,
                        double kurt);

/// DSR: PSR against the expected maximum Sharpe of n_trials null trials.
double deflated_sr(double sr_hat, Eigen::Index T, double skew, double kurt,
                   std::size_t n_trials, double var_trial_sr);

/// Expected-max null benchmark used by deflated_sr.
double expected_max_sharpe(std::size_t n_trials, double var_trial_sr);

/// Bonferroni haircut: SR -> t-stat -> p-value -> p*n -> adjusted SR.
double haircut_sr(double sr_hat, Eigen::Index T, std::size_t n_trials);

/// Combinatorially symmetric cross-validation probability of backtest
/// overfitting; S contiguous row blocks, midranks on ties.
PboResult cscv_pbo(const Eigen::MatrixXd& trial_returns, int S);

/// OLS of SR_OOS on SR_IS over (is, oos) pairs.
RegressionFit is_oos_regression(const std::vector<std::pair<double, double>>& pairs);

double skewness(const Eigen::VectorXd& x);
double kurtosis(const Eigen::VectorXd& x);  // non-excess (normal = 3)

}  // namespace apm

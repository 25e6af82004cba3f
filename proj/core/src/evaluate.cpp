#include "apm/evaluate.hpp"

#include <algorithm>
#include <atomic>
#include <boost/math/distributions/normal.hpp>
#include <cmath>
#include <thread>

namespace apm {
namespace {

double norm_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double norm_quantile(double p) {
  static const boost::math::normal_distribution<double> dist;
  return boost::math::quantile(dist, p);
}

constexpr double kEulerMascheroni = 0.57721566490153286;

}  // namespace

double skewness(const Eigen::VectorXd& x) {
  const auto n = static_cast<double>(x.size());
  if (n < 3) throw NumericError("skewness: need at least 3 observations");
  const double mean = x.mean();
  const double m2 = (x.array() - mean).square().mean();
  const double m3 = (x.array() - mean).cube().mean();
  if (m2 <= 0.0) throw NumericError("skewness: zero variance");
  return m3 / std::pow(m2, 1.5);
}

double kurtosis(const Eigen::VectorXd& x) {
  const auto n = static_cast<double>(x.size());
  if (n < 4) throw NumericError("kurtosis: need at least 4 observations");
  const double mean = x.mean();
  const double m2 = (x.array() - mean).square().mean();
  const double m4 = (x.array() - mean).pow(4).mean();
  if (m2 <= 0.0) throw NumericError("kurtosis: zero variance");
  return m4 / (m2 * m2);
}

std::vector<WalkForwardSplit> walk_forward_splits(Eigen::Index periods, int n_folds,
                                                  Eigen::Index min_train) {
  if (n_folds < 1) throw DataError("walk_forward_splits: need at least one fold");
  if (min_train < 1 || periods < min_train + n_folds)
    throw DataError("walk_forward_splits: infeasible sizes (T=" + std::to_string(periods) +
                    ", min_train=" + std::to_string(min_train) +
                    ", folds=" + std::to_string(n_folds) + ")");
  const Eigen::Index step = (periods - min_train) / n_folds;
  std::vector<WalkForwardSplit> splits;
  splits.reserve(static_cast<std::size_t>(n_folds));
  for (int k = 0; k < n_folds; ++k) {
    WalkForwardSplit s;
    s.train = {0, min_train + k * step};
    s.validate = {s.train.end, k + 1 == n_folds ? periods : min_train + (k + 1) * step};
    splits.push_back(s);
  }
  return splits;
}

std::size_t GridSpec::size() const {
  auto n = [](std::size_t k) { return k == 0 ? std::size_t{1} : k; };
  return n(lambda_s.size()) * n(lambda_a.size()) * n(kappa_s.size()) * n(kappa_a.size()) *
         n(gamma_s.size()) * n(gamma_a.size()) * n(active_models.size());
}

std::vector<HyperParams> GridSpec::expand(const HyperParams& base) const {
  auto axis = [](const std::vector<double>& v, double fallback) {
    return v.empty() ? std::vector<double>{fallback} : v;
  };
  const auto ls = axis(lambda_s, base.lambda_s);
  const auto la = axis(lambda_a, base.lambda_a);
  const auto ks = axis(kappa_s, base.kappa_s);
  const auto ka = axis(kappa_a, base.kappa_a);
  const auto gs = axis(gamma_s, base.gamma_s);
  const auto ga = axis(gamma_a, base.gamma_a);
  const auto models =
      active_models.empty() ? std::vector<ActiveModel>{base.active_model} : active_models;

  std::vector<HyperParams> out;
  out.reserve(size());
  for (auto m : models)
    for (double v_ls : ls)
      for (double v_la : la)
        for (double v_ks : ks)
          for (double v_ka : ka)
            for (double v_gs : gs)
              for (double v_ga : ga) {
                HyperParams hp = base;
                hp.active_model = m;
                hp.lambda_s = v_ls;
                hp.lambda_a = v_la;
                hp.kappa_s = v_ks;
                hp.kappa_a = v_ka;
                hp.gamma_s = v_gs;
                hp.gamma_a = v_ga;
                out.push_back(hp);
              }
  return out;
}

GridSearchResult grid_search(const AssetPanel& panel, const FactorSeries& factors,
                             const HyperParams& base, const GridSpec& grid,
                             const std::vector<WalkForwardSplit>& splits,
                             Eigen::Index start, Eigen::Index end, int parallel) {
  if (splits.empty()) throw DataError("grid_search: no splits");
  const auto configs = grid.expand(base);
  const auto n_cfg = configs.size();

  struct Trial {
    Eigen::VectorXd returns;
    double mean_val_sr = 0.0;
    bool ok = false;
    std::string error;
  };
  std::vector<Trial> trials(n_cfg);

  // Holding-period k realizes panel period start + burn_in + 1 + k.
  const auto period_of = [&](const HyperParams& hp, Eigen::Index k) {
    return start + hp.burn_in + 1 + k;
  };

  auto run_one = [&](std::size_t c) {
    Trial& tr = trials[c];
    try {
      const auto result = run_backtest(panel, factors, configs[c], start, end);
      tr.returns = result.period_returns;
      double acc = 0.0;
      for (const auto& split : splits) {
        std::vector<double> slice;
        for (Eigen::Index k = 0; k < tr.returns.size(); ++k) {
          const auto t = period_of(configs[c], k);
          if (t >= split.validate.begin && t < split.validate.end)
            slice.push_back(tr.returns(k));
        }
        if (slice.size() < 2)
          throw NumericError("validation fold too short after burn-in");
        acc += sharpe_ratio(Eigen::Map<const Eigen::VectorXd>(
            slice.data(), static_cast<Eigen::Index>(slice.size())));
      }
      tr.mean_val_sr = acc / static_cast<double>(splits.size());
      tr.ok = true;
    } catch (const std::exception& e) {
      tr.error = e.what();
    }
  };

  const int workers = std::max(1, std::min<int>(parallel, static_cast<int>(n_cfg)));
  if (workers == 1) {
    for (std::size_t c = 0; c < n_cfg; ++c) run_one(c);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w)
      pool.emplace_back([&] {
        for (std::size_t c = next.fetch_add(1); c < n_cfg; c = next.fetch_add(1)) run_one(c);
      });
    for (auto& th : pool) th.join();
  }

  GridSearchResult out;
  Eigen::Index T_hold = -1;
  for (std::size_t c = 0; c < n_cfg; ++c) {
    if (!trials[c].ok) {
      out.failures.emplace_back(c, trials[c].error);
      continue;
    }
    if (T_hold < 0) T_hold = trials[c].returns.size();
    if (trials[c].returns.size() != T_hold) {
      out.failures.emplace_back(c, "return series length mismatch across configs");
      trials[c].ok = false;
      continue;
    }
  }
  std::size_t n_ok = 0;
  for (const auto& tr : trials) n_ok += tr.ok ? 1 : 0;
  out.trials.returns.resize(std::max<Eigen::Index>(T_hold, 0), static_cast<Eigen::Index>(n_ok));
  out.trials.configs.reserve(n_ok);
  Eigen::Index col = 0;
  for (std::size_t c = 0; c < n_cfg; ++c) {
    if (!trials[c].ok) continue;
    out.trials.returns.col(col++) = trials[c].returns;
    out.trials.configs.push_back(configs[c]);
    TrialRank r;
    r.config_index = out.trials.configs.size() - 1;
    r.mean_validation_sr = trials[c].mean_val_sr;
    r.digest = configs[c].digest();
    out.ranking.push_back(r);
  }
  std::sort(out.ranking.begin(), out.ranking.end(), [](const TrialRank& a, const TrialRank& b) {
    if (a.mean_validation_sr != b.mean_validation_sr)
      return a.mean_validation_sr > b.mean_validation_sr;
    return a.digest < b.digest;
  });
  return out;
}

double probabilistic_sr(double sr_hat, double sr_benchmark, Eigen::Index T, double skew,
                        double kurt) {
  if (T < 2) throw DataError("probabilistic_sr: T must be >= 2");
  const double denom = 1.0 - skew * sr_hat + 0.25 * (kurt - 1.0) * sr_hat * sr_hat;
  if (denom <= 0.0)
    throw NumericError("probabilistic_sr: invalid variance of the SR estimator");
  return norm_cdf((sr_hat - sr_benchmark) * std::sqrt(static_cast<double>(T - 1)) /
                  std::sqrt(denom));
}

double expected_max_sharpe(std::size_t n_trials, double var_trial_sr) {
  if (n_trials < 1) throw DataError("expected_max_sharpe: n_trials must be >= 1");
  if (var_trial_sr < 0.0) throw DataError("expected_max_sharpe: negative variance");
  if (n_trials == 1 || var_trial_sr == 0.0) return 0.0;
  const double n = static_cast<double>(n_trials);
  return std::sqrt(var_trial_sr) *
         ((1.0 - kEulerMascheroni) * norm_quantile(1.0 - 1.0 / n) +
          kEulerMascheroni * norm_quantile(1.0 - 1.0 / (n * std::numbers::e)));
}

double deflated_sr(double sr_hat, Eigen::Index T, double skew, double kurt,
                   std::size_t n_trials, double var_trial_sr) {
  return probabilistic_sr(sr_hat, expected_max_sharpe(n_trials, var_trial_sr), T, skew, kurt);
}

double haircut_sr(double sr_hat, Eigen::Index T, std::size_t n_trials) {
  if (T < 2) throw DataError("haircut_sr: T must be >= 2");
  if (n_trials < 1) throw DataError("haircut_sr: n_trials must be >= 1");
  const double scale = std::sqrt(static_cast<double>(T - 1));
  const double t_stat = std::abs(sr_hat) * scale;
  const double p = 2.0 * (1.0 - norm_cdf(t_stat));
  const double p_adj = std::min(1.0, p * static_cast<double>(n_trials));
  if (p_adj >= 1.0) return 0.0;
  const double t_adj = norm_quantile(1.0 - p_adj / 2.0);
  return std::copysign(t_adj / scale, sr_hat);
}

PboResult cscv_pbo(const Eigen::MatrixXd& trial_returns, int S) {
  const auto T = trial_returns.rows();
  const auto N = trial_returns.cols();
  if (S < 2 || S % 2 != 0) throw DataError("cscv_pbo: S must be even and >= 2");
  if (S > T) throw DataError("cscv_pbo: more blocks than periods");
  if (N < 2) throw DataError("cscv_pbo: need at least 2 trial columns");

  PboResult out;
  bool identical = true;
  for (Eigen::Index j = 1; j < N && identical; ++j)
    identical = (trial_returns.col(j) - trial_returns.col(0)).lpNorm<Eigen::Infinity>() == 0.0;
  if (identical) {
    out.degenerate = true;
    out.pbo = 0.5;
    return out;
  }

  // Per-block sufficient statistics per column.
  Eigen::MatrixXd bsum(S, N), bsq(S, N);
  Eigen::VectorXd bcount(S);
  for (int b = 0; b < S; ++b) {
    const auto lo = static_cast<Eigen::Index>(static_cast<long>(b) * T / S);
    const auto hi = static_cast<Eigen::Index>(static_cast<long>(b + 1) * T / S);
    bcount(b) = static_cast<double>(hi - lo);
    for (Eigen::Index j = 0; j < N; ++j) {
      const auto seg = trial_returns.col(j).segment(lo, hi - lo);
      bsum(b, j) = seg.sum();
      bsq(b, j) = seg.squaredNorm();
    }
  }

  auto block_sr = [&](const std::vector<int>& blocks, Eigen::Index j) {
    double s = 0.0, sq = 0.0, n = 0.0;
    for (int b : blocks) {
      s += bsum(b, j);
      sq += bsq(b, j);
      n += bcount(b);
    }
    const double mean = s / n;
    const double var = std::max(0.0, (sq - n * mean * mean) / (n - 1.0));
    return var > 0.0 ? mean / std::sqrt(var) : 0.0;
  };

  const int half = S / 2;
  std::vector<int> pick(static_cast<std::size_t>(half));
  for (int i = 0; i < half; ++i) pick[static_cast<std::size_t>(i)] = i;
  std::vector<int> complement;
  std::vector<double> oos_sr(static_cast<std::size_t>(N));

  std::size_t n_overfit = 0;
  while (true) {
    complement.clear();
    {
      std::size_t k = 0;
      for (int b = 0; b < S; ++b) {
        if (k < pick.size() && pick[k] == b)
          ++k;
        else
          complement.push_back(b);
      }
    }
    Eigen::Index best = 0;
    double best_sr = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < N; ++j) {
      const double sr = block_sr(pick, j);
      if (sr > best_sr) {
        best_sr = sr;
        best = j;
      }
    }
    for (Eigen::Index j = 0; j < N; ++j) oos_sr[static_cast<std::size_t>(j)] = block_sr(complement, j);

    const double chosen = oos_sr[static_cast<std::size_t>(best)];
    double less = 0.0, equal = 0.0;
    for (double v : oos_sr) {
      if (v < chosen) ++less;
      if (v == chosen) ++equal;
    }
    const double midrank = less + 0.5 * (equal + 1.0);  // in [1, N]
    const double omega = midrank / (static_cast<double>(N) + 1.0);
    const double logit = std::log(omega / (1.0 - omega));
    out.logits.push_back(logit);
    if (logit <= 0.0) ++n_overfit;

    // next lexicographic combination
    int i = half - 1;
    while (i >= 0 && pick[static_cast<std::size_t>(i)] == S - half + i) --i;
    if (i < 0) break;
    ++pick[static_cast<std::size_t>(i)];
    for (int k = i + 1; k < half; ++k)
      pick[static_cast<std::size_t>(k)] = pick[static_cast<std::size_t>(k - 1)] + 1;
  }

  out.pbo = static_cast<double>(n_overfit) / static_cast<double>(out.logits.size());
  return out;
}

RegressionFit is_oos_regression(const std::vector<std::pair<double, double>>& pairs) {
  if (pairs.size() < 3) throw DataError("is_oos_regression: need at least 3 pairs");
  const auto n = static_cast<double>(pairs.size());
  double sx = 0.0, sy = 0.0;
  for (const auto& [x, y] : pairs) {
    sx += x;
    sy += y;
  }
  const double mx = sx / n, my = sy / n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (const auto& [x, y] : pairs) {
    sxx += (x - mx) * (x - mx);
    sxy += (x - mx) * (y - my);
    syy += (y - my) * (y - my);
  }
  if (sxx <= 0.0) throw NumericError("is_oos_regression: in-sample SRs have zero variance");
  RegressionFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  fit.r2 = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 1.0;
  return fit;
}

}  // namespace apm

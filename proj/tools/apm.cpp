// apm: weekly portfolio engine driver.
//
// Subcommands: ingest, generate, backtest, calibrate, evaluate, pbo.
// Every run is driven by one config file; artifacts embed the
// hyper-parameter digest so outputs from different configs never collide.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <json.hpp>
#include <sstream>

#include "apm/backtest.hpp"
#include "apm/config.hpp"
#include "apm/errors.hpp"
#include "apm/evaluate.hpp"
#include "apm/panel.hpp"
#include "apm/synth.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

struct CliOptions {
  std::string config_path;
  std::string out_override;
  int parallel = 1;
  long seed_override = -1;
};

std::string digest_hex(std::uint64_t digest) {
  std::ostringstream os;
  os << std::hex << std::setfill('0') << std::setw(16) << digest;
  return os.str();
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

apm::RunConfig load_config(const CliOptions& opt) {
  if (opt.config_path.empty()) throw apm::DataError("--config is required");
  apm::RunConfig cfg = apm::load_run_config(opt.config_path);
  if (!opt.out_override.empty()) cfg.output_dir = opt.out_override;
  if (opt.seed_override >= 0) {
    cfg.seed = static_cast<std::uint64_t>(opt.seed_override);
    cfg.synth.seed = cfg.seed;
  }
  return cfg;
}

struct Market {
  apm::AssetPanel panel;
  apm::FactorSeries factors;
};

apm::GeneratorSpec generator_spec(const apm::RunConfig& cfg) {
  apm::GeneratorSpec spec;
  spec.n_assets = cfg.synth.n_assets;
  spec.periods = cfg.synth.n_periods;
  spec.n_factors = cfg.synth.n_factors;
  spec.idio_vol = Eigen::VectorXd::Constant(cfg.synth.n_assets, cfg.synth.idio_vol);
  if (cfg.synth.planted_bvtp_payoff != 0.0) {
    spec.planted_payoffs = Eigen::VectorXd::Zero(5);
    spec.planted_payoffs(1) = cfg.synth.planted_bvtp_payoff;
  }
  if (cfg.synth.payoff_half_life_weeks)
    spec.payoff_half_life_weeks = *cfg.synth.payoff_half_life_weeks;
  spec.student_t = cfg.synth.student_t;
  spec.seed = cfg.synth.seed;
  return spec;
}

// Loads the CSV triplet when a data directory is configured, otherwise
// synthesizes a market from the [synth] table.
Market load_market(const apm::RunConfig& cfg) {
  if (!cfg.data_dir.empty()) {
    const fs::path dir = cfg.data_dir;
    apm::AssetPanel panel = apm::compute_momentum(apm::load_panel(
        (dir / "prices.csv").string(), (dir / "characteristics.csv").string(),
        (dir / "rf.csv").string()));
    apm::FactorSeries factors = apm::build_factor_portfolios(panel);
    return {std::move(panel), std::move(factors)};
  }
  auto market = apm::generate(generator_spec(cfg));
  return {std::move(market.panel), std::move(market.factors)};
}

void write_text(const fs::path& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw apm::DataError("cannot write " + path.string());
  out << body;
}

void write_json(const fs::path& path, const json& doc) { write_text(path, doc.dump(2) + "\n"); }

json stats_json(const apm::BacktestResult& r) {
  const apm::PerformanceStats s = apm::performance_stats(r);
  return json{{"sharpe_weekly", s.sharpe},
              {"ann_return", s.ann_return},
              {"ann_vol", s.ann_vol},
              {"max_drawdown", s.max_drawdown},
              {"mean_turnover", s.mean_turnover},
              {"holding_periods", r.holding_periods()},
              {"warnings", r.warnings}};
}

void write_backtest_artifacts(const fs::path& out_dir, const apm::AssetPanel& panel,
                              const apm::BacktestResult& algo, const apm::BacktestResult& nd,
                              const apm::BacktestResult& cap, const apm::BacktestResult& rfr) {
  fs::create_directories(out_dir);
  {
    std::ostringstream os;
    os << "date,algo,nd,cap,rfr\n";
    for (Eigen::Index k = 0; k < algo.holding_periods(); ++k)
      os << algo.dates[static_cast<std::size_t>(k)] << "," << fmt(algo.equity_curve(k + 1)) << ","
         << fmt(nd.equity_curve(k + 1)) << "," << fmt(cap.equity_curve(k + 1)) << ","
         << fmt(rfr.equity_curve(k + 1)) << "\n";
    write_text(out_dir / "equity_curve.csv", os.str());
  }
  {
    std::ostringstream os;
    os << "date,gmv,sys,act\n";
    for (Eigen::Index k = 0; k < algo.holding_periods(); ++k)
      os << algo.dates[static_cast<std::size_t>(k)] << "," << fmt(algo.component_returns(k, 0))
         << "," << fmt(algo.component_returns(k, 1)) << "," << fmt(algo.component_returns(k, 2))
         << "\n";
    write_text(out_dir / "components.csv", os.str());
  }
  {
    std::ostringstream os;
    os << "date,asset_id,weight\n";
    for (Eigen::Index k = 0; k < algo.holding_periods(); ++k)
      for (Eigen::Index i = 0; i < algo.weights.cols(); ++i)
        if (algo.weights(k, i) != 0.0)
          os << algo.dates[static_cast<std::size_t>(k)] << ","
             << panel.asset_ids[static_cast<std::size_t>(i)] << "," << fmt(algo.weights(k, i))
             << "\n";
    write_text(out_dir / "weights.csv", os.str());
  }
  json stats{{"config_digest", digest_hex(algo.config_digest)},
             {"algo", stats_json(algo)},
             {"nd", stats_json(nd)},
             {"cap", stats_json(cap)},
             {"rfr", stats_json(rfr)}};
  write_json(out_dir / "stats.json", stats);
}

json hyper_json(const apm::HyperParams& hp) {
  static const char* kModelNames[] = {"all", "value", "momentum", "value_moms"};
  return json{{"lambda_s", hp.lambda_s},
              {"lambda_a", hp.lambda_a},
              {"kappa_s", hp.kappa_s},
              {"kappa_a", hp.kappa_a},
              {"gamma_s", hp.gamma_s},
              {"gamma_a", hp.gamma_a},
              {"active_model", kModelNames[static_cast<int>(hp.active_model)]},
              {"universe_size", hp.universe_size},
              {"max_leverage", hp.max_leverage},
              {"burn_in", hp.burn_in},
              {"digest", digest_hex(hp.digest())}};
}

Eigen::VectorXd slice_segment(const Eigen::VectorXd& returns, Eigen::Index burn_in,
                              Eigen::Index lo, Eigen::Index hi) {
  std::vector<double> slice;
  for (Eigen::Index k = 0; k < returns.size(); ++k) {
    const Eigen::Index t = burn_in + 1 + k;
    if (t >= lo && t < hi) slice.push_back(returns(k));
  }
  return Eigen::Map<const Eigen::VectorXd>(slice.data(),
                                           static_cast<Eigen::Index>(slice.size()));
}

double sliced_sr(const Eigen::VectorXd& returns, Eigen::Index burn_in, Eigen::Index lo,
                 Eigen::Index hi) {
  const Eigen::VectorXd seg = slice_segment(returns, burn_in, lo, hi);
  if (seg.size() < 2) throw apm::NumericError("segment too short for a Sharpe ratio");
  return apm::sharpe_ratio(seg);
}

// One Table-style cell: SR / PSR-vs-zero / mean turnover over a segment.
json segment_stats(const apm::BacktestResult& r, Eigen::Index burn_in, Eigen::Index lo,
                   Eigen::Index hi) {
  const Eigen::VectorXd seg = slice_segment(r.period_returns, burn_in, lo, hi);
  const Eigen::VectorXd to = slice_segment(r.turnover, burn_in, lo, hi);
  json cell{{"sr", 0.0}, {"psr", 0.5}, {"turnover", to.size() ? to.mean() : 0.0}};
  if (seg.size() >= 4) {
    const double mean = seg.mean();
    const double sd =
        std::sqrt((seg.array() - mean).square().sum() / static_cast<double>(seg.size() - 1));
    if (sd > 0.0) {
      const double sr = mean / sd;
      cell["sr"] = sr;
      try {
        cell["psr"] =
            apm::probabilistic_sr(sr, 0.0, seg.size(), apm::skewness(seg), apm::kurtosis(seg));
      } catch (const apm::NumericError&) {
        // leave the 0.5 placeholder when the PSR denominator degenerates
      }
    }
  }
  return cell;
}

int cmd_ingest(const CliOptions& opt) {
  const apm::RunConfig cfg = load_config(opt);
  if (cfg.data_dir.empty()) throw apm::DataError("ingest requires data.dir in the config");
  const Market mkt = load_market(cfg);
  mkt.panel.validate();
  fs::create_directories(cfg.output_dir);
  json summary{{"assets", mkt.panel.assets()},
               {"periods", mkt.panel.periods()},
               {"characteristics", mkt.panel.num_chars()},
               {"factor_periods_available",
                static_cast<long>(mkt.factors.factor_available.cast<int>().sum())},
               {"first_date", mkt.panel.dates.front()},
               {"last_date", mkt.panel.dates.back()}};
  write_json(fs::path(cfg.output_dir) / "panel_summary.json", summary);
  std::cout << summary.dump(2) << "\n";
  return kExitOk;
}

int cmd_generate(const CliOptions& opt) {
  const apm::RunConfig cfg = load_config(opt);
  const auto market = apm::generate(generator_spec(cfg));
  fs::create_directories(cfg.output_dir);
  apm::write_panel_csv(market.panel, cfg.output_dir);
  std::cout << "wrote synthetic market (" << market.panel.assets() << " assets, "
            << market.panel.periods() << " periods) to " << cfg.output_dir << "\n";
  return kExitOk;
}

int cmd_backtest(const CliOptions& opt) {
  const apm::RunConfig cfg = load_config(opt);
  const Market mkt = load_market(cfg);
  const Eigen::Index T = mkt.panel.periods();
  const auto algo = apm::run_backtest(mkt.panel, mkt.factors, cfg.hyper, 0, T);
  const auto nd =
      apm::run_benchmark(mkt.panel, apm::BenchmarkKind::kNaiveDiversification, cfg.hyper, 0, T);
  const auto cap = apm::run_benchmark(mkt.panel, apm::BenchmarkKind::kCapWeighted, cfg.hyper, 0, T);
  const auto rfr = apm::run_benchmark(mkt.panel, apm::BenchmarkKind::kRiskFree, cfg.hyper, 0, T);
  write_backtest_artifacts(cfg.output_dir, mkt.panel, algo, nd, cap, rfr);
  std::cout << "backtest " << digest_hex(algo.config_digest) << ": "
            << algo.holding_periods() << " holding periods, SR "
            << apm::performance_stats(algo).sharpe << " -> " << cfg.output_dir << "\n";
  return kExitOk;
}

int cmd_evaluate(const CliOptions& opt) {
  const apm::RunConfig cfg = load_config(opt);
  const Market mkt = load_market(cfg);
  const Eigen::Index T = mkt.panel.periods();
  const auto result = apm::run_backtest(mkt.panel, mkt.factors, cfg.hyper, 0, T);
  const Eigen::VectorXd& r = result.period_returns;
  const double sr = apm::sharpe_ratio(r);
  json report{{"config_digest", digest_hex(result.config_digest)},
              {"stats", stats_json(result)},
              {"skewness", apm::skewness(r)},
              {"kurtosis", apm::kurtosis(r)},
              {"psr_vs_zero", apm::probabilistic_sr(sr, 0.0, r.size(), apm::skewness(r),
                                                    apm::kurtosis(r))}};
  fs::create_directories(cfg.output_dir);
  write_json(fs::path(cfg.output_dir) / "report.json", report);
  std::cout << report.dump(2) << "\n";
  return kExitOk;
}

// Shared by calibrate and pbo: run the grid once over the whole sample with
// validation folds confined to the in-sample segment, then slice IS/OOS.
struct GridRun {
  apm::GridSearchResult search;
  Eigen::Index is_end = 0;
  Eigen::Index periods = 0;
};

GridRun run_grid(const apm::RunConfig& cfg, const Market& mkt, int parallel) {
  if (cfg.grid.size() < 1) throw apm::DataError("calibrate requires a [grid] table");
  GridRun run;
  run.periods = mkt.panel.periods();
  run.is_end = static_cast<Eigen::Index>(cfg.split.is_fraction * static_cast<double>(run.periods));
  const Eigen::Index warmup = cfg.hyper.burn_in + 1;
  if (run.is_end <= warmup + cfg.split.min_train)
    throw apm::DataError("in-sample segment too short for the configured burn-in and folds");
  auto splits = apm::walk_forward_splits(run.is_end - warmup, cfg.split.n_folds,
                                         cfg.split.min_train);
  for (auto& s : splits) {  // shift fold boundaries past the burn-in
    s.train.begin += warmup;
    s.train.end += warmup;
    s.validate.begin += warmup;
    s.validate.end += warmup;
  }
  run.search = apm::grid_search(mkt.panel, mkt.factors, cfg.hyper, cfg.grid, splits, 0,
                                run.periods, parallel);
  if (run.search.ranking.empty()) throw apm::NumericError("every grid trial failed");
  return run;
}

int cmd_calibrate(const CliOptions& opt) {
  const apm::RunConfig cfg = load_config(opt);
  const Market mkt = load_market(cfg);
  const GridRun run = run_grid(cfg, mkt, opt.parallel);
  const auto& trials = run.search.trials;
  const Eigen::Index burn_in = cfg.hyper.burn_in;

  std::vector<double> is_sr(trials.configs.size()), oos_sr(trials.configs.size());
  std::vector<std::pair<double, double>> pairs;
  for (std::size_t c = 0; c < trials.configs.size(); ++c) {
    is_sr[c] = sliced_sr(trials.returns.col(static_cast<Eigen::Index>(c)), burn_in, 0, run.is_end);
    oos_sr[c] = sliced_sr(trials.returns.col(static_cast<Eigen::Index>(c)), burn_in, run.is_end,
                          run.periods);
    pairs.emplace_back(is_sr[c], oos_sr[c]);
  }

  // IS rows only feed the overfitting statistics.
  Eigen::Index is_rows = 0;
  for (Eigen::Index k = 0; k < trials.returns.rows(); ++k)
    if (burn_in + 1 + k < run.is_end) ++is_rows;
  const Eigen::MatrixXd is_matrix = trials.returns.topRows(is_rows);
  const apm::PboResult pbo = apm::cscv_pbo(is_matrix, cfg.cscv_blocks);

  const auto& best = run.search.ranking.front();
  const std::size_t sel = best.config_index;
  const Eigen::VectorXd oos_returns =
      trials.returns.col(static_cast<Eigen::Index>(sel)).tail(trials.returns.rows() - is_rows);
  const double sel_oos_sr = oos_sr[sel];
  const double skew = apm::skewness(oos_returns);
  const double kurt = apm::kurtosis(oos_returns);
  const std::size_t n_trials = trials.configs.size();
  double var_sr = 0.0;
  if (n_trials > 1) {
    const double mean_sr =
        std::accumulate(is_sr.begin(), is_sr.end(), 0.0) / static_cast<double>(n_trials);
    for (double v : is_sr) var_sr += (v - mean_sr) * (v - mean_sr);
    var_sr /= static_cast<double>(n_trials - 1);
  }
  const double psr = apm::probabilistic_sr(sel_oos_sr, 0.0, oos_returns.size(), skew, kurt);
  const double dsr = apm::deflated_sr(sel_oos_sr, oos_returns.size(), skew, kurt, n_trials, var_sr);
  const double hsr = apm::haircut_sr(sel_oos_sr, oos_returns.size(), n_trials);

  // Headline table: SR / PSR / turnover for the selected strategy and the
  // reference strategies, split in-sample vs out-of-sample.
  const apm::HyperParams& sel_hp = trials.configs[sel];
  const auto algo_run = apm::run_backtest(mkt.panel, mkt.factors, sel_hp, 0, run.periods);
  const auto nd_run = apm::run_benchmark(mkt.panel, apm::BenchmarkKind::kNaiveDiversification,
                                         sel_hp, 0, run.periods);
  const auto cap_run =
      apm::run_benchmark(mkt.panel, apm::BenchmarkKind::kCapWeighted, sel_hp, 0, run.periods);
  const auto table_segment = [&](Eigen::Index lo, Eigen::Index hi) {
    json seg{{"algo", segment_stats(algo_run, burn_in, lo, hi)},
             {"nd", segment_stats(nd_run, burn_in, lo, hi)},
             {"cap", segment_stats(cap_run, burn_in, lo, hi)}};
    const Eigen::VectorXd r = slice_segment(algo_run.period_returns, burn_in, lo, hi);
    if (r.size() >= 4) {
      try {
        seg["algo"]["dsr"] = apm::deflated_sr(apm::sharpe_ratio(r), r.size(), apm::skewness(r),
                                              apm::kurtosis(r), n_trials, var_sr);
      } catch (const apm::NumericError&) {
      }
    }
    return seg;
  };
  json table{{"is", table_segment(0, run.is_end)}, {"oos", table_segment(run.is_end, run.periods)}};

  json report{{"selected_config", hyper_json(trials.configs[sel])},
              {"table", table},
              {"selected_mean_validation_sr", best.mean_validation_sr},
              {"selected_is_sr", is_sr[sel]},
              {"selected_oos_sr", sel_oos_sr},
              {"psr", psr},
              {"dsr", dsr},
              {"hsr", hsr},
              {"pbo", pbo.pbo},
              {"pbo_degenerate", pbo.degenerate},
              {"n_trials", n_trials},
              {"n_failed", run.search.failures.size()},
              {"var_trial_sr", var_sr}};
  report["regression"] = {{"slope", nullptr}, {"intercept", nullptr}, {"r2", nullptr}};
  if (pairs.size() >= 3) {
    try {
      const apm::RegressionFit fit = apm::is_oos_regression(pairs);
      report["regression"] = {{"slope", fit.slope}, {"intercept", fit.intercept}, {"r2", fit.r2}};
    } catch (const apm::NumericError& e) {
      report["regression_error"] = e.what();
    }
  } else {
    report["regression_error"] = "fewer than 3 (is, oos) pairs";
  }

  const fs::path out_dir = cfg.output_dir;
  fs::create_directories(out_dir);
  write_json(out_dir / "report.json", report);
  {
    std::ostringstream os;
    os << "digest,active_model,lambda_s,lambda_a,kappa_s,kappa_a,gamma_s,gamma_a,"
          "mean_validation_sr,is_sr,oos_sr\n";
    for (const auto& rank : run.search.ranking) {
      const auto& hp = trials.configs[rank.config_index];
      os << digest_hex(rank.digest) << "," << static_cast<int>(hp.active_model) << ","
         << fmt(hp.lambda_s) << "," << fmt(hp.lambda_a) << "," << fmt(hp.kappa_s) << ","
         << fmt(hp.kappa_a) << "," << fmt(hp.gamma_s) << "," << fmt(hp.gamma_a) << ","
         << fmt(rank.mean_validation_sr) << "," << fmt(is_sr[rank.config_index]) << ","
         << fmt(oos_sr[rank.config_index]) << "\n";
    }
    write_text(out_dir / "trials.csv", os.str());
  }
  {
    std::ostringstream os;
    os << "logit\n";
    for (double v : pbo.logits) os << fmt(v) << "\n";
    write_text(out_dir / "logits.csv", os.str());
  }
  std::cout << "calibrate: selected " << digest_hex(best.digest) << ", OOS SR " << sel_oos_sr
            << ", PBO " << pbo.pbo << " -> " << out_dir.string() << "\n";
  return kExitOk;
}

int cmd_pbo(const CliOptions& opt) {
  const apm::RunConfig cfg = load_config(opt);
  const Market mkt = load_market(cfg);
  const GridRun run = run_grid(cfg, mkt, opt.parallel);
  const apm::PboResult pbo = apm::cscv_pbo(run.search.trials.returns, cfg.cscv_blocks);
  const fs::path out_dir = cfg.output_dir;
  fs::create_directories(out_dir);
  json report{{"pbo", pbo.pbo},
              {"degenerate", pbo.degenerate},
              {"combinations", pbo.logits.size()},
              {"n_trials", run.search.trials.configs.size()},
              {"cscv_blocks", cfg.cscv_blocks}};
  write_json(out_dir / "pbo.json", report);
  {
    std::ostringstream os;
    os << "logit\n";
    for (double v : pbo.logits) os << fmt(v) << "\n";
    write_text(out_dir / "logits.csv", os.str());
  }
  std::cout << report.dump(2) << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"apm: adaptive weekly portfolio engine"};
  app.require_subcommand(1);
  CliOptions opt;

  const auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", opt.config_path, "path to the run config file");
    sub->add_option("--out", opt.out_override, "override the output directory");
    sub->add_option("--parallel", opt.parallel, "max concurrent grid trials")
        ->check(CLI::PositiveNumber);
    sub->add_option("--seed", opt.seed_override, "override the run seed");
    return sub;
  };

  auto* ingest = add_common(app.add_subcommand("ingest", "load and validate a CSV panel"));
  auto* generate = add_common(app.add_subcommand("generate", "write a synthetic market"));
  auto* backtest = add_common(app.add_subcommand("backtest", "run the strategy and benchmarks"));
  auto* calibrate =
      add_common(app.add_subcommand("calibrate", "walk-forward grid search + overfit report"));
  auto* evaluate = add_common(app.add_subcommand("evaluate", "single-config performance report"));
  auto* pbo = add_common(app.add_subcommand("pbo", "probability of backtest overfitting"));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (ingest->parsed()) return cmd_ingest(opt);
    if (generate->parsed()) return cmd_generate(opt);
    if (backtest->parsed()) return cmd_backtest(opt);
    if (calibrate->parsed()) return cmd_calibrate(opt);
    if (evaluate->parsed()) return cmd_evaluate(opt);
    if (pbo->parsed()) return cmd_pbo(opt);
  } catch (const apm::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const apm::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}

#pragma once

#include <cstdint>
#include <string>

#include "apm/panel.hpp"

namespace apm {

/// Ground-truth market: excess returns composed as
///   r_e[i,t] = alpha[i,t-1] + beta_i . f_t + eps[i,t]
/// with alpha driven by planted characteristic payoffs on lagged
/// characteristics. Everything is reproducible from the seed.
struct GeneratorSpec {
  Eigen::Index n_assets = 50;
  Eigen::Index periods = 500;
  Eigen::Index n_factors = 2;

  // Empty matrices/vectors mean "draw defaults from the seed".
  Eigen::MatrixXd true_betas;      // N x P, default U[0.5, 1.5]
  Eigen::VectorXd factor_vol;      // P, default 0.02 weekly
  Eigen::VectorXd factor_premia;   // P, default 0.001 weekly
  Eigen::VectorXd idio_vol;        // N, default 0.03 weekly

  // [intercept, bvtp, mv, moms, moml]; the bvtp slot is the usual plant.
  Eigen::VectorXd planted_payoffs;
  double payoff_half_life_weeks = 0.0;  // 0 = constant payoffs

  double rf_rate = 0.0005;
  bool student_t = false;  // heavy-tailed idiosyncratic noise (df=5)
  double t_dof = 5.0;
  std::uint64_t seed = 1;
};

struct GeneratorTruth {
  Eigen::MatrixXd betas;         // N x P
  Eigen::VectorXd factor_vol;
  Eigen::VectorXd factor_premia;
  Eigen::VectorXd idio_vol;
  Eigen::MatrixXd payoff_path;   // T x (M+1), the payoff active at each t
};

struct SyntheticMarket {
  AssetPanel panel;
  FactorSeries factors;
  GeneratorTruth truth;
};

SyntheticMarket generate(const GeneratorSpec& spec);

/// Persist a panel in the load_panel CSV schema (prices.csv,
/// characteristics.csv, rf.csv under dir).
void write_panel_csv(const AssetPanel& panel, const std::string& dir);

}  // namespace apm

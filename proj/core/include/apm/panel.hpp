#pragma once

#include <Eigen/Dense>
#include <atomic>
#include <memory>
#include <string>
#include <vector>

#include "apm/errors.hpp"

namespace apm {

using BoolArray = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

/// Canonical characteristic slots. The characteristic set is extensible;
/// these four are the defaults and the ones the engineered features fill.
namespace chars {
inline constexpr const char* kBVTP = "bvtp";
inline constexpr const char* kMV = "mv";
inline constexpr const char* kMOMS = "moms";
inline constexpr const char* kMOML = "moml";
}  // namespace chars

/// Aligned time x asset panel. Immutable after load; shared read-only
/// across parallel backtests. Cells with available=false hold NaN and
/// must never enter any estimate -- the masked-read counter exists so
/// tests can assert that.
struct AssetPanel {
  std::vector<std::string> dates;      // ISO-8601, strictly increasing
  std::vector<std::string> asset_ids;  // ascending
  Eigen::MatrixXd returns;             // T x N simple total returns
  Eigen::MatrixXd excess_returns;      // T x N, returns - rf
  BoolArray available;                 // T x N
  Eigen::VectorXd rf;                  // T
  std::vector<std::string> char_names;
  std::vector<Eigen::MatrixXd> characteristics;  // per name, T x N, NaN = absent
  Eigen::MatrixXd macro;                         // T x K, K may be 0

  AssetPanel() : masked_reads_(std::make_shared<std::atomic<long>>(0)) {}

  Eigen::Index periods() const { return returns.rows(); }
  Eigen::Index assets() const { return returns.cols(); }
  Eigen::Index num_chars() const { return static_cast<Eigen::Index>(characteristics.size()); }
  Eigen::Index macro_vars() const { return macro.cols(); }

  bool is_available(Eigen::Index t, Eigen::Index i) const { return available(t, i); }

  /// Instrumented accessors: reading a masked cell is counted, not fatal.
  double excess_at(Eigen::Index t, Eigen::Index i) const {
    if (!available(t, i)) ++*masked_reads_;
    return excess_returns(t, i);
  }
  double return_at(Eigen::Index t, Eigen::Index i) const {
    if (!available(t, i)) ++*masked_reads_;
    return returns(t, i);
  }
  double char_at(Eigen::Index m, Eigen::Index t, Eigen::Index i) const {
    if (!available(t, i)) ++*masked_reads_;
    return characteristics[static_cast<std::size_t>(m)](t, i);
  }
  bool char_present(Eigen::Index m, Eigen::Index t, Eigen::Index i) const {
    return available(t, i) &&
           std::isfinite(characteristics[static_cast<std::size_t>(m)](t, i));
  }

  Eigen::Index char_index(const std::string& name) const;

  long masked_read_count() const { return masked_reads_->load(); }
  void reset_masked_read_count() const { masked_reads_->store(0); }

  /// Structural consistency check; throws DataError on violation.
  void validate() const;

 private:
  std::shared_ptr<std::atomic<long>> masked_reads_;
};

/// Long-short factor-mimicking portfolio returns (SMB, HML by default).
struct FactorSeries {
  std::vector<std::string> factor_names;
  Eigen::MatrixXd factor_returns;                 // T x P, NaN where unavailable
  Eigen::Array<bool, Eigen::Dynamic, 1> factor_available;  // T
  Eigen::MatrixXd breakpoints;  // T x 3: mv median, bvtp 30%, bvtp 70%

  Eigen::Index periods() const { return factor_returns.rows(); }
  Eigen::Index factors() const { return factor_returns.cols(); }
};

struct FactorConfig {
  double value_lo_quantile = 0.30;  // bottom leg of the BVTP sort
  double value_hi_quantile = 0.70;  // top leg starts here
  int min_leg_size = 1;
};

/// Load the CSV triplet (prices, characteristics, risk-free) into an
/// aligned panel. The rf file defines the date grid. A missing price at t
/// makes the stock uninvestible for t and t+1: no return is computable
/// into or out of the gap.
AssetPanel load_panel(const std::string& prices_path,
                      const std::string& characteristics_path,
                      const std::string& rf_path);

/// Engineer MOMS (13-week) and MOML (52-week) cumulative simple returns.
/// A gap anywhere in the lookback window leaves the cell NaN.
AssetPanel compute_momentum(AssetPanel panel);

/// Weekly-resorted SMB and HML from MV / BVTP sorts over the assets that
/// were available at formation (t-1) and have a return at t.
FactorSeries build_factor_portfolios(const AssetPanel& panel,
                                     const FactorConfig& cfg = {});

/// Up to the top-U assets by MV among those available at t, ascending index.
std::vector<Eigen::Index> investible_universe(const AssetPanel& panel,
                                              Eigen::Index t,
                                              Eigen::Index universe_size);

}  // namespace apm

#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include "apm/panel.hpp"

namespace apm::test {

/// Hand-built panel: all assets available from row 1 on (row 0 is the
/// no-return seed row, as after load_panel), constant characteristics
/// unless overwritten by the caller.
inline AssetPanel make_panel(const Eigen::MatrixXd& returns, double rf_rate = 0.0,
                             bool with_momentum = true) {
  AssetPanel p;
  const Eigen::Index T = returns.rows(), N = returns.cols();
  p.returns = returns;
  p.rf = Eigen::VectorXd::Constant(T, rf_rate);
  p.excess_returns = returns.array() - rf_rate;
  p.available = BoolArray::Constant(T, N, true);
  p.available.row(0).setConstant(false);
  p.returns.row(0).setConstant(std::numeric_limits<double>::quiet_NaN());
  p.excess_returns.row(0).setConstant(std::numeric_limits<double>::quiet_NaN());
  p.char_names = {chars::kBVTP, chars::kMV};
  if (with_momentum) {
    p.char_names.push_back(chars::kMOMS);
    p.char_names.push_back(chars::kMOML);
  }
  for (std::size_t m = 0; m < p.char_names.size(); ++m)
    p.characteristics.push_back(
        Eigen::MatrixXd::Constant(T, N, 1.0 + 0.1 * static_cast<double>(m)));
  // distinct market values so cap-weight and universe sorts are unambiguous
  for (Eigen::Index i = 0; i < N; ++i)
    p.characteristics[1].col(i).setConstant(static_cast<double>(N - i));
  p.macro.resize(T, 0);
  for (Eigen::Index t = 0; t < T; ++t) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "2010-%02d-%02d", 1 + static_cast<int>(t) / 28,
                  1 + static_cast<int>(t) % 28);
    p.dates.push_back(buf);
  }
  for (Eigen::Index i = 0; i < N; ++i) p.asset_ids.push_back("A" + std::to_string(i));
  return p;
}

inline Eigen::MatrixXd random_pd(Eigen::Index n, std::mt19937_64& rng, double ridge = 0.1) {
  std::normal_distribution<double> g;
  Eigen::MatrixXd A(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) A(i, j) = g(rng);
  return A * A.transpose() / static_cast<double>(n) +
         ridge * Eigen::MatrixXd::Identity(n, n);
}

inline Eigen::VectorXd random_vec(Eigen::Index n, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = g(rng);
  return v;
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("apm_test_" + tag + "_" + std::to_string(::getpid()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::string file(const std::string& name, const std::string& body) const {
    const auto p = path_ / name;
    std::ofstream(p) << body;
    return p.string();
  }

 private:
  std::filesystem::path path_;
};

}  // namespace apm::test

#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fragility/cfi.hpp"
#include "fragility/common.hpp"
#include "fragility/ingest.hpp"

namespace fragility {

/// Daily series; NaN marks an absent value.
struct DatedSeries {
  std::vector<Date> dates;
  Vector values;
};

/// Trailing-window sample std (divisor n-1); leading window-1 values absent. Optionally
/// multiplied by sqrt(annualization).
Vector realized_vol(const Eigen::Ref<const Vector>& returns, int window, bool annualize = false,
                    double annualization = 365.0);

/// Sample std over (t, t+h], assigned to t; the trailing h values are absent.
Vector forward_vol(const Eigen::Ref<const Vector>& growth, int horizon);

enum class StarDistribution { Normal, StudentT };

struct Coefficient {
  std::string name;
  double estimate = 0.0;
  double std_error = 0.0;
  double t_stat = 0.0;
  double p_value = 1.0;
  std::string stars;
};

struct RegressionResult {
  std::string spec;
  std::string dependent;
  std::vector<Coefficient> coefficients;
  Eigen::Index n_obs = 0;
  double r_squared = 0.0;
  int nw_lags = 0;
  Matrix covariance;  // HAC covariance of the coefficients
  Vector residuals;
};

/// OLS with Newey-West (Bartlett kernel) covariance. `x` must already contain the intercept
/// column if one is wanted. Rank deficiency is reported with the offending column names.
RegressionResult ols_hac(const Eigen::Ref<const Vector>& y, const Eigen::Ref<const Matrix>& x,
                         const std::vector<std::string>& names, int nw_lags,
                         StarDistribution stars = StarDistribution::Normal);

/// White (HC0) heteroskedasticity-robust covariance, for cross-checking the lag-0 case.
Matrix white_covariance(const Eigen::Ref<const Vector>& residuals, const Eigen::Ref<const Matrix>& x);

/// Default lag for contemporaneous specs: floor(4 (n/100)^(2/9)).
int default_nw_lags(Eigen::Index n);

std::string significance_stars(double p_value);

/// Market controls input: date, eth_price, btc_price, gas_fee.
struct ControlsInput {
  std::vector<Date> dates;
  Vector eth_price, btc_price, gas_fee;
};

ControlsInput load_controls(const std::filesystem::path& path);
void save_controls(const ControlsInput& c, const std::filesystem::path& path);

struct MarketControls {
  std::vector<Date> dates;
  Vector eth_vol_30d;   // annualized 30-day realized vol of ETH log returns
  Vector btc_return;    // daily log return
  Vector gas_fee;       // supplied units
  Vector tvl_vol_30d;   // 30-day rolling vol of aggregate TVL log growth (not annualized)
  Vector tvl_growth;    // daily aggregate TVL log growth
};

struct EconConfig {
  std::vector<int> horizons{7, 14, 30};
  double annualization = 365.0;
  int vol_window = 30;
  StarDistribution stars = StarDistribution::Normal;
};

/// Align the inputs on the panel's calendar (dates absent from the controls stay NaN).
MarketControls build_market_controls(const ControlsInput& in, const CategoryPanel& panel, const EconConfig& cfg = {});

/// Contemporaneous specs (1) ETH vol and (2) TVL vol on CFI plus controls, then one
/// forward-volatility spec per horizon with the lagged dependent variable and nw_lags = 2h.
std::vector<RegressionResult> run_volatility_regressions(const CfiSeries& cfi, const MarketControls& controls,
                                                    const EconConfig& cfg = {}, Diagnostics* diag = nullptr);

void save_regressions(const std::vector<RegressionResult>& results, const std::filesystem::path& path);

}  // namespace fragility

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "fragility/csv.hpp"
#include "fragility/econ.hpp"
#include "oracles.hpp"

using namespace fragility;

namespace {

Matrix with_intercept(const Matrix& x) {
  Matrix out(x.rows(), x.cols() + 1);
  out.col(0).setOnes();
  out.rightCols(x.cols()) = x;
  return out;
}

double slice_std(const Vector& v, Eigen::Index from, Eigen::Index len) {
  std::vector<double> s(v.data() + from, v.data() + from + len);
  double m = 0;
  for (double x : s) m += x;
  m /= static_cast<double>(len);
  double ss = 0;
  for (double x : s) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(len - 1));
}

// Daily market whose TVL growth volatility follows a latent state with a delay of `lead` days;
// the CFI observes the state at each weekly window end, so it leads volatility. The lagged
// forward-vol control overlaps most of the next window, so the lead has to grow with the
// horizon for the CFI to carry information the control does not.
struct PlantedMarket {
  MarketControls controls;
  CfiSeries cfi;
};

PlantedMarket planted_market(std::uint64_t seed, int days = 1400, int lead = 10) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n;
  PlantedMarket pm;
  auto& mc = pm.controls;
  mc.eth_vol_30d.resize(days);
  mc.btc_return.resize(days);
  mc.gas_fee.resize(days);
  mc.tvl_vol_30d.resize(days);
  mc.tvl_growth.resize(days);
  std::vector<double> state(static_cast<std::size_t>(days));
  double c = 0;
  for (int t = 0; t < days; ++t) {
    mc.dates.push_back(parse_date("2021-01-01") + std::chrono::days(t));
    c = 0.9 * c + 0.45 * n(rng);
    state[static_cast<std::size_t>(t)] = c;
    const double driver = t >= lead ? state[static_cast<std::size_t>(t - lead)] : 0.0;
    mc.tvl_growth[t] = 0.01 * std::exp(0.8 * driver) * n(rng);
    mc.eth_vol_30d[t] = 0.6 + 0.05 * n(rng);
    mc.btc_return[t] = 0.03 * n(rng);
    mc.gas_fee[t] = 30 + 5 * n(rng);
    mc.tvl_vol_30d[t] = 0.02 + 0.002 * n(rng);
  }
  for (int t = 120; t < days; t += 7) {
    CfiPoint p;
    p.window_end = mc.dates[static_cast<std::size_t>(t)];
    p.cfi = state[static_cast<std::size_t>(t)];
    pm.cfi.push_back(p);
  }
  return pm;
}

const Coefficient& coef(const RegressionResult& r, const std::string& name) {
  for (const auto& c : r.coefficients)
    if (c.name == name) return c;
  throw std::runtime_error("no coefficient " + name);
}

}  // namespace

TEST_CASE("realized volatility") {
  const Vector flat = Vector::Constant(50, 0.01);
  const Vector v = realized_vol(flat, 10);
  for (int i = 0; i < 9; ++i) CHECK(std::isnan(v[i]));
  for (int i = 9; i < 50; ++i) CHECK(std::abs(v[i]) < 1e-15);

  Vector alt(8);
  alt << 0.01, -0.01, 0.01, -0.01, 0.01, -0.01, 0.01, -0.01;
  const Vector a = realized_vol(alt, 4);
  CHECK(a[3] == doctest::Approx(0.01 * std::sqrt(4.0 / 3.0)).epsilon(1e-12));
  CHECK(realized_vol(alt, 4, true)[3] == doctest::Approx(a[3] * std::sqrt(365.0)).epsilon(1e-12));
  CHECK(realized_vol(alt, 4, true, 252)[3] == doctest::Approx(a[3] * std::sqrt(252.0)).epsilon(1e-12));

  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(0, 0.03);
  Vector iid(20000);
  for (auto& x : iid) x = n(rng);
  const Vector rv = realized_vol(iid, 30);
  CHECK(std::abs(rv.tail(20000 - 29).mean() / 0.03 - 1.0) < 0.05);
  CHECK((rv.tail(20000 - 29).array() >= 0).all());

  CHECK_THROWS_AS(realized_vol(alt, 1), ValidationError);
}

TEST_CASE("forward volatility") {
  const Vector flat = Vector::Constant(40, 0.002);
  const Vector f = forward_vol(flat, 7);
  CHECK((f.head(33).array() == 0.0).all());
  for (int i = 33; i < 40; ++i) CHECK(std::isnan(f[i]));

  std::mt19937_64 rng(2);
  const Vector g = oracle::gaussian_matrix(200, 1, rng).col(0) * 0.01;
  const Vector f7 = forward_vol(g, 7);
  CHECK((f7.array().isNaN() == false).count() == 200 - 7);
  for (Eigen::Index t = 0; t < 193; ++t) CHECK(f7[t] == doctest::Approx(slice_std(g, t + 1, 7)).epsilon(1e-12));
  CHECK_THROWS_AS(forward_vol(g, 1), ValidationError);
}

TEST_CASE("OLS on an exact linear relation") {
  std::mt19937_64 rng(3);
  const Matrix x = with_intercept(oracle::gaussian_matrix(60, 2, rng));
  const Vector beta = Eigen::Vector3d(0.5, -2.0, 3.25);
  const Vector y = x * beta;
  for (int lags : {0, 3, 12}) {
    const auto r = ols_hac(y, x, {"const", "a", "b"}, lags);
    CHECK(r.residuals.cwiseAbs().maxCoeff() < 1e-12);
    CHECK(r.r_squared == doctest::Approx(1.0).epsilon(1e-12));
    for (int k = 0; k < 3; ++k) CHECK(r.coefficients[k].estimate == doctest::Approx(beta[k]).epsilon(1e-12));
  }
}

TEST_CASE("regressing a series on itself") {
  std::mt19937_64 rng(4);
  const Vector y = oracle::gaussian_matrix(80, 1, rng).col(0);
  Matrix x(80, 2);
  x.col(0).setOnes();
  x.col(1) = y;
  const auto r = ols_hac(y, x, {"const", "y"}, 2);
  CHECK(std::abs(r.coefficients[1].estimate - 1.0) < 1e-13);
  CHECK(std::abs(r.coefficients[0].estimate) < 1e-13);
}

TEST_CASE("normal equations, White equality and HAC shape") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> n;
  const Matrix x = with_intercept(oracle::gaussian_matrix(300, 3, rng));
  Vector y(300);
  for (int t = 0; t < 300; ++t) y[t] = 1 + 0.5 * x(t, 1) - x(t, 3) + (1 + std::abs(x(t, 2))) * n(rng);
  const auto r0 = ols_hac(y, x, {"const", "a", "b", "c"}, 0);
  const Vector score = x.transpose() * r0.residuals;
  CHECK(score.cwiseAbs().maxCoeff() <= 1e-8 * (x.transpose() * y).cwiseAbs().maxCoeff());
  CHECK((r0.covariance - white_covariance(r0.residuals, x)).cwiseAbs().maxCoeff() < 1e-10);

  const auto r5 = ols_hac(y, x, {"const", "a", "b", "c"}, 5);
  CHECK((r5.covariance - r5.covariance.transpose()).cwiseAbs().maxCoeff() == 0.0);
  CHECK(Eigen::SelfAdjointEigenSolver<Matrix>(r5.covariance).eigenvalues().minCoeff() >= -1e-14);
  for (const auto& c : r5.coefficients) CHECK(c.std_error > 0);
  CHECK(r5.n_obs == 300);
  CHECK(r5.nw_lags == 5);

  const auto rt = ols_hac(y, x, {"const", "a", "b", "c"}, 5, StarDistribution::StudentT);
  CHECK(rt.coefficients[1].p_value >= r5.coefficients[1].p_value);
}

TEST_CASE("regression input errors") {
  std::mt19937_64 rng(6);
  Matrix x = with_intercept(oracle::gaussian_matrix(40, 2, rng));
  x.col(2) = 2.0 * x.col(1);
  const Vector y = oracle::gaussian_matrix(40, 1, rng).col(0);
  CHECK_THROWS_WITH_AS(ols_hac(y, x, {"const", "cfi", "cfi_twice"}, 1), doctest::Contains("cfi"), DataError);
  CHECK_THROWS_AS(ols_hac(y.head(3), x.topRows(3), {"const", "a", "b"}, 0), DataError);
  CHECK_THROWS_AS(ols_hac(y, x, {"const"}, 0), ValidationError);
  Vector gap = y;
  gap[4] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(ols_hac(gap, with_intercept(oracle::gaussian_matrix(40, 1, rng)), {"const", "a"}, 0), DataError);
}

TEST_CASE("lag rule and stars") {
  CHECK(default_nw_lags(236) == 4);
  CHECK(default_nw_lags(100) == 4);
  CHECK(default_nw_lags(1000) == static_cast<int>(std::floor(4 * std::pow(10.0, 2.0 / 9.0))));
  CHECK(significance_stars(0.009) == "***");
  CHECK(significance_stars(0.03) == "**");
  CHECK(significance_stars(0.07) == "*");
  CHECK(significance_stars(0.2).empty());
}

TEST_CASE("controls file") {
  const auto dir = oracle::scratch_dir("controls");
  ControlsInput c;
  for (int t = 0; t < 5; ++t) c.dates.push_back(parse_date("2023-01-01") + std::chrono::days(t));
  c.eth_price = Eigen::VectorXd::LinSpaced(5, 1500, 1600);
  c.btc_price = Eigen::VectorXd::LinSpaced(5, 20000, 21000);
  c.gas_fee = Eigen::VectorXd::LinSpaced(5, 10, 30);
  save_controls(c, dir / "c.csv");
  const auto back = load_controls(dir / "c.csv");
  CHECK(back.dates == c.dates);
  CHECK(back.eth_price == c.eth_price);
  CHECK(back.gas_fee == c.gas_fee);

  csv::write_file_atomic(dir / "bad.csv", "date,eth_price\n2023-01-01,1500\n");
  CHECK_THROWS_WITH_AS(load_controls(dir / "bad.csv"), doctest::Contains("btc_price, gas_fee"), DataError);
}

TEST_CASE("market controls align on the panel calendar") {
  CategoryPanel p;
  p.categories = {"a", "b"};
  for (int t = 0; t < 60; ++t) p.dates.push_back(parse_date("2023-01-01") + std::chrono::days(t));
  p.values.resize(60, 2);
  for (int t = 0; t < 60; ++t) p.values(t, 0) = 100.0 * std::exp(0.01 * t), p.values(t, 1) = 50.0;
  ControlsInput c;
  for (int t = 5; t < 60; ++t) c.dates.push_back(p.dates[static_cast<std::size_t>(t)]);
  c.eth_price = Eigen::VectorXd::LinSpaced(55, 1000, 1500);
  c.btc_price = Eigen::VectorXd::Constant(55, 30000);
  c.gas_fee = Eigen::VectorXd::Constant(55, 12);
  const auto mc = build_market_controls(c, p);
  REQUIRE(mc.dates == p.dates);
  CHECK(std::isnan(mc.gas_fee[0]));
  CHECK(mc.gas_fee[5] == 12);
  CHECK(mc.btc_return[10] == 0.0);
  const double total0 = 150.0, total1 = 100.0 * std::exp(0.01) + 50.0;
  CHECK(mc.tvl_growth[1] == doctest::Approx(std::log(total1 / total0)).epsilon(1e-12));
  CHECK(std::isnan(mc.eth_vol_30d[20]));
  CHECK(mc.eth_vol_30d[40] >= 0);
}

TEST_CASE("planted predictive CFI is significant; a shuffled CFI is not") {
  for (const auto& [h, lead] : std::vector<std::pair<int, int>>{{7, 10}, {14, 10}, {30, 20}}) {
    for (std::uint64_t seed : {7, 8, 9}) {
      Diagnostics d;
      EconConfig cfg;
      cfg.horizons = {h};
      const auto pm = planted_market(seed, 1400, lead);
      const auto res = run_volatility_regressions(pm.cfi, pm.controls, cfg, &d);
      REQUIRE(res.size() == 3);
      CHECK(res[0].spec == "(1)");
      CHECK(res[1].spec == "(2)");
      const auto& b = coef(res[2], "cfi");
      INFO("h=" << h << " seed=" << seed);
      CHECK(b.estimate > 0);
      CHECK(b.p_value < 0.01);
      CHECK(res[2].nw_lags == 2 * h);
      CHECK_FALSE(d.warnings.empty());  // the trailing windows have no forward volatility
    }
  }

  int insignificant = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    auto shuffled = planted_market(1000 + seed);
    std::mt19937_64 rng(seed);
    std::vector<double> values;
    for (const auto& p : shuffled.cfi) values.push_back(p.cfi);
    std::shuffle(values.begin(), values.end(), rng);
    for (std::size_t i = 0; i < values.size(); ++i) shuffled.cfi[i].cfi = values[i];
    EconConfig cfg;
    cfg.horizons = {7};
    const auto r = run_volatility_regressions(shuffled.cfi, shuffled.controls, cfg);
    insignificant += coef(r[2], "cfi").p_value >= 0.05;
  }
  CHECK(insignificant >= 90);
}

TEST_CASE("regression table export") {
  const auto dir = oracle::scratch_dir("regressions");
  const auto pm = planted_market(9, 600);
  save_regressions(run_volatility_regressions(pm.cfi, pm.controls), dir / "r.csv");
  const auto t = csv::read(dir / "r.csv");
  CHECK(t.header.size() == 11);
  CHECK(t.header[2] == "term");
  CHECK(t.rows.size() == 5 + 4 + 6 * 3);
}

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "fragility/cfi.hpp"
#include "oracles.hpp"

using namespace fragility;

namespace {

std::vector<Date> days(int n) {
  std::vector<Date> d;
  for (int i = 0; i < n; ++i) d.push_back(parse_date("2021-01-02") + std::chrono::days(i));
  return d;
}

FragilityMetrics metrics(double a, double l, double d, double h, int t = 0) {
  FragilityMetrics m;
  m.avg_strength = a;
  m.lambda_max = l;
  m.strong_edge_density = d;
  m.eigen_entropy = h;
  m.window_end = parse_date("2021-05-01") + std::chrono::days(7 * t);
  return m;
}

// One latent synchronisation factor drives all four metrics; entropy falls as it rises.
std::vector<FragilityMetrics> one_factor_series(int t, double noise, std::mt19937_64& rng) {
  std::normal_distribution<double> n;
  std::vector<FragilityMetrics> out;
  double f = 0;
  for (int i = 0; i < t; ++i) {
    f = 0.9 * f + 0.45 * n(rng);
    out.push_back(metrics(3 + f + noise * n(rng), 4 + 1.2 * f + noise * n(rng), 0.4 + 0.1 * f + 0.1 * noise * n(rng),
                          0.8 - 0.05 * f + 0.05 * noise * n(rng), i));
  }
  return out;
}

}  // namespace

TEST_CASE("rolling window arithmetic") {
  const RollingConfig cfg{120, 7};
  auto w = rolling_windows(days(127), cfg);
  REQUIRE(w.size() == 2);
  CHECK(w[0].end_row == 119);
  CHECK(w[1].end_row == 126);
  CHECK(w[0].first_row == 0);
  CHECK(w[1].window_end == days(127)[126]);

  Diagnostics d;
  CHECK(rolling_windows(days(119), cfg, &d).empty());
  CHECK(d.warnings.size() == 1);
  CHECK(rolling_windows(days(1765), cfg).size() == 236);
  CHECK(rolling_windows(days(1765), cfg).size() == (1765 - 120) / 7 + 1);

  Eigen::MatrixXd r = Eigen::MatrixXd::Random(127, 3);
  CHECK(w[1].block(r).rows() == 120);
  CHECK(w[1].block(r)(0, 0) == r(7, 0));

  CHECK_THROWS_AS(rolling_windows(days(200), RollingConfig{29, 1}), ValidationError);
  CHECK_THROWS_AS(rolling_windows(days(200), RollingConfig{60, 61}), ValidationError);
  CHECK_THROWS_AS(rolling_windows(days(200), RollingConfig{60, 0}), ValidationError);
}

TEST_CASE("four identical metric series: rank one") {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n;
  std::vector<FragilityMetrics> s;
  for (int t = 0; t < 40; ++t) {
    const double v = n(rng);
    s.push_back(metrics(v, v, v, v, t));
  }
  const auto m = fit_cfi_model(s);
  CHECK(std::abs(m.pc1_variance_share - 1.0) < 1e-10);
  for (int k = 0; k < 4; ++k) CHECK(std::abs(m.loading[k] - 0.5) < 1e-10);
}

TEST_CASE("planted one-factor metrics") {
  std::mt19937_64 rng(2);
  const auto s = one_factor_series(240, 0.05, rng);
  const auto m = fit_cfi_model(s);
  CHECK(m.pc1_variance_share > 0.95);
  CHECK(m.loading[0] > 0);
  CHECK(m.loading[1] > 0);
  CHECK(m.loading[2] > 0);
  CHECK(m.loading[3] < 0);
  CHECK(std::abs(m.loading.norm() - 1.0) < 1e-10);
  CHECK((m.metric_stds.array() > 0).all());

  const auto series = apply_cfi_series(m, s);
  Eigen::VectorXd cfi(series.size()), avg(series.size());
  for (std::size_t i = 0; i < series.size(); ++i) cfi[i] = series[i].cfi, avg[i] = s[i].avg_strength;
  CHECK(std::abs(cfi.mean()) < 1e-10);
  CHECK(std::abs(stats::sample_std(cfi) - 1.0) < 1e-8);
  CHECK(stats::pearson(cfi, avg) > 0);

  // The standardised metrics have unit variance, so PC1 must carry at least that much.
  Eigen::VectorXd raw(series.size());
  for (std::size_t i = 0; i < series.size(); ++i) raw[i] = series[i].raw;
  CHECK(stats::sample_std(raw) * stats::sample_std(raw) >= 1.0);

  CHECK(fit_cfi_model(s) == m);
}

TEST_CASE("orientation follows average strength even when it anticorrelates with the rest") {
  std::mt19937_64 rng(3);
  auto s = one_factor_series(100, 0.05, rng);
  for (auto& x : s) x.avg_strength = -x.avg_strength;
  const auto m = fit_cfi_model(s);
  CHECK(m.loading[0] > 0);
  CHECK(m.loading[1] < 0);
  CHECK(std::abs(m.orientation) == 1);
}

TEST_CASE("rescaling a metric leaves the standardised CFI unchanged") {
  std::mt19937_64 rng(4);
  const auto s = one_factor_series(150, 0.2, rng);
  auto scaled = s;
  for (auto& x : scaled) {
    x.lambda_max *= 37.0;
    x.strong_edge_density *= 0.01;
  }
  const auto a = apply_cfi_series(fit_cfi_model(s), s);
  const auto b = apply_cfi_series(fit_cfi_model(scaled), scaled);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i].cfi - b[i].cfi) < 1e-8);
}

TEST_CASE("applying the frozen model") {
  std::mt19937_64 rng(5);
  const auto m = fit_cfi_model(one_factor_series(60, 0.1, rng));
  const Eigen::Vector4d mu = m.metric_means, sd = m.metric_stds;
  CHECK(std::abs(apply_cfi_model(m, metrics(mu[0], mu[1], mu[2], mu[3])).raw) < 1e-15);
  const auto v = apply_cfi_model(m, metrics(mu[0] + sd[0], mu[1] + sd[1], mu[2] + sd[2], mu[3] + sd[3]));
  CHECK(v.raw == doctest::Approx(m.loading.sum()).epsilon(1e-12));
  CHECK(v.standardized == doctest::Approx((v.raw - m.output_mean) / m.output_std).epsilon(1e-15));

  const Eigen::Vector4d x(3.3, 4.4, 0.5, 0.7);
  double hand = 0;
  for (int k = 0; k < 4; ++k) hand += m.loading[k] * (x[k] - mu[k]) / sd[k];
  CHECK(raw_cfi(m, x) == doctest::Approx(hand).epsilon(1e-14));
}

TEST_CASE("fit errors") {
  std::mt19937_64 rng(6);
  auto s = one_factor_series(7, 0.1, rng);
  CHECK_THROWS_AS(fit_cfi_model(s), ValidationError);

  s = one_factor_series(30, 0.1, rng);
  for (auto& x : s) x.strong_edge_density = 0.25;
  CHECK_THROWS_WITH_AS(fit_cfi_model(s), doctest::Contains("strong_edge_density"), DataError);

  // Two uncorrelated pairs of equal variance: the top two eigenvalues tie.
  const double a[8] = {1, -1, 1, -1, 1, -1, 1, -1};
  const double b[8] = {1, 1, -1, -1, 1, 1, -1, -1};
  std::vector<FragilityMetrics> tie;
  for (int t = 0; t < 8; ++t) tie.push_back(metrics(a[t], a[t], b[t], b[t], t));
  CHECK_THROWS_WITH_AS(fit_cfi_model(tie), doctest::Contains("eigengap"), DataError);
}

TEST_CASE("model and series persist at full precision") {
  const auto dir = oracle::scratch_dir("cfi");
  std::mt19937_64 rng(7);
  const auto s = one_factor_series(50, 0.1, rng);
  const auto m = fit_cfi_model(s);
  CHECK(parse_model(serialize_model(m)) == m);
  save_model(m, dir / "model.json");
  CHECK(load_model(dir / "model.json") == m);

  std::string future = serialize_model(m);
  const auto pos = future.find("\"schema_version\": 1");
  REQUIRE(pos != std::string::npos);
  future.replace(pos, 19, "\"schema_version\": 9");
  CHECK_THROWS_AS(parse_model(future), DataError);

  const auto series = apply_cfi_series(m, s);
  save_cfi_series(series, dir / "cfi.csv");
  const auto back = load_cfi_series(dir / "cfi.csv");
  REQUIRE(back.size() == series.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].cfi == series[i].cfi);
    CHECK(back[i].raw == series[i].raw);
    CHECK(back[i].window_end == series[i].window_end);
    CHECK(back[i].metrics.as_vector() == series[i].metrics.as_vector());
  }
}

TEST_CASE("expanding-window series uses only past windows") {
  std::mt19937_64 rng(8);
  const auto s = one_factor_series(40, 0.1, rng);
  const auto e = expanding_cfi_series(s, 10);
  REQUIRE(e.size() == 31);
  CHECK(e.front().window_end == s[9].window_end);
  const std::vector<FragilityMetrics> head(s.begin(), s.begin() + 20);
  const auto v = apply_cfi_model(fit_cfi_model(head), s[19]);
  CHECK(e[10].cfi == v.standardized);
  CHECK(e.back().cfi == apply_cfi_series(fit_cfi_model(s), s).back().cfi);
}

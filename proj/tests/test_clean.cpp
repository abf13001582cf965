#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "fragility/clean.hpp"
#include "oracles.hpp"

using namespace fragility;

namespace {

constexpr double M = 1e6;
constexpr unsigned ABS = static_cast<unsigned>(AnomalyRule::Abs);
constexpr unsigned REL = static_cast<unsigned>(AnomalyRule::Rel);
constexpr unsigned MAD = static_cast<unsigned>(AnomalyRule::Mad);

std::vector<Date> days(std::size_t n) {
  std::vector<Date> d;
  for (std::size_t i = 0; i < n; ++i) d.push_back(parse_date("2023-01-01") + std::chrono::days(i));
  return d;
}

CategoryPanel panel_of(std::vector<std::vector<double>> cols) {
  CategoryPanel p;
  p.dates = days(cols.front().size());
  p.values.resize(static_cast<Eigen::Index>(p.dates.size()), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) {
    p.categories.push_back("c" + std::to_string(j));
    for (std::size_t i = 0; i < cols[j].size(); ++i) p.values(i, j) = cols[j][i];
  }
  return p;
}

std::vector<AnomalyFlag> detect(const std::vector<double>& v, const AnomalyConfig& cfg = {}) {
  const Eigen::VectorXd x = Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
  return detect_series_anomalies(x, days(v.size()), "s", cfg);
}

AnomalyFlag technical_at(const CategoryPanel& p, std::size_t row) {
  return {p.categories[0], p.dates[row], ABS, AnomalyClass::Technical, p.values(row, 0), {}};
}

}  // namespace

TEST_CASE("spike of 12M over a 10M base: ABS only, reverts, technical") {
  // 22/10 - 1 = 1.2 does not exceed the 200% relative threshold.
  const auto f = detect({10 * M, 10 * M, 22 * M, 10 * M, 10 * M});
  REQUIRE(f.size() == 1);
  CHECK(f[0].date == days(5)[2]);
  CHECK(f[0].rule_hits == ABS);
  CHECK(f[0].classification == AnomalyClass::Technical);
}

TEST_CASE("spike to 40M over a 10M base trips ABS and REL") {
  const auto f = detect({10 * M, 10 * M, 40 * M, 10 * M, 10 * M, 10 * M});
  REQUIRE(f.size() == 1);
  CHECK(f[0].rule_hits == (ABS | REL));
  CHECK(f[0].classification == AnomalyClass::Technical);
}

TEST_CASE("sustained jump is persistent") {
  const auto f = detect({10 * M, 10 * M, 30 * M, 30 * M, 30 * M, 30 * M});
  REQUIRE(f.size() == 1);
  CHECK(f[0].rule_hits == ABS);  // ratio exactly 2.0 is not strictly above the threshold
  CHECK(f[0].classification == AnomalyClass::Persistent);
  CHECK(f[0].original_value == 30 * M);
}

TEST_CASE("constant and short series raise nothing") {
  CHECK(detect(std::vector<double>(50, 7 * M)).empty());
  Diagnostics d;
  const Eigen::VectorXd two = Eigen::Vector2d(1, 1e9);
  CHECK(detect_series_anomalies(two, days(2), "s", {}, &d).empty());
  CHECK(d.warnings.size() == 1);
}

TEST_CASE("MAD rule alone on a small-valued jittered series") {
  // Deltas alternate 1 and 3 (median 2, raw MAD 1); the +100 jump scores 98 > 12.
  const std::vector<double> v{1000, 1001, 1004, 1005, 1008, 1009, 1012, 1013, 1016, 1017, 1117, 1018, 1021};
  const auto f = detect(v);
  REQUIRE(f.size() == 1);
  CHECK(f[0].date == days(v.size())[10]);
  CHECK(f[0].rule_hits == MAD);
  CHECK(f[0].classification == AnomalyClass::Technical);

  // The move back down scores |-99 - 2| = 101, so it alone trips the rule between 98 and 101.
  AnomalyConfig loose;
  loose.tau_mad = 102;
  CHECK(detect(v, loose).empty());
  loose.tau_mad = 99;
  const auto late = detect(v, loose);
  REQUIRE(late.size() == 1);
  CHECK(late[0].date == days(v.size())[11]);
  loose.tau_mad = 97;
  CHECK(detect(v, loose).size() == 1);
}

TEST_CASE("zero to positive is a relative hit") {
  const auto f = detect({0, 0, 5, 0, 0});
  REQUIRE(f.size() == 1);
  CHECK(f[0].rule_hits == REL);
}

TEST_CASE("NaN gaps are skipped by the detector") {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  const auto f = detect({10 * M, nan, 10 * M, 40 * M, nan, 10 * M, 10 * M});
  REQUIRE(f.size() == 1);
  CHECK(f[0].date == days(7)[3]);
}

TEST_CASE("repair interpolates between unflagged neighbours") {
  SUBCASE("midpoint") {
    auto p = panel_of({{10 * M, 99 * M, 12 * M}});
    std::vector<AnomalyFlag> flags{technical_at(p, 1)};
    const auto r = repair_series(p, flags);
    CHECK(r.values(1, 0) == 11 * M);
    CHECK(flags[0].repaired_value == 11 * M);
  }
  SUBCASE("two consecutive cells") {
    auto p = panel_of({{10 * M, 1 * M, 1 * M, 16 * M}});
    std::vector<AnomalyFlag> flags{technical_at(p, 1), technical_at(p, 2)};
    const auto r = repair_series(p, flags);
    CHECK(r.values(1, 0) == doctest::Approx(12 * M).epsilon(1e-15));
    CHECK(r.values(2, 0) == doctest::Approx(14 * M).epsilon(1e-15));
  }
  SUBCASE("edge cells take the nearest neighbour") {
    auto p = panel_of({{50 * M, 10 * M, 11 * M, 70 * M}});
    std::vector<AnomalyFlag> flags{technical_at(p, 0), technical_at(p, 3)};
    const auto r = repair_series(p, flags);
    CHECK(r.values(0, 0) == 10 * M);
    CHECK(r.values(3, 0) == 11 * M);
  }
  SUBCASE("persistent cells are left alone") {
    auto p = panel_of({{10 * M, 10 * M, 30 * M, 30 * M}});
    auto flags = detect_anomalies(p);
    REQUIRE(flags.size() == 1);
    const auto r = repair_series(p, flags);
    CHECK(r.values == p.values);
    CHECK_FALSE(flags[0].repaired_value.has_value());
  }
  SUBCASE("a category flagged everywhere is dropped") {
    auto p = panel_of({{1, 2}, {3, 4}});
    std::vector<AnomalyFlag> flags{technical_at(p, 0), technical_at(p, 1)};
    Diagnostics d;
    const auto r = repair_series(p, flags, &d);
    CHECK(r.categories == std::vector<std::string>{"c1"});
    CHECK(flags.empty());
    CHECK_FALSE(d.warnings.empty());
  }
}

TEST_CASE("repair is local and idempotent on random spiky panels") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> n(0, 0.01);
  std::uniform_int_distribution<int> pick(5, 294);
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<double> v(300);
    double level = 50 * M;
    for (auto& x : v) x = level *= std::exp(n(rng));
    for (int s = 0; s < 4; ++s) v[static_cast<std::size_t>(pick(rng))] *= 4.0;  // single-day spikes
    auto p = panel_of({v});
    auto flags = detect_anomalies(p);
    const auto r = repair_series(p, flags);

    std::vector<bool> flagged(v.size(), false);
    for (const auto& f : flags) {
      if (f.classification == AnomalyClass::Technical) flagged[static_cast<std::size_t>((f.date - p.dates[0]).count())] = true;
    }
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!flagged[i]) CHECK(r.values(i, 0) == p.values(i, 0));
    }

    // Refreshed flags on the repaired panel find no technical spike, and re-applying the
    // original flags is a fixed point.
    for (const auto& f : detect_anomalies(r)) CHECK(f.classification != AnomalyClass::Technical);
    auto again = flags;
    CHECK(repair_series(r, again).values == r.values);
  }
}

TEST_CASE("raising any threshold never increases the flag count") {
  std::mt19937_64 rng(21);
  std::normal_distribution<double> n(0, 0.05);
  std::bernoulli_distribution spike(0.03);
  for (int rep = 0; rep < 30; ++rep) {
    std::vector<double> v(400);
    double level = 20 * M;
    for (auto& x : v) {
      level *= std::exp(n(rng));
      x = spike(rng) ? level * 3.5 : level;
    }
    AnomalyConfig cfg;
    std::size_t prev = detect(v, cfg).size();
    for (double scale : {1.5, 2.0, 3.0, 5.0}) {
      AnomalyConfig up;
      up.tau_abs = cfg.tau_abs * scale;
      up.tau_rel = cfg.tau_rel * scale;
      up.tau_mad = cfg.tau_mad * scale;
      const std::size_t now = detect(v, up).size();
      CHECK(now <= prev);
      prev = now;
    }
    for (double t : {6e6, 1e7, 1e8}) {
      AnomalyConfig a;
      a.tau_abs = t;
      CHECK(detect(v, a).size() <= detect(v, cfg).size());
    }
  }
}

TEST_CASE("log returns") {
  const auto p = panel_of({{1 * M, 2 * M, 2 * M}, {0, 0, 0}, {5, 5, 5}});
  const auto r = compute_log_returns(p);
  CHECK(r.values.rows() == 2);
  CHECK(r.values(0, 0) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(std::abs(r.values(0, 0) - 0.693147) < 1e-6);
  CHECK(r.values(1, 0) == 0.0);
  CHECK(r.values(0, 1) == 0.0);
  CHECK(r.values(1, 2) == 0.0);
  CHECK(r.dates.front() == p.dates[1]);
}

TEST_CASE("gap filling is forward then backward") {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  const auto f = fill_gaps(panel_of({{nan, 3, nan, nan, 5, nan}}));
  CHECK(f.values.col(0) == Eigen::VectorXd((Eigen::VectorXd(6) << 3, 3, 3, 3, 5, 5).finished()));
  CHECK_THROWS_AS(fill_gaps(panel_of({{nan, nan}})), DataError);
}

TEST_CASE("winsorization matches a sort-based clip oracle") {
  std::mt19937_64 rng(4);
  std::student_t_distribution<double> t(3);
  RawReturns raw;
  raw.dates = days(200);
  raw.categories = {"a", "b", "flat"};
  raw.values.resize(200, 3);
  for (int i = 0; i < 200; ++i) {
    raw.values(i, 0) = t(rng) * 0.02;
    raw.values(i, 1) = t(rng) * 0.05;
    raw.values(i, 2) = 0.0;
  }

  for (auto method : {stats::QuantileMethod::Type7, stats::QuantileMethod::InvertedCdf}) {
    WinsorConfig cfg;
    cfg.method = method;
    Diagnostics d;
    const auto w = winsorize_and_balance(raw, cfg, &d);
    REQUIRE(w.categories == std::vector<std::string>{"a", "b"});
    CHECK(w.dropped_categories == std::vector<std::string>{"flat"});
    for (int j = 0; j < 2; ++j) {
      std::vector<double> col(raw.values.col(j).data(), raw.values.col(j).data() + 200);
      std::vector<double> sorted = col;
      std::sort(sorted.begin(), sorted.end());
      double lo, hi;
      if (method == stats::QuantileMethod::Type7) {
        lo = oracle::quantile7(col, 0.005);
        hi = oracle::quantile7(col, 0.995);
      } else {
        lo = sorted[static_cast<std::size_t>(std::ceil(0.005 * 200)) - 1];
        hi = sorted[static_cast<std::size_t>(std::ceil(0.995 * 200)) - 1];
      }
      for (int i = 0; i < 200; ++i) CHECK(w.returns(i, j) == std::clamp(col[i], lo, hi));
    }
  }
}

TEST_CASE("winsorization: clipping law, order preservation and idempotence") {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> n(0, 0.01);
  RawReturns raw;
  raw.dates = days(1000);
  raw.categories = {"x", "y"};
  raw.values.resize(1000, 2);
  for (int i = 0; i < 1000; ++i) raw.values(i, 0) = n(rng), raw.values(i, 1) = n(rng);
  raw.values(500, 0) = 50.0;

  const auto w = winsorize_and_balance(raw);
  std::vector<double> col(raw.values.col(0).data(), raw.values.col(0).data() + 1000);
  CHECK(w.returns.col(0).maxCoeff() == stats::quantile(col, 0.995, stats::QuantileMethod::InvertedCdf));
  CHECK(w.returns(500, 0) < 1.0);

  for (int i = 0; i < 1000; ++i) {
    for (int k = i + 1; k < 1000; k += 37) {
      const double a = raw.values(i, 1), b = raw.values(k, 1);
      const bool unclipped = w.returns(i, 1) == a && w.returns(k, 1) == b;
      if (unclipped) CHECK((a < b) == (w.returns(i, 1) < w.returns(k, 1)));
    }
  }

  RawReturns again{w.dates, w.categories, w.returns};
  CHECK(winsorize_and_balance(again).returns == w.returns);

  SUBCASE("pooled bounds are shared") {
    WinsorConfig pooled;
    pooled.pooled = true;
    const auto pw = winsorize_and_balance(raw, pooled);
    CHECK(pw.winsor_bounds[0] == pw.winsor_bounds[1]);
  }
  SUBCASE("everything constant is fatal") {
    RawReturns flat{raw.dates, {"z"}, Matrix::Zero(1000, 1)};
    CHECK_THROWS_AS(winsorize_and_balance(flat), DataError);
  }
}

TEST_CASE("return matrix persists bit-exactly") {
  const auto dir = oracle::scratch_dir("returns");
  std::mt19937_64 rng(2);
  RawReturns raw{days(50), {"a", "b"}, oracle::gaussian_matrix(50, 2, rng) * 0.03};
  auto w = winsorize_and_balance(raw);
  w.dropped_categories = {"gone"};
  save_returns(w, dir / "r.csv");
  const auto back = load_returns(dir / "r.csv");
  CHECK(back.returns == w.returns);
  CHECK(back.dates == w.dates);
  CHECK(back.dropped_categories == w.dropped_categories);
}

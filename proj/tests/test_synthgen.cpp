#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fragility/clean.hpp"
#include "fragility/synthgen.hpp"
#include "oracles.hpp"
#include "scenarios.hpp"

using namespace fragility;

namespace {

Matrix returns_of(const CategoryPanel& p) { return compute_log_returns(p).values; }

double mean_offdiag(const Matrix& c) {
  const auto n = c.rows();
  return (c.sum() - c.trace()) / static_cast<double>(n * (n - 1));
}

SynthSpec flat(double loading, std::uint64_t seed, int n_days = 2000) {
  SynthSpec s;
  s.n_categories = 10;
  s.n_days = n_days;
  s.loading.assign(static_cast<std::size_t>(n_days), loading);
  s.seed = seed;
  return s;
}

}  // namespace

TEST_CASE("zero loading gives near-zero correlations") {
  const Matrix c = pearson_correlation(returns_of(generate_panel(flat(0.0, 1)))).matrix;
  for (Eigen::Index i = 0; i < c.rows(); ++i)
    for (Eigen::Index j = 0; j < c.cols(); ++j)
      if (i != j) CHECK(std::abs(c(i, j)) < 0.1);
}

TEST_CASE("loading 0.9 gives strong average correlation") {
  const Matrix c = pearson_correlation(returns_of(generate_panel(flat(0.9, 2)))).matrix;
  CHECK(mean_offdiag(c) > 0.5);
}

TEST_CASE("the core block is more correlated than the periphery") {
  auto s = flat(0.0, 3);
  s.core = CoreBlock{4, 0.8};
  s.periphery_corr = 0.05;
  const Matrix c = pearson_correlation(returns_of(generate_panel(s))).matrix;
  CHECK(mean_offdiag(c.topLeftCorner(4, 4)) > 0.7);
  CHECK(std::abs(mean_offdiag(c.bottomRightCorner(6, 6)) - 0.05) < 0.05);
}

TEST_CASE("generation is a pure function of the spec") {
  const auto s = flat(0.4, 4, 300);
  const auto a = generate_panel(s), b = generate_panel(s);
  CHECK(identical(a, b));
  CHECK((a.values.array() > 0).all());
  CHECK(a.categories.front() == "cat_00");
  CHECK(a.dates.front() == s.start);
  auto other = s;
  other.seed = 5;
  CHECK_FALSE(identical(generate_panel(other), a));

  const auto ca = generate_controls(s), cb = generate_controls(s);
  CHECK(ca.eth_price == cb.eth_price);
  CHECK((ca.gas_fee.array() > 0).all());
}

TEST_CASE("anomalies land exactly on the planned cells") {
  auto s = flat(0.3, 6, 200);
  const Date d1 = s.start + std::chrono::days(50), d2 = s.start + std::chrono::days(80),
             d3 = s.start + std::chrono::days(120);
  auto clean = s;
  s.anomalies = {{"cat_02", d1, AnomalyKind::AbsSpike, 4e7},
                 {"cat_05", d2, AnomalyKind::RelSpike, 3.0},
                 {"cat_07", d3, AnomalyKind::Shift, 1.5}};
  const auto base = generate_panel(clean), spiked = generate_panel(s);
  const Matrix diff = spiked.values - base.values;
  CHECK(spiked.values(50, 2) == doctest::Approx(base.values(50, 2) + 4e7));
  CHECK(spiked.values(80, 5) == doctest::Approx(base.values(80, 5) * 4.0));
  for (int t = 120; t < 200; ++t) CHECK(spiked.values(t, 7) == doctest::Approx(base.values(t, 7) * 2.5));
  int touched = 0;
  for (Eigen::Index i = 0; i < diff.size(); ++i) touched += diff.data()[i] != 0.0;
  CHECK(touched == 1 + 1 + 80);

  const auto flags = detect_anomalies(spiked);
  auto has = [&](const char* cat, Date d, AnomalyClass k) {
    return std::any_of(flags.begin(), flags.end(),
                       [&](const AnomalyFlag& f) { return f.category == cat && f.date == d && f.classification == k; });
  };
  CHECK(has("cat_02", d1, AnomalyClass::Technical));
  CHECK(has("cat_05", d2, AnomalyClass::Technical));
  CHECK(has("cat_07", d3, AnomalyClass::Persistent));
}

TEST_CASE("loading knots interpolate linearly and hold flat past the ends") {
  const auto l = loading_from_knots(11, {{2, 0.2}, {6, 0.6}});
  CHECK(l[0] == 0.2);
  CHECK(l[4] == doctest::Approx(0.4));
  CHECK(l[10] == 0.6);
}

TEST_CASE("expected direction") {
  const RollingConfig r{60, 10};
  SUBCASE("constant loading abstains") { CHECK(expected_fragility_direction(flat(0.5, 1, 400), r).abstain); }
  SUBCASE("monotone path orders the windows") {
    const auto spec = scenario::monotone_loading(1, 10, 400);
    const auto o = expected_fragility_direction(spec, r);
    CHECK_FALSE(o.abstain);
    REQUIRE(o.planted.size() == (399 - 60) / 10 + 1);
    CHECK(o.planted == window_loadings(spec, r));
    CHECK(o.window_ends.size() == o.planted.size());
    for (std::size_t i = 1; i < o.planted.size(); ++i) CHECK(o.planted[i] > o.planted[i - 1]);
  }
  SUBCASE("non-monotone path is refused") {
    auto s = flat(0.0, 1, 400);
    s.loading = loading_from_knots(400, {{0, 0.1}, {200, 0.8}, {399, 0.2}});
    CHECK_THROWS_AS(expected_fragility_direction(s, r), ValidationError);
  }
}

TEST_CASE("spec validation and round trip") {
  auto s = scenario::planted_core(9, 12, 4, 0.7, 0.02, 500);
  s.exposures.assign(12, 0.75);
  s.anomalies = {{"cat_01", s.start + std::chrono::days(10), AnomalyKind::Shift, -0.3}};
  CHECK(parse_synth_spec(serialize_synth_spec(s)) == s);

  auto unseeded = s;
  unseeded.seed.reset();
  CHECK_THROWS_AS(unseeded.validate(), ValidationError);
  auto bad = s;
  bad.loading[3] = 1.5;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = s;
  bad.core = CoreBlock{13, 0.5};
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = s;
  bad.periphery_corr = -0.5;  // not positive definite for 12 categories
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  CHECK_THROWS_AS(parse_synth_spec(R"({"seed": 1, "n_days": 10, "loading": 0.2, "bogus": 1})"), ValidationError);

  const auto from_json = parse_synth_spec(R"({"seed": 3, "n_categories": 4, "n_days": 30, "loading": 0.25})");
  CHECK(from_json.loading == std::vector<double>(30, 0.25));
  const auto knots = parse_synth_spec(R"({"seed": 3, "n_days": 11, "loading_knots": [[0, 0], [10, 1]]})");
  CHECK(knots.loading[5] == doctest::Approx(0.5));
}

TEST_CASE("bundled fixture spec regenerates the committed panel") {
  const auto spec = load_synth_spec(std::filesystem::path(FRAGILITY_FIXTURES) / "synth_spec.json");
  const auto panel = load_snapshot(std::filesystem::path(FRAGILITY_FIXTURES) / "panel.csv");
  CHECK(panel.categories.size() == 70);
  CHECK(panel.dates.size() >= 1766);
  CHECK(identical(generate_panel(spec), panel));
}

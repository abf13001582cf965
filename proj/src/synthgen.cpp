#include "fragility/synthgen.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "fragility/hashing.hpp"

namespace fragility {

namespace {

// Stream tags for derive_seed.
enum : std::uint64_t { kFactorStream = 1, kNoiseStream = 2, kLevelStream = 3, kControlStream = 4 };

Matrix idiosyncratic_correlation(const SynthSpec& spec) {
  const int n = spec.n_categories;
  Matrix r = Matrix::Constant(n, n, spec.periphery_corr);
  if (spec.core) {
    r.topLeftCorner(spec.core->size, spec.core->size).setConstant(spec.core->intra_corr);
  }
  r.diagonal().setOnes();
  return r;
}

double exposure(const SynthSpec& spec, int i) {
  return spec.exposures.empty() ? 1.0 : spec.exposures[static_cast<std::size_t>(i)];
}

// Common factor path, shared by the panel and the controls.
Vector factor_path(const SynthSpec& spec) {
  std::mt19937_64 rng(derive_seed(*spec.seed, kFactorStream));
  std::normal_distribution<double> normal;
  Vector f(spec.n_days);
  for (auto& v : f) v = normal(rng);
  return f;
}

}  // namespace

std::string to_string(AnomalyKind k) {
  switch (k) {
    case AnomalyKind::AbsSpike: return "ABS_SPIKE";
    case AnomalyKind::RelSpike: return "REL_SPIKE";
    case AnomalyKind::Shift: return "SHIFT";
  }
  return "?";
}

AnomalyKind anomaly_kind_from_string(const std::string& s) {
  if (s == "ABS_SPIKE") return AnomalyKind::AbsSpike;
  if (s == "REL_SPIKE") return AnomalyKind::RelSpike;
  if (s == "SHIFT") return AnomalyKind::Shift;
  throw ValidationError("unknown anomaly type '" + s + "' (expected ABS_SPIKE, REL_SPIKE or SHIFT)");
}

std::string SynthSpec::category_name(int i) const {
  char buf[32];
  std::snprintf(buf, sizeof buf, "cat_%02d", i);
  return buf;
}

void SynthSpec::validate() const {
  if (!seed) throw ValidationError("synth spec: seed is mandatory");
  if (n_categories < 2) throw ValidationError("synth spec: n_categories must be >= 2");
  if (n_days < 3) throw ValidationError("synth spec: n_days must be >= 3");
  if (static_cast<int>(loading.size()) != n_days) {
    throw ValidationError("synth spec: loading path has " + std::to_string(loading.size()) + " entries, expected " +
                          std::to_string(n_days));
  }
  for (double l : loading) {
    if (!(l >= 0.0 && l <= 1.0)) throw ValidationError("synth spec: loadings must lie in [0,1]");
  }
  if (!exposures.empty()) {
    if (static_cast<int>(exposures.size()) != n_categories) {
      throw ValidationError("synth spec: exposures must have one entry per category");
    }
    for (double b : exposures) {
      if (!(b >= 0.0 && b <= 1.0)) throw ValidationError("synth spec: exposures must lie in [0,1]");
    }
  }
  if (core && (core->size < 0 || core->size > n_categories)) {
    throw ValidationError("synth spec: core size must be in [0, n_categories]");
  }
  if (core && !(core->intra_corr > -1.0 && core->intra_corr < 1.0)) {
    throw ValidationError("synth spec: core intra_corr must lie in (-1,1)");
  }
  if (!(periphery_corr > -1.0 && periphery_corr < 1.0)) {
    throw ValidationError("synth spec: periphery_corr must lie in (-1,1)");
  }
  if (!(noise_std > 0.0)) throw ValidationError("synth spec: noise_std must be positive");
  if (!(mean_reversion >= 0.0 && mean_reversion < 1.0)) {
    throw ValidationError("synth spec: mean_reversion must lie in [0,1)");
  }
  if (!(level_low > 0.0 && level_high >= level_low)) throw ValidationError("synth spec: bad level range");
  const Date last = start + std::chrono::days(n_days - 1);
  for (const auto& a : anomalies) {
    bool known = false;
    for (int i = 0; i < n_categories && !known; ++i) known = category_name(i) == a.category;
    if (!known) throw ValidationError("synth spec: anomaly names unknown category '" + a.category + "'");
    if (a.date < start || a.date > last) {
      throw ValidationError("synth spec: anomaly date " + format_date(a.date) + " outside the panel");
    }
    if (a.kind != AnomalyKind::AbsSpike && !(a.magnitude > -1.0)) {
      throw ValidationError("synth spec: relative anomaly magnitude must exceed -1");
    }
  }
  Eigen::LLT<Matrix> llt(idiosyncratic_correlation(*this));
  if (llt.info() != Eigen::Success) {
    throw ValidationError("synth spec: core/periphery correlations do not form a positive definite matrix");
  }
}

std::vector<double> loading_from_knots(int n_days, const std::vector<std::pair<int, double>>& knots) {
  if (knots.empty()) throw ValidationError("loading path needs at least one knot");
  for (std::size_t k = 1; k < knots.size(); ++k) {
    if (knots[k].first <= knots[k - 1].first) throw ValidationError("loading knots must have increasing days");
  }
  std::vector<double> out(static_cast<std::size_t>(n_days));
  for (int t = 0; t < n_days; ++t) {
    if (t <= knots.front().first) {
      out[static_cast<std::size_t>(t)] = knots.front().second;
    } else if (t >= knots.back().first) {
      out[static_cast<std::size_t>(t)] = knots.back().second;
    } else {
      auto hi = std::upper_bound(knots.begin(), knots.end(), t, [](int d, const auto& k) { return d < k.first; });
      auto lo = hi - 1;
      const double w = static_cast<double>(t - lo->first) / (hi->first - lo->first);
      out[static_cast<std::size_t>(t)] = (1.0 - w) * lo->second + w * hi->second;
    }
  }
  return out;
}

CategoryPanel generate_panel(const SynthSpec& spec) {
  spec.validate();
  const int n = spec.n_categories;
  const int days = spec.n_days;
  const Matrix chol = Eigen::LLT<Matrix>(idiosyncratic_correlation(spec)).matrixL();
  const Vector f = factor_path(spec);

  std::mt19937_64 noise_rng(derive_seed(*spec.seed, kNoiseStream));
  std::mt19937_64 level_rng(derive_seed(*spec.seed, kLevelStream));
  std::normal_distribution<double> normal;
  std::uniform_real_distribution<double> uniform(std::log(spec.level_low), std::log(spec.level_high));

  CategoryPanel panel;
  panel.values.resize(days, n);
  for (int i = 0; i < n; ++i) panel.categories.push_back(spec.category_name(i));
  for (int t = 0; t < days; ++t) panel.dates.push_back(spec.start + std::chrono::days(t));

  Vector base(n);
  for (int i = 0; i < n; ++i) base[i] = uniform(level_rng);
  Vector x = Vector::Zero(n);  // log level relative to base
  Vector z(n);
  for (int t = 0; t < days; ++t) {
    if (t > 0) {
      for (auto& v : z) v = normal(noise_rng);
      const Vector u = chol * z;
      for (int i = 0; i < n; ++i) {
        const double a = spec.loading[static_cast<std::size_t>(t)] * exposure(spec, i);
        x[i] += spec.noise_std * (a * f[t] + std::sqrt(1.0 - a * a) * u[i]) - spec.mean_reversion * x[i];
      }
    }
    panel.values.row(t) = (base + x).array().exp().transpose();
  }

  for (const auto& a : spec.anomalies) {
    const auto col = panel.category_index(a.category);
    const auto row = static_cast<Eigen::Index>((a.date - spec.start).count());
    switch (a.kind) {
      case AnomalyKind::AbsSpike: panel.values(row, col) += a.magnitude; break;
      case AnomalyKind::RelSpike: panel.values(row, col) *= 1.0 + a.magnitude; break;
      case AnomalyKind::Shift:
        panel.values.col(col).tail(days - row) *= 1.0 + a.magnitude;
        break;
    }
  }
  return panel;
}

ControlsInput generate_controls(const SynthSpec& spec) {
  spec.validate();
  const Vector f = factor_path(spec);
  std::mt19937_64 rng(derive_seed(*spec.seed, kControlStream));
  std::normal_distribution<double> normal;

  ControlsInput c;
  c.eth_price.resize(spec.n_days);
  c.btc_price.resize(spec.n_days);
  c.gas_fee.resize(spec.n_days);
  double log_eth = std::log(2000.0), log_btc = std::log(40000.0);
  for (int t = 0; t < spec.n_days; ++t) {
    const double l = spec.loading[static_cast<std::size_t>(t)];
    const double vol = 0.025 * (1.0 + 1.5 * l);
    if (t > 0) {
      const double eth_ret = vol * (0.6 * f[t] + 0.8 * normal(rng)) - 0.01 * (log_eth - std::log(2000.0));
      log_eth += eth_ret;
      log_btc += 0.7 * eth_ret + 0.01 * normal(rng) - 0.01 * (log_btc - std::log(40000.0));
    }
    c.dates.push_back(spec.start + std::chrono::days(t));
    c.eth_price[t] = std::exp(log_eth);
    c.btc_price[t] = std::exp(log_btc);
    c.gas_fee[t] = std::max(1.0, 20.0 + 40.0 * l + 5.0 * normal(rng));
  }
  return c;
}

std::vector<double> window_loadings(const SynthSpec& spec, const RollingConfig& rolling) {
  std::vector<Date> return_dates;
  for (int t = 1; t < spec.n_days; ++t) return_dates.push_back(spec.start + std::chrono::days(t));
  std::vector<double> out;
  for (const auto& w : rolling_windows(return_dates, rolling)) {
    double s = 0.0;
    for (auto r = w.first_row; r <= w.end_row; ++r) s += spec.loading[static_cast<std::size_t>(r + 1)];
    out.push_back(s / static_cast<double>(w.end_row - w.first_row + 1));
  }
  return out;
}

FragilityOrdering expected_fragility_direction(const SynthSpec& spec, const RollingConfig& rolling) {
  spec.validate();
  const auto& l = spec.loading;
  bool up = true, down = true;
  for (std::size_t t = 1; t < l.size(); ++t) {
    up = up && l[t] >= l[t - 1];
    down = down && l[t] <= l[t - 1];
  }
  FragilityOrdering out;
  if (up && down) {
    out.abstain = true;
    return out;
  }
  if (!up && !down) throw ValidationError("expected_fragility_direction: loading path is not monotone");
  std::vector<Date> return_dates;
  for (int t = 1; t < spec.n_days; ++t) return_dates.push_back(spec.start + std::chrono::days(t));
  for (const auto& w : rolling_windows(return_dates, rolling)) out.window_ends.push_back(w.window_end);
  out.planted = window_loadings(spec, rolling);
  return out;
}

// ---------------------------------------------------------------------------------------
// Spec file (JSON). The loading path is given either as explicit per-day values or as knots.

SynthSpec parse_synth_spec(const std::string& json_text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(std::string("synth spec: ") + e.what());
  }
  if (!j.is_object()) throw ValidationError("synth spec: top level must be an object");
  static const std::set<std::string> kKeys{"n_categories", "n_days",   "start",         "loading",
                                           "loading_knots", "exposures", "core",         "periphery_corr",
                                           "noise_std",    "mean_reversion", "level_range", "anomalies",
                                           "seed"};
  for (const auto& [key, _] : j.items()) {
    if (!kKeys.contains(key)) throw ValidationError("synth spec: unknown key '" + key + "'");
  }
  SynthSpec s;
  try {
    s.n_categories = j.value("n_categories", s.n_categories);
    s.n_days = j.value("n_days", s.n_days);
    if (j.contains("start")) s.start = parse_date(j["start"].get<std::string>());
    if (j.contains("loading") && j.contains("loading_knots")) {
      throw ValidationError("synth spec: give either loading or loading_knots, not both");
    }
    if (j.contains("loading")) {
      const auto& l = j["loading"];
      s.loading = l.is_number() ? std::vector<double>(static_cast<std::size_t>(s.n_days), l.get<double>())
                                : l.get<std::vector<double>>();
    } else if (j.contains("loading_knots")) {
      std::vector<std::pair<int, double>> knots;
      for (const auto& k : j["loading_knots"]) knots.emplace_back(k.at(0).get<int>(), k.at(1).get<double>());
      s.loading = loading_from_knots(s.n_days, knots);
    } else {
      s.loading.assign(static_cast<std::size_t>(s.n_days), 0.0);
    }
    if (j.contains("exposures")) s.exposures = j["exposures"].get<std::vector<double>>();
    if (j.contains("core") && !j["core"].is_null()) {
      s.core = CoreBlock{j["core"].at("size").get<int>(), j["core"].at("intra_corr").get<double>()};
    }
    s.periphery_corr = j.value("periphery_corr", s.periphery_corr);
    s.noise_std = j.value("noise_std", s.noise_std);
    s.mean_reversion = j.value("mean_reversion", s.mean_reversion);
    if (j.contains("level_range")) {
      s.level_low = j["level_range"].at(0).get<double>();
      s.level_high = j["level_range"].at(1).get<double>();
    }
    if (j.contains("anomalies")) {
      for (const auto& a : j["anomalies"]) {
        s.anomalies.push_back({a.at("category").get<std::string>(), parse_date(a.at("date").get<std::string>()),
                               anomaly_kind_from_string(a.at("type").get<std::string>()),
                               a.at("magnitude").get<double>()});
      }
    }
    if (j.contains("seed")) s.seed = j["seed"].get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("synth spec: ") + e.what());
  }
  s.validate();
  return s;
}

SynthSpec load_synth_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open synth spec " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_synth_spec(ss.str());
}

std::string serialize_synth_spec(const SynthSpec& s) {
  nlohmann::ordered_json j;
  j["n_categories"] = s.n_categories;
  j["n_days"] = s.n_days;
  j["start"] = format_date(s.start);
  j["loading"] = s.loading;
  if (!s.exposures.empty()) j["exposures"] = s.exposures;
  if (s.core) j["core"] = {{"size", s.core->size}, {"intra_corr", s.core->intra_corr}};
  j["periphery_corr"] = s.periphery_corr;
  j["noise_std"] = s.noise_std;
  j["mean_reversion"] = s.mean_reversion;
  j["level_range"] = {s.level_low, s.level_high};
  auto anomalies = nlohmann::ordered_json::array();
  for (const auto& a : s.anomalies) {
    anomalies.push_back(
        {{"category", a.category}, {"date", format_date(a.date)}, {"type", to_string(a.kind)}, {"magnitude", a.magnitude}});
  }
  j["anomalies"] = anomalies;
  if (s.seed) j["seed"] = *s.seed;
  return j.dump(2) + "\n";
}

}  // namespace fragility

#include "fragility/config.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

namespace fragility {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

std::string to_string(CleaningLevel l) {
  switch (l) {
    case CleaningLevel::Auto: return "auto";
    case CleaningLevel::Protocol: return "protocol";
    case CleaningLevel::Category: return "category";
  }
  return "?";
}

CleaningLevel cleaning_level_from_string(const std::string& s) {
  if (s == "auto") return CleaningLevel::Auto;
  if (s == "protocol") return CleaningLevel::Protocol;
  if (s == "category") return CleaningLevel::Category;
  throw ValidationError("cleaning.level must be auto|protocol|category, got '" + s + "'");
}

std::string quantile_name(stats::QuantileMethod m) {
  return m == stats::QuantileMethod::Type7 ? "type7" : "inverted_cdf";
}

stats::QuantileMethod quantile_from_string(const std::string& s) {
  if (s == "type7") return stats::QuantileMethod::Type7;
  if (s == "inverted_cdf") return stats::QuantileMethod::InvertedCdf;
  throw ValidationError("returns.winsor_quantile must be type7|inverted_cdf, got '" + s + "'");
}

std::string stars_name(StarDistribution d) { return d == StarDistribution::Normal ? "normal" : "student_t"; }

StarDistribution stars_from_string(const std::string& s) {
  if (s == "normal") return StarDistribution::Normal;
  if (s == "student_t") return StarDistribution::StudentT;
  throw ValidationError("regression.stars must be normal|student_t, got '" + s + "'");
}

// Reads keys from one JSON object and rejects whatever was not consumed.
class Section {
 public:
  Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
    if (!j_.is_object()) throw ValidationError("config: '" + name_ + "' must be an object");
  }

  template <typename T>
  void get(const std::string& key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ValidationError("config: " + path(key) + " has the wrong type");
    }
  }

  template <typename T, typename Conv>
  void get_as(const std::string& key, T& out, Conv conv) {
    std::string s;
    get(key, s);
    if (j_.contains(key)) out = conv(s);
  }

  std::optional<Section> section(const std::string& key) {
    seen_.insert(key);
    if (!j_.contains(key)) return std::nullopt;
    return Section(j_.at(key), path(key));
  }

  void finish() const {
    for (const auto& [key, _] : j_.items()) {
      if (!seen_.contains(key)) throw ValidationError("config: unknown key '" + path(key) + "'");
    }
  }

 private:
  std::string path(const std::string& key) const { return name_.empty() ? key : name_ + "." + key; }

  const json& j_;
  std::string name_;
  std::set<std::string> seen_;
};

void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ValidationError("override '" + assignment + "' must look like section.key=value");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(text);
  } catch (const json::parse_error&) {
    value = text;  // bare word
  }
  json* node = &doc;
  std::size_t pos = 0;
  while (true) {
    const auto dot = key.find('.', pos);
    const std::string part = key.substr(pos, dot == std::string::npos ? std::string::npos : dot - pos);
    if (part.empty()) throw ValidationError("override '" + assignment + "' has an empty key segment");
    if (!node->is_object()) throw ValidationError("override '" + assignment + "' descends into a non-object");
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    node = &(*node)[part];
    if (node->is_null()) *node = json::object();
    pos = dot + 1;
  }
}

template <typename T>
bool strictly_increasing(const std::vector<T>& v) {
  return std::adjacent_find(v.begin(), v.end(), [](T a, T b) { return a >= b; }) == v.end();
}

}  // namespace

void PipelineConfig::validate() const {
  auto fail = [](const std::string& m) { throw ValidationError("config: " + m); };
  if (snapshot.empty() && api_base.empty()) fail("data.snapshot or data.api_base is required");
  if (cache_policy != "network_first" && cache_policy != "cache_only") {
    fail("data.cache_policy must be network_first|cache_only");
  }
  if (!start.empty()) parse_date(start);
  if (!end.empty()) parse_date(end);
  if (!start.empty() && !end.empty() && parse_date(end) < parse_date(start)) fail("data.end precedes data.start");
  if (!(tau_abs > 0) || !(tau_rel > 0) || !(tau_mad > 0) || !(mad_scale > 0)) {
    fail("cleaning thresholds must be positive");
  }
  if (reversal_horizon < 1) fail("cleaning.reversal_horizon must be >= 1");
  if (!(reversal_band > 0)) fail("cleaning.reversal_band must be positive");
  if (!(return_epsilon > 0)) fail("returns.epsilon must be positive");
  if (!(winsor_level >= 0 && winsor_level < 0.5)) fail("returns.winsor_level must lie in [0, 0.5)");
  try {
    rolling_config().validate();
  } catch (const ValidationError& e) {
    fail(std::string("rolling: ") + e.what());
  }
  if (!(rho > 0 && rho < 1)) fail("network.rho must lie in (0,1)");
  if (rho_grid.empty()) fail("network.rho_grid must not be empty");
  for (double r : rho_grid) {
    if (!(r > 0 && r < 1)) fail("network.rho_grid values must lie in (0,1)");
  }
  if (!(glasso_rho > 0)) fail("network.glasso_rho must be positive");
  for (double r : glasso_sweep) {
    if (!(r > 0)) fail("robustness.glasso_sweep values must be positive");
  }
  if (!(rcs_epsilon > 0)) fail("rcs.epsilon must be positive");
  if (!(high_quantile > 0 && high_quantile < 1)) fail("rcs.high_quantile must lie in (0,1)");
  if (k_grid.empty() || k_grid.front() < 1 || !strictly_increasing(k_grid)) {
    fail("attack.k_grid must be strictly increasing positive integers");
  }
  if (mc_draws < 2) fail("attack.mc_draws must be >= 2");
  if (!(regime_tail > 0 && regime_tail <= 0.5)) fail("attack.regime_tail must lie in (0, 0.5]");
  for (int h : horizons) {
    if (h < 2) fail("regression.horizons must be >= 2");
  }
  if (vol_window < 2) fail("regression.vol_window must be >= 2");
  if (!(annualization > 0)) fail("regression.annualization must be positive");
  if (output_dir.empty()) fail("output_dir must not be empty");
}

AnomalyConfig PipelineConfig::anomaly_config() const {
  return {tau_abs, tau_rel, tau_mad, mad_scale, reversal_horizon, reversal_band};
}

WinsorConfig PipelineConfig::winsor_config() const { return {winsor_level, winsor_quantile, winsor_pooled}; }

RollingConfig PipelineConfig::rolling_config() const { return {window, step}; }

MetricOptions PipelineConfig::metric_options() const { return {rho, spectrum, 0}; }

AttackConfig PipelineConfig::attack_config() const {
  AttackConfig a;
  a.k_grid = k_grid;
  a.mc_draws = mc_draws;
  a.seed = seed;
  a.pooled_random = pooled_random;
  a.greedy = greedy;
  a.jobs = jobs;
  return a;
}

EconConfig PipelineConfig::econ_config() const { return {horizons, annualization, vol_window, stars}; }

ApiOptions PipelineConfig::api_options() const {
  ApiOptions o;
  o.api_base = api_base;
  o.cache_dir = cache_dir;
  o.policy = cache_policy == "cache_only" ? CachePolicy::CacheOnly : CachePolicy::NetworkFirst;
  return o;
}

std::string serialize_config(const PipelineConfig& c) {
  ordered_json j;
  j["schema_version"] = kConfigSchemaVersion;
  j["data"] = {{"snapshot", c.snapshot},         {"api_base", c.api_base}, {"cache_dir", c.cache_dir},
               {"cache_policy", c.cache_policy}, {"start", c.start},       {"end", c.end},
               {"controls", c.controls},         {"source_label", c.source_label}};
  j["exclusions"] = c.exclusions;
  j["cleaning"] = {{"tau_abs", c.tau_abs},
                   {"tau_rel", c.tau_rel},
                   {"tau_mad", c.tau_mad},
                   {"mad_scale", c.mad_scale},
                   {"reversal_horizon", c.reversal_horizon},
                   {"reversal_band", c.reversal_band},
                   {"level", to_string(c.cleaning_level)}};
  j["returns"] = {{"epsilon", c.return_epsilon},
                  {"winsor_level", c.winsor_level},
                  {"winsor_quantile", quantile_name(c.winsor_quantile)},
                  {"winsor_pooled", c.winsor_pooled}};
  j["rolling"] = {{"window", c.window}, {"step", c.step}};
  j["network"] = {{"estimator", to_string(c.estimator)},
                  {"rho", c.rho},
                  {"rho_grid", c.rho_grid},
                  {"spectrum", to_string(c.spectrum)},
                  {"glasso_rho", c.glasso_rho}};
  j["rcs"] = {{"epsilon", c.rcs_epsilon}, {"high_quantile", c.high_quantile}, {"frozen_n", c.rcs_frozen_n}};
  j["attack"] = {{"k_grid", c.k_grid},           {"mc_draws", c.mc_draws},
                 {"seed", c.seed},               {"regime_tail", c.regime_tail},
                 {"pooled_random", c.pooled_random}, {"greedy", c.greedy}};
  j["regression"] = {{"horizons", c.horizons},
                     {"vol_window", c.vol_window},
                     {"annualization", c.annualization},
                     {"stars", stars_name(c.stars)}};
  j["robustness"] = {{"glasso_sweep", c.glasso_sweep}};
  j["output_dir"] = c.output_dir;
  j["jobs"] = c.jobs;
  return j.dump(2) + "\n";
}

PipelineConfig parse_config(const std::string& json_text, const std::vector<std::string>& overrides) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  for (const auto& o : overrides) apply_override(doc, o);

  PipelineConfig c;
  Section top(doc, "");
  int version = kConfigSchemaVersion;
  top.get("schema_version", version);
  if (version != kConfigSchemaVersion) {
    throw ValidationError("config: schema_version " + std::to_string(version) + " is not supported (expected " +
                          std::to_string(kConfigSchemaVersion) + ")");
  }
  if (auto s = top.section("data")) {
    s->get("snapshot", c.snapshot);
    s->get("api_base", c.api_base);
    s->get("cache_dir", c.cache_dir);
    s->get("cache_policy", c.cache_policy);
    s->get("start", c.start);
    s->get("end", c.end);
    s->get("controls", c.controls);
    s->get("source_label", c.source_label);
    s->finish();
  }
  top.get("exclusions", c.exclusions);
  if (auto s = top.section("cleaning")) {
    s->get("tau_abs", c.tau_abs);
    s->get("tau_rel", c.tau_rel);
    s->get("tau_mad", c.tau_mad);
    s->get("mad_scale", c.mad_scale);
    s->get("reversal_horizon", c.reversal_horizon);
    s->get("reversal_band", c.reversal_band);
    s->get_as("level", c.cleaning_level, cleaning_level_from_string);
    s->finish();
  }
  if (auto s = top.section("returns")) {
    s->get("epsilon", c.return_epsilon);
    s->get("winsor_level", c.winsor_level);
    s->get_as("winsor_quantile", c.winsor_quantile, quantile_from_string);
    s->get("winsor_pooled", c.winsor_pooled);
    s->finish();
  }
  if (auto s = top.section("rolling")) {
    s->get("window", c.window);
    s->get("step", c.step);
    s->finish();
  }
  if (auto s = top.section("network")) {
    s->get_as("estimator", c.estimator, correlation_source_from_string);
    s->get("rho", c.rho);
    s->get("rho_grid", c.rho_grid);
    s->get_as("spectrum", c.spectrum, spectrum_source_from_string);
    s->get("glasso_rho", c.glasso_rho);
    s->finish();
  }
  if (auto s = top.section("rcs")) {
    s->get("epsilon", c.rcs_epsilon);
    s->get("high_quantile", c.high_quantile);
    s->get("frozen_n", c.rcs_frozen_n);
    s->finish();
  }
  if (auto s = top.section("attack")) {
    s->get("k_grid", c.k_grid);
    s->get("mc_draws", c.mc_draws);
    s->get("seed", c.seed);
    s->get("regime_tail", c.regime_tail);
    s->get("pooled_random", c.pooled_random);
    s->get("greedy", c.greedy);
    s->finish();
  }
  if (auto s = top.section("regression")) {
    s->get("horizons", c.horizons);
    s->get("vol_window", c.vol_window);
    s->get("annualization", c.annualization);
    s->get_as("stars", c.stars, stars_from_string);
    s->finish();
  }
  if (auto s = top.section("robustness")) {
    s->get("glasso_sweep", c.glasso_sweep);
    s->finish();
  }
  top.get("output_dir", c.output_dir);
  top.get("jobs", c.jobs);
  top.finish();
  c.validate();
  return c;
}

PipelineConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  PipelineConfig c = parse_config(ss.str(), overrides);
  const auto base = path.parent_path();
  auto resolve = [&](std::string& p) {
    if (!p.empty() && std::filesystem::path(p).is_relative()) p = (base / p).lexically_normal().string();
  };
  resolve(c.snapshot);
  resolve(c.controls);
  resolve(c.cache_dir);
  return c;
}

}  // namespace fragility

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fragility/attack.hpp"
#include "fragility/cfi.hpp"
#include "fragility/clean.hpp"
#include "fragility/econ.hpp"
#include "fragility/estimators.hpp"
#include "fragility/ingest.hpp"
#include "fragility/netmetrics.hpp"

namespace fragility {

inline constexpr int kConfigSchemaVersion = 1;

enum class CleaningLevel { Auto, Protocol, Category };

/// Every tunable of a pipeline run. Stored as a JSON document with one object per stage;
/// see README for the schema. Relative input paths resolve against the config file's directory.
struct PipelineConfig {
  // data
  std::string snapshot;  // category snapshot file; when set the network is never touched
  std::string api_base = "https://api.llama.fi";
  std::string cache_dir = ".fragility-cache";
  std::string cache_policy = "network_first";
  std::string start;  // ISO dates bounding the panel; empty = data extent
  std::string end;
  std::string controls;      // market controls CSV; regressions are skipped without it
  std::string source_label;  // free text recorded in the manifest (e.g. surrogate vs live)
  std::vector<std::string> exclusions{"CEX", "Chain"};

  // cleaning
  double tau_abs = 5'000'000.0;
  double tau_rel = 2.0;
  double tau_mad = 12.0;
  double mad_scale = 1.0;
  int reversal_horizon = 3;
  double reversal_band = 0.25;
  CleaningLevel cleaning_level = CleaningLevel::Auto;

  // returns
  double return_epsilon = 1e-11;
  double winsor_level = 0.005;
  stats::QuantileMethod winsor_quantile = stats::QuantileMethod::InvertedCdf;
  bool winsor_pooled = false;

  // rolling networks
  int window = 120;
  int step = 7;
  CorrelationSource estimator = CorrelationSource::Shrinkage;
  double rho = 0.3;
  std::vector<double> rho_grid{0.25, 0.30, 0.35};
  SpectrumSource spectrum = SpectrumSource::Correlation;
  double glasso_rho = 0.05;

  // rcs
  double rcs_epsilon = 1e-8;
  double high_quantile = 0.75;
  bool rcs_frozen_n = false;

  // attack
  std::vector<int> k_grid{1, 3, 5, 10};
  int mc_draws = 200;
  std::uint64_t seed = 20251031;
  double regime_tail = 0.20;
  bool pooled_random = false;
  bool greedy = false;

  // regressions
  std::vector<int> horizons{7, 14, 30};
  int vol_window = 30;
  double annualization = 365.0;
  StarDistribution stars = StarDistribution::Normal;

  // robustness
  std::vector<double> glasso_sweep;  // extra Glasso penalties reported beside glasso_rho

  std::string output_dir = "out";
  unsigned jobs = 1;

  bool operator==(const PipelineConfig&) const = default;

  /// Check every field against the stage preconditions. Throws ValidationError.
  void validate() const;

  AnomalyConfig anomaly_config() const;
  WinsorConfig winsor_config() const;
  RollingConfig rolling_config() const;
  MetricOptions metric_options() const;
  AttackConfig attack_config() const;
  EconConfig econ_config() const;
  ApiOptions api_options() const;
};

/// Parse a config document. Unknown keys anywhere are rejected; missing keys keep defaults.
/// `overrides` are "section.key=value" assignments applied on top of the document, where value
/// is JSON (bare words are taken as strings).
PipelineConfig parse_config(const std::string& json_text, const std::vector<std::string>& overrides = {});
std::string serialize_config(const PipelineConfig& cfg);

/// Load from disk and resolve relative input paths against the file's directory.
PipelineConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});

}  // namespace fragility

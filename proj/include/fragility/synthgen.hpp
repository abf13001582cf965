#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fragility/cfi.hpp"
#include "fragility/econ.hpp"
#include "fragility/ingest.hpp"

namespace fragility {

enum class AnomalyKind { AbsSpike, RelSpike, Shift };

std::string to_string(AnomalyKind k);
AnomalyKind anomaly_kind_from_string(const std::string& s);

/// One planted anomaly. Spikes touch exactly one cell; a shift rescales the level from
/// `date` to the end of the panel.
struct PlantedAnomaly {
  std::string category;
  Date date{};
  AnomalyKind kind = AnomalyKind::AbsSpike;
  double magnitude = 0.0;  // USD added (AbsSpike) or relative change (RelSpike, Shift)

  bool operator==(const PlantedAnomaly&) const = default;
};

struct CoreBlock {
  int size = 0;
  double intra_corr = 0.0;

  bool operator==(const CoreBlock&) const = default;
};

/// Parameters of a one-factor panel with an optional planted core.
///
/// Daily log returns are r_it = s (l_t b_i f_t + sqrt(1 - (l_t b_i)^2) u_it) - k x_i,t-1 where
/// f_t ~ N(0,1), u_t ~ N(0, R) with R carrying the core block, x the cumulated log level and
/// k a weak pull that keeps levels in a realistic USD band.
struct SynthSpec {
  int n_categories = 20;
  int n_days = 1000;
  Date start = Date{std::chrono::year{2021} / 1 / 1};
  std::vector<double> loading;    // per-day factor loading in [0,1]; size n_days
  std::vector<double> exposures;  // b_i in [0,1]; empty means all 1
  std::optional<CoreBlock> core;
  double periphery_corr = 0.0;  // idiosyncratic correlation for every pair outside the core
  double noise_std = 0.02;
  double mean_reversion = 0.01;
  double level_low = 1e6;   // initial levels are log-uniform on [level_low, level_high]
  double level_high = 2e7;
  std::vector<PlantedAnomaly> anomalies;
  std::optional<std::uint64_t> seed;

  void validate() const;
  std::string category_name(int i) const;
  bool operator==(const SynthSpec&) const = default;
};

/// Piecewise-linear loading path through (day, value) knots, flat beyond the ends.
std::vector<double> loading_from_knots(int n_days, const std::vector<std::pair<int, double>>& knots);

CategoryPanel generate_panel(const SynthSpec& spec);

/// ETH/BTC prices and gas fees whose volatility rises with the planted loading.
ControlsInput generate_controls(const SynthSpec& spec);

/// Planted loading averaged over each rolling window of the return panel (return t uses
/// loading[t]).
std::vector<double> window_loadings(const SynthSpec& spec, const RollingConfig& rolling);

struct FragilityOrdering {
  bool abstain = false;            // constant loading: no ordering is implied
  std::vector<Date> window_ends;
  std::vector<double> planted;     // window-average loading; higher means higher expected CFI
};

/// The ordering of window CFI implied by a monotone loading path. Throws ValidationError on a
/// non-monotone path.
FragilityOrdering expected_fragility_direction(const SynthSpec& spec, const RollingConfig& rolling = {});

SynthSpec parse_synth_spec(const std::string& json_text);
SynthSpec load_synth_spec(const std::filesystem::path& path);
std::string serialize_synth_spec(const SynthSpec& spec);

}  // namespace fragility

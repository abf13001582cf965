#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fragility/common.hpp"
#include "fragility/ingest.hpp"
#include "fragility/stats.hpp"

namespace fragility {

enum class AnomalyRule : unsigned { Abs = 1u, Rel = 2u, Mad = 4u };
enum class AnomalyClass { Technical, Persistent };

struct AnomalyFlag {
  std::string category;
  Date date;
  unsigned rule_hits = 0;  // bitmask of AnomalyRule, never 0
  AnomalyClass classification = AnomalyClass::Technical;
  double original_value = 0.0;
  std::optional<double> repaired_value;  // set iff Technical, after repair_series

  bool hit(AnomalyRule r) const { return (rule_hits & static_cast<unsigned>(r)) != 0; }
};

std::string rules_to_string(unsigned rule_hits);

struct AnomalyConfig {
  double tau_abs = 5'000'000.0;  // USD
  double tau_rel = 2.0;          // ratio, 2.0 == 200%
  double tau_mad = 12.0;         // applied to raw MAD (no 1.4826 consistency factor)
  double mad_scale = 1.0;
  int reversal_horizon = 3;      // days within which a spike must revert to count as technical
  double reversal_band = 0.25;   // revert means |v - pre_jump| <= band * |pre_jump|
};

/// Flags for one series (NaN cells are skipped). Exposed for protocol-level cleaning.
std::vector<AnomalyFlag> detect_series_anomalies(const Eigen::Ref<const Eigen::VectorXd>& values,
                                                 const std::vector<Date>& dates, const std::string& name,
                                                 const AnomalyConfig& cfg, Diagnostics* diag = nullptr);

/// Three-rule detector over every category of the panel.
std::vector<AnomalyFlag> detect_anomalies(const CategoryPanel& panel, const AnomalyConfig& cfg = {},
                                          Diagnostics* diag = nullptr);

/// Replace Technical cells by linear interpolation between the nearest unflagged observed
/// neighbours (nearest-neighbour fill at the edges). Persistent cells are untouched.
/// `flags` receives repaired_value. Categories with no unflagged observation are dropped.
CategoryPanel repair_series(const CategoryPanel& panel, std::vector<AnomalyFlag>& flags,
                            Diagnostics* diag = nullptr);

/// Detect and repair each protocol before aggregation.
std::vector<ProtocolRecord> clean_protocol_records(const std::vector<ProtocolRecord>& records,
                                                   const AnomalyConfig& cfg, std::vector<AnomalyFlag>* flags,
                                                   Diagnostics* diag = nullptr);

/// Forward-fill interior/trailing gaps, then backward-fill leading gaps.
CategoryPanel fill_gaps(const CategoryPanel& panel);

struct RawReturns {
  std::vector<Date> dates;
  std::vector<std::string> categories;
  Matrix values;
};

/// log(TVL_t + eps) - log(TVL_{t-1} + eps) after gap filling; one fewer row than the panel.
RawReturns compute_log_returns(const CategoryPanel& panel, double eps = 1e-11);

struct ReturnMatrix {
  std::vector<Date> dates;
  std::vector<std::string> categories;
  Matrix returns;
  std::vector<std::pair<double, double>> winsor_bounds;
  std::vector<std::string> dropped_categories;
};

struct WinsorConfig {
  double level = 0.005;
  stats::QuantileMethod method = stats::QuantileMethod::InvertedCdf;
  bool pooled = false;  // one pair of cut values for all categories
};

/// Clip each category at its [level, 1-level] quantiles and drop zero-variance categories.
ReturnMatrix winsorize_and_balance(const RawReturns& raw, const WinsorConfig& cfg = {},
                                   Diagnostics* diag = nullptr);

void save_anomaly_report(const std::vector<AnomalyFlag>& flags, const std::filesystem::path& path);

inline constexpr const char* kReturnsKind = "fragility-returns";
void save_returns(const ReturnMatrix& r, const std::filesystem::path& path);
ReturnMatrix load_returns(const std::filesystem::path& path);

}  // namespace fragility

#pragma once

#include <array>
#include <filesystem>
#include <vector>

#include "fragility/clean.hpp"
#include "fragility/netmetrics.hpp"

namespace fragility {

struct RollingConfig {
  int window_length = 120;
  int step = 7;

  void validate() const;
};

/// A trailing block of `window_length` rows ending (inclusive) at `end_row`.
struct Window {
  Date window_end;
  Eigen::Index first_row = 0;
  Eigen::Index end_row = 0;

  template <typename Derived>
  auto block(const Eigen::MatrixBase<Derived>& returns) const {
    return returns.middleRows(first_row, end_row - first_row + 1);
  }
};

/// Window ends at rows W-1, W-1+step, ... (0-based). Fewer than W rows yields no windows.
std::vector<Window> rolling_windows(const std::vector<Date>& dates, const RollingConfig& cfg,
                                    Diagnostics* diag = nullptr);
inline std::vector<Window> rolling_windows(const ReturnMatrix& r, const RollingConfig& cfg, Diagnostics* diag = nullptr) {
  return rolling_windows(r.dates, cfg, diag);
}

/// Frozen mapping from the four fragility metrics to the CFI.
struct CfiModel {
  Eigen::Vector4d metric_means = Eigen::Vector4d::Zero();
  Eigen::Vector4d metric_stds = Eigen::Vector4d::Ones();
  Eigen::Vector4d loading = Eigen::Vector4d::Zero();  // unit norm, loading[avg_strength] > 0
  int orientation = 1;                                 // sign applied to the raw top eigenvector
  double output_mean = 0.0;
  double output_std = 1.0;
  double pc1_variance_share = 0.0;
  Eigen::Vector4d eigenvalues = Eigen::Vector4d::Zero();  // descending

  bool operator==(const CfiModel&) const = default;
};

struct CfiValue {
  double raw = 0.0;
  double standardized = 0.0;
};

/// Standardise the metrics with full-sample moments, take the leading eigenvector of their
/// covariance, orient it so the average-strength loading is positive, then record the
/// moments of the resulting raw scores.
CfiModel fit_cfi_model(const std::vector<FragilityMetrics>& series);

inline double raw_cfi(const CfiModel& model, const Eigen::Vector4d& metrics) {
  return model.loading.dot(((metrics - model.metric_means).array() / model.metric_stds.array()).matrix());
}

inline CfiValue apply_cfi_model(const CfiModel& model, const FragilityMetrics& metrics) {
  const double raw = raw_cfi(model, metrics.as_vector());
  return {raw, (raw - model.output_mean) / model.output_std};
}

struct CfiPoint {
  Date window_end;
  double cfi = 0.0;
  double raw = 0.0;
  FragilityMetrics metrics;
};

using CfiSeries = std::vector<CfiPoint>;

CfiSeries apply_cfi_series(const CfiModel& model, const std::vector<FragilityMetrics>& series);

/// Real-time variant: the model at window t is fitted on windows [0, t] only. Windows before
/// `min_history` are skipped.
CfiSeries expanding_cfi_series(const std::vector<FragilityMetrics>& series, std::size_t min_history = 8);

void save_cfi_series(const CfiSeries& series, const std::filesystem::path& path);
CfiSeries load_cfi_series(const std::filesystem::path& path);

inline constexpr int kModelSchemaVersion = 1;
std::string serialize_model(const CfiModel& model);
CfiModel parse_model(const std::string& text);
void save_model(const CfiModel& model, const std::filesystem::path& path);
CfiModel load_model(const std::filesystem::path& path);

}  // namespace fragility

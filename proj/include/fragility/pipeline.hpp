#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "fragility/attack.hpp"
#include "fragility/cfi.hpp"
#include "fragility/clean.hpp"
#include "fragility/config.hpp"
#include "fragility/econ.hpp"
#include "fragility/ingest.hpp"
#include "fragility/netmetrics.hpp"
#include "fragility/rcs.hpp"

namespace fragility {

inline constexpr const char* kLibraryVersion = "1.0.0";

/// Stage failure: wraps the underlying error and keeps its exit code.
class StageError : public Error {
 public:
  StageError(const std::string& stage, const Error& cause)
      : Error("stage '" + stage + "' failed: " + cause.what()), stage_(stage), code_(cause.exit_code()) {}
  int exit_code() const override { return code_; }
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
  int code_;
};

/// One rolling window's estimate plus the shrinkage diagnostics when applicable.
struct WindowNetwork {
  NetworkSnapshot net;
  FragilityMetrics metrics;
  double shrinkage = std::numeric_limits<double>::quiet_NaN();
  double target_scale = std::numeric_limits<double>::quiet_NaN();
};

/// Correlation of one window block under the chosen estimator.
CorrelationMatrix<double> estimate_correlation(const Eigen::Ref<const Matrix>& block, CorrelationSource source,
                                               double glasso_rho, const std::vector<std::string>& names,
                                               CovarianceEstimate<double>* lw = nullptr);

std::vector<WindowNetwork> build_networks(const ReturnMatrix& returns, const RollingConfig& rolling,
                                          CorrelationSource source, double glasso_rho, const MetricOptions& opt,
                                          unsigned jobs, Diagnostics* diag = nullptr);

/// Output layout under the run directory.
struct OutputLayout {
  std::filesystem::path root;

  std::filesystem::path panel() const { return root / "panel"; }
  std::filesystem::path returns() const { return root / "returns"; }
  std::filesystem::path networks() const { return root / "networks"; }
  std::filesystem::path cfi() const { return root / "cfi"; }
  std::filesystem::path rcs() const { return root / "rcs"; }
  std::filesystem::path attack() const { return root / "attack"; }
  std::filesystem::path regressions() const { return root / "regressions"; }
  std::filesystem::path robustness() const { return root / "robustness"; }
  std::filesystem::path manifest() const { return root / "manifest"; }
};

struct RobustnessReport {
  std::vector<Date> window_ends;
  std::map<std::string, std::vector<double>> proxies;    // z-scored average strength per estimator
  std::map<std::string, std::vector<double>> densities;  // strong-edge density per cutoff
  struct Pair {
    std::string family, a, b;
    double correlation = 0.0;
  };
  std::vector<Pair> correlations;

  double correlation(const std::string& a, const std::string& b) const;
};

// Individual stages. Each reads its inputs from `out` (written by the earlier stages) unless
// they are passed in, and writes its artifacts under its own subdirectory.
CategoryPanel stage_ingest(const PipelineConfig& cfg, const OutputLayout& out, Diagnostics* diag);

struct CleanOutput {
  CategoryPanel panel;  // repaired and gap-filled, restricted to the surviving categories
  ReturnMatrix returns;
  std::vector<AnomalyFlag> flags;
};

CleanOutput stage_clean(const PipelineConfig& cfg, const CategoryPanel& raw, const OutputLayout& out,
                        Diagnostics* diag);
std::vector<WindowNetwork> stage_networks(const PipelineConfig& cfg, const CleanOutput& clean,
                                          const OutputLayout& out, Diagnostics* diag);
std::pair<CfiModel, CfiSeries> stage_cfi(const PipelineConfig& cfg, const std::vector<FragilityMetrics>& metrics,
                                         const OutputLayout& out);
std::vector<RcsWindow> stage_rcs(const PipelineConfig& cfg, const CfiModel& model,
                                 const std::vector<WindowNetwork>& nets, const CategoryPanel& panel,
                                 const OutputLayout& out, Diagnostics* diag);
AttackResult stage_attack(const PipelineConfig& cfg, const CfiModel& model, const std::vector<WindowNetwork>& nets,
                          const std::vector<RcsWindow>& rcs, const CfiSeries& cfi, const OutputLayout& out,
                          Diagnostics* diag);
std::vector<RegressionResult> stage_regress(const PipelineConfig& cfg, const CfiSeries& cfi,
                                            const CategoryPanel& panel, const OutputLayout& out, Diagnostics* diag);
RobustnessReport stage_robustness(const PipelineConfig& cfg, const ReturnMatrix& returns, const OutputLayout& out,
                                  Diagnostics* diag);

// Loaders used by the single-stage commands.
CategoryPanel load_stage_panel(const OutputLayout& out);
CleanOutput load_stage_clean(const OutputLayout& out);

struct RunInputs {
  std::string config_text;             // bytes of the config file as read
  std::vector<std::string> overrides;  // --set assignments, in order
};

/// Every stage in dependency order into a staging directory that replaces `cfg.output_dir` on
/// success. On failure the staging directory is renamed to "<output_dir>.failed" and a
/// StageError names the stage. Writes manifest/manifest.json.
void run_pipeline(const PipelineConfig& cfg, const RunInputs& inputs, Diagnostics* diag);

/// Manifest text (stable key order, no timestamps) over every file under `root` except the
/// manifest itself.
std::string build_manifest(const PipelineConfig& cfg, const RunInputs& inputs, const std::filesystem::path& root,
                           const Diagnostics& diag);

}  // namespace fragility

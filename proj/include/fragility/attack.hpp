#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "fragility/cfi.hpp"
#include "fragility/rcs.hpp"

namespace fragility {

enum class AttackStrategy { TargetedRcs, Strength, Random };
enum class Regime { All, High, Low };

std::string to_string(AttackStrategy s);
std::string to_string(Regime r);
AttackStrategy attack_strategy_from_string(const std::string& s);

struct AttackRun {
  Date window_end{};
  int k = 0;
  AttackStrategy strategy = AttackStrategy::TargetedRcs;
  std::vector<std::string> removed;
  double cfi_full = 0.0;
  double cfi_after = 0.0;
  double delta = 0.0;         // cfi_full - cfi_after
  std::uint64_t mc_seed = 0;  // Random only
  int draw = -1;              // Random only

  bool operator==(const AttackRun&) const = default;
};

struct AttackSummaryRow {
  Regime regime = Regime::All;
  AttackStrategy strategy = AttackStrategy::TargetedRcs;
  int k = 0;
  double mean_delta = 0.0;
  double band_low = 0.0;   // 2.5% across dates of per-date deltas
  double band_high = 0.0;  // 97.5%
  int n_windows = 0;
};

struct AttackSummary {
  std::vector<AttackSummaryRow> rows;
  std::map<std::pair<Regime, int>, double> targeted_minus_random;

  const AttackSummaryRow& at(Regime r, AttackStrategy s, int k) const;
};

struct AttackConfig {
  std::vector<int> k_grid{1, 3, 5, 10};
  std::vector<AttackStrategy> strategies{AttackStrategy::TargetedRcs, AttackStrategy::Strength, AttackStrategy::Random};
  int mc_draws = 200;
  std::uint64_t seed = 20251031;
  bool pooled_random = false;  // random band over all draws instead of per-date means
  bool greedy = false;         // targeted: re-rank by RCS after each single removal
  unsigned jobs = 1;
};

struct AttackResult {
  std::vector<AttackRun> runs;
  AttackSummary summary;  // regime All
};

/// Remove all `categories` at once and score the reduced network with the frozen model.
std::pair<double, double> remove_k_and_score(const CfiModel& model, const NetworkSnapshot& net,
                                             const std::vector<std::string>& categories, const MetricOptions& opt = {});

/// Top-k node indices by descending score, ties by ascending name.
std::vector<Eigen::Index> top_k(const Eigen::VectorXd& scores, const std::vector<std::string>& names, int k);

/// `rcs` must be aligned with `nets` (one RcsWindow per network) when TargetedRcs is requested.
AttackResult run_attack(const CfiModel& model, const std::vector<NetworkSnapshot>& nets,
                        const std::vector<RcsWindow>& rcs, const AttackConfig& cfg, const MetricOptions& opt = {});

/// Re-draw one Random run from its key; used to audit the run log.
AttackRun replay_random_run(const CfiModel& model, const NetworkSnapshot& net, int k, int draw, std::uint64_t master_seed,
                            const MetricOptions& opt = {});

/// Summaries restricted to an explicit window subset (window_end values).
AttackSummary summarize_attack(const std::vector<AttackRun>& runs, Regime regime, const std::vector<Date>& windows,
                               const AttackConfig& cfg);

/// HIGH: CFI >= q(1 - tail); LOW: CFI <= q(tail), type-7 quantiles of the standardized series.
std::map<Regime, AttackSummary> regime_split(const std::vector<AttackRun>& runs, const CfiSeries& cfi,
                                             const AttackConfig& cfg, double tail = 0.20,
                                             Diagnostics* diag = nullptr);

void save_attack_curves(const std::vector<const AttackSummary*>& summaries, const AttackConfig& cfg,
                        const std::filesystem::path& path);
void save_attack_runs(const std::vector<AttackRun>& runs, const std::filesystem::path& path);

}  // namespace fragility

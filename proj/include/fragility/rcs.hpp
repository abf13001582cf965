#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "fragility/cfi.hpp"
#include "fragility/ingest.hpp"
#include "fragility/netmetrics.hpp"

namespace fragility {

/// Leave-one-out contribution of each node to one window's CFI (raw scale).
struct RcsWindow {
  struct Node {
    std::string category;
    double cfi_without = 0.0;
    double rcs = 0.0;      // cfi_full - cfi_without
    double rcs_rel = 0.0;  // rcs / (|cfi_full| + eps)
  };
  Date window_end{};
  double cfi_full = 0.0;
  std::vector<Node> per_node;
};

struct RcsRankingRow {
  std::string category;
  double mean_rcs = 0.0;
  double mean_rcs_high = 0.0;
  int rank_rcs = 0;
  int rank_rcs_high = 0;
  int rank_tvl = 0;
  double mean_tvl = 0.0;
  double top10_frequency = 0.0;
  int windows_present = 0;
  bool partial = false;  // absent from some windows
};

using RcsRanking = std::vector<RcsRankingRow>;

NetworkSnapshot remove_node(const NetworkSnapshot& net, const std::string& category);

/// Metrics of the reduced network (its own node count) pushed through the frozen model.
double cfi_counterfactual(const CfiModel& model, const NetworkSnapshot& reduced, const MetricOptions& opt = {});

RcsWindow rcs_window(const CfiModel& model, const NetworkSnapshot& net, double eps = 1e-8,
                     const MetricOptions& opt = {});

/// Time averages over all windows and over windows with CFI >= q(high_quantile), TVL ranks
/// from full-sample mean TVL, and top-10 appearance frequencies. Ties rank by category name.
RcsRanking aggregate_rcs(const std::vector<RcsWindow>& windows, const CategoryPanel& tvl_panel,
                         double high_quantile = 0.75, Diagnostics* diag = nullptr);

/// Indices into `windows` with cfi_full >= the type-7 quantile q of cfi_full.
std::vector<std::size_t> high_fragility_set(const std::vector<RcsWindow>& windows, double q);

void save_rcs_windows(const std::vector<RcsWindow>& windows, const std::filesystem::path& path);
void save_rcs_ranking(const RcsRanking& ranking, const std::filesystem::path& path);

}  // namespace fragility

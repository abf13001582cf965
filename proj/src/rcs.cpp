#include "fragility/rcs.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "fragility/csv.hpp"
#include "fragility/stats.hpp"

namespace fragility {

NetworkSnapshot remove_node(const NetworkSnapshot& net, const std::string& category) {
  for (std::size_t i = 0; i < net.node_names.size(); ++i) {
    if (net.node_names[i] == category) return remove_nodes(net, {static_cast<Eigen::Index>(i)});
  }
  throw ValidationError("cannot remove unknown category '" + category + "'");
}

double cfi_counterfactual(const CfiModel& model, const NetworkSnapshot& reduced, const MetricOptions& opt) {
  if (reduced.size() < 2) throw ValidationError("counterfactual network has fewer than 2 nodes");
  return raw_cfi(model, compute_metrics(reduced, opt).as_vector());
}

RcsWindow rcs_window(const CfiModel& model, const NetworkSnapshot& net, double eps, const MetricOptions& opt) {
  RcsWindow w;
  w.window_end = net.window_end;
  w.cfi_full = raw_cfi(model, compute_metrics(net, opt).as_vector());
  w.per_node.reserve(net.node_names.size());
  for (Eigen::Index i = 0; i < net.size(); ++i) {
    RcsWindow::Node node;
    node.category = net.node_names[static_cast<std::size_t>(i)];
    node.cfi_without = cfi_counterfactual(model, remove_nodes(net, {i}), opt);
    node.rcs = w.cfi_full - node.cfi_without;
    node.rcs_rel = node.rcs / (std::abs(w.cfi_full) + eps);
    w.per_node.push_back(std::move(node));
  }
  return w;
}

std::vector<std::size_t> high_fragility_set(const std::vector<RcsWindow>& windows, double q) {
  std::vector<double> cfi;
  for (const auto& w : windows) cfi.push_back(w.cfi_full);
  const double cut = stats::quantile(cfi, q);
  std::vector<std::size_t> out;
  for (std::size_t t = 0; t < windows.size(); ++t) {
    if (windows[t].cfi_full >= cut) out.push_back(t);
  }
  return out;
}

namespace {

/// 1-based ranks by descending value; ties broken by ascending name.
std::vector<int> descending_ranks(const std::vector<double>& values, const std::vector<std::string>& names) {
  std::vector<std::size_t> idx(values.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    if (values[a] != values[b]) return values[a] > values[b];
    return names[a] < names[b];
  });
  std::vector<int> rank(values.size());
  for (std::size_t r = 0; r < idx.size(); ++r) rank[idx[r]] = static_cast<int>(r + 1);
  return rank;
}

}  // namespace

RcsRanking aggregate_rcs(const std::vector<RcsWindow>& windows, const CategoryPanel& tvl_panel, double high_quantile,
                         Diagnostics* diag) {
  if (windows.empty()) throw ValidationError("RCS aggregation needs at least one window");
  const auto high = high_fragility_set(windows, high_quantile);
  if (high.empty()) throw ValidationError("high-fragility window set is empty");
  std::vector<bool> is_high(windows.size(), false);
  for (auto t : high) is_high[t] = true;

  struct Acc {
    double sum = 0, sum_high = 0;
    int n = 0, n_high = 0, top10 = 0;
  };
  std::map<std::string, Acc> acc;
  for (std::size_t t = 0; t < windows.size(); ++t) {
    const auto& w = windows[t];
    std::vector<double> vals;
    std::vector<std::string> names;
    for (const auto& node : w.per_node) {
      vals.push_back(node.rcs);
      names.push_back(node.category);
    }
    const auto ranks = descending_ranks(vals, names);
    for (std::size_t i = 0; i < w.per_node.size(); ++i) {
      auto& a = acc[names[i]];
      a.sum += vals[i];
      ++a.n;
      if (is_high[t]) {
        a.sum_high += vals[i];
        ++a.n_high;
      }
      if (ranks[i] <= 10) ++a.top10;
    }
  }

  RcsRanking out;
  std::vector<double> mean, mean_high, tvl;
  std::vector<std::string> names;
  for (const auto& [cat, a] : acc) {
    RcsRankingRow row;
    row.category = cat;
    row.windows_present = a.n;
    row.partial = a.n != static_cast<int>(windows.size());
    if (row.partial) warn(diag, "category '" + cat + "' is absent from some windows; averaged where present");
    row.mean_rcs = a.sum / a.n;
    row.mean_rcs_high = a.n_high ? a.sum_high / a.n_high : std::numeric_limits<double>::quiet_NaN();
    row.top10_frequency = static_cast<double>(a.top10) / a.n;
    row.mean_tvl = 0.0;
    for (std::size_t j = 0; j < tvl_panel.categories.size(); ++j) {
      if (tvl_panel.categories[j] != cat) continue;
      const Eigen::VectorXd col = tvl_panel.values.col(static_cast<Eigen::Index>(j));
      double s = 0;
      int n = 0;
      for (Eigen::Index i = 0; i < col.size(); ++i) {
        if (!std::isnan(col[i])) {
          s += col[i];
          ++n;
        }
      }
      row.mean_tvl = n ? s / n : 0.0;
    }
    names.push_back(cat);
    mean.push_back(row.mean_rcs);
    mean_high.push_back(std::isnan(row.mean_rcs_high) ? -std::numeric_limits<double>::infinity() : row.mean_rcs_high);
    tvl.push_back(row.mean_tvl);
    out.push_back(std::move(row));
  }
  const auto r1 = descending_ranks(mean, names);
  const auto r2 = descending_ranks(mean_high, names);
  const auto r3 = descending_ranks(tvl, names);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i].rank_rcs = r1[i];
    out[i].rank_rcs_high = r2[i];
    out[i].rank_tvl = r3[i];
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.rank_rcs < b.rank_rcs; });
  return out;
}

void save_rcs_windows(const std::vector<RcsWindow>& windows, const std::filesystem::path& path) {
  csv::Writer w;
  w.row({"window_end", "category", "cfi_full", "cfi_without", "rcs", "rcs_rel"});
  for (const auto& win : windows) {
    for (const auto& n : win.per_node) {
      w.row({format_date(win.window_end), n.category, format_double(win.cfi_full), format_double(n.cfi_without),
             format_double(n.rcs), format_double(n.rcs_rel)});
    }
  }
  w.save(path);
}

void save_rcs_ranking(const RcsRanking& ranking, const std::filesystem::path& path) {
  csv::Writer w;
  w.row({"category", "rank_rcs", "rank_tvl", "rank_rcs_high", "mean_rcs", "mean_rcs_high", "top10_frequency"});
  for (const auto& r : ranking) {
    w.row({r.category, std::to_string(r.rank_rcs), std::to_string(r.rank_tvl), std::to_string(r.rank_rcs_high),
           format_double(r.mean_rcs), format_double(r.mean_rcs_high), format_double(r.top10_frequency)});
  }
  w.save(path);
}

}  // namespace fragility

#include "fragility/attack.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <set>

#include "fragility/csv.hpp"
#include "fragility/hashing.hpp"
#include "fragility/parallel.hpp"
#include "fragility/stats.hpp"

namespace fragility {

std::string to_string(AttackStrategy s) {
  switch (s) {
    case AttackStrategy::TargetedRcs: return "TARGETED_RCS";
    case AttackStrategy::Strength: return "STRENGTH";
    case AttackStrategy::Random: return "RANDOM";
  }
  return "?";
}

std::string to_string(Regime r) {
  switch (r) {
    case Regime::All: return "ALL";
    case Regime::High: return "HIGH";
    case Regime::Low: return "LOW";
  }
  return "?";
}

AttackStrategy attack_strategy_from_string(const std::string& s) {
  if (s == "TARGETED_RCS" || s == "targeted") return AttackStrategy::TargetedRcs;
  if (s == "STRENGTH" || s == "strength") return AttackStrategy::Strength;
  if (s == "RANDOM" || s == "random") return AttackStrategy::Random;
  throw ValidationError("unknown attack strategy '" + s + "'");
}

const AttackSummaryRow& AttackSummary::at(Regime r, AttackStrategy s, int k) const {
  for (const auto& row : rows) {
    if (row.regime == r && row.strategy == s && row.k == k) return row;
  }
  throw ValidationError("no attack summary for " + to_string(r) + "/" + to_string(s) + "/k=" + std::to_string(k));
}

namespace {

double score_without(const CfiModel& model, const NetworkSnapshot& net, const std::vector<Eigen::Index>& idx,
                     const MetricOptions& opt) {
  if (idx.empty()) return raw_cfi(model, compute_metrics(net, opt).as_vector());
  return cfi_counterfactual(model, remove_nodes(net, idx), opt);
}

std::vector<std::string> names_of(const NetworkSnapshot& net, const std::vector<Eigen::Index>& idx) {
  std::vector<std::string> out;
  for (auto i : idx) out.push_back(net.node_names[static_cast<std::size_t>(i)]);
  return out;
}

std::uint64_t random_seed(std::uint64_t master, Date window_end, int k, int draw) {
  return derive_seed(master, static_cast<std::uint64_t>(window_end.time_since_epoch().count()),
                     static_cast<std::uint64_t>(AttackStrategy::Random), static_cast<std::uint64_t>(k),
                     static_cast<std::uint64_t>(draw));
}

std::vector<Eigen::Index> random_subset(Eigen::Index n, int k, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Eigen::Index> pool(static_cast<std::size_t>(n));
  std::iota(pool.begin(), pool.end(), Eigen::Index{0});
  for (int i = 0; i < k; ++i) {
    std::uniform_int_distribution<std::size_t> pick(static_cast<std::size_t>(i), pool.size() - 1);
    std::swap(pool[static_cast<std::size_t>(i)], pool[pick(rng)]);
  }
  pool.resize(static_cast<std::size_t>(k));
  return pool;
}

void check_k(const NetworkSnapshot& net, int k) {
  if (k < 0 || k > net.size() - 2) {
    throw ValidationError("cannot remove " + std::to_string(k) + " of " + std::to_string(net.size()) +
                          " nodes (at most N-2)");
  }
}

}  // namespace

std::pair<double, double> remove_k_and_score(const CfiModel& model, const NetworkSnapshot& net,
                                             const std::vector<std::string>& categories, const MetricOptions& opt) {
  check_k(net, static_cast<int>(categories.size()));
  std::vector<Eigen::Index> idx;
  std::set<std::string> seen;
  for (const auto& c : categories) {
    if (!seen.insert(c).second) throw ValidationError("category '" + c + "' listed twice for removal");
    auto it = std::find(net.node_names.begin(), net.node_names.end(), c);
    if (it == net.node_names.end()) throw ValidationError("cannot remove unknown category '" + c + "'");
    idx.push_back(static_cast<Eigen::Index>(it - net.node_names.begin()));
  }
  const double full = raw_cfi(model, compute_metrics(net, opt).as_vector());
  const double after = score_without(model, net, idx, opt);
  return {after, full - after};
}

std::vector<Eigen::Index> top_k(const Eigen::VectorXd& scores, const std::vector<std::string>& names, int k) {
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(scores.size()));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  std::sort(idx.begin(), idx.end(), [&](Eigen::Index a, Eigen::Index b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return names[static_cast<std::size_t>(a)] < names[static_cast<std::size_t>(b)];
  });
  idx.resize(static_cast<std::size_t>(std::min<Eigen::Index>(k, scores.size())));
  return idx;
}

AttackRun replay_random_run(const CfiModel& model, const NetworkSnapshot& net, int k, int draw,
                            std::uint64_t master_seed, const MetricOptions& opt) {
  check_k(net, k);
  AttackRun run;
  run.window_end = net.window_end;
  run.k = k;
  run.strategy = AttackStrategy::Random;
  run.draw = draw;
  run.mc_seed = random_seed(master_seed, net.window_end, k, draw);
  const auto idx = random_subset(net.size(), k, run.mc_seed);
  run.removed = names_of(net, idx);
  run.cfi_full = raw_cfi(model, compute_metrics(net, opt).as_vector());
  run.cfi_after = score_without(model, net, idx, opt);
  run.delta = run.cfi_full - run.cfi_after;
  return run;
}

AttackResult run_attack(const CfiModel& model, const std::vector<NetworkSnapshot>& nets,
                        const std::vector<RcsWindow>& rcs, const AttackConfig& cfg, const MetricOptions& opt) {
  if (cfg.mc_draws < 2) throw ValidationError("attack needs at least 2 Monte Carlo draws");
  const bool targeted = std::find(cfg.strategies.begin(), cfg.strategies.end(), AttackStrategy::TargetedRcs) !=
                        cfg.strategies.end();
  if (targeted && rcs.size() != nets.size()) throw ValidationError("targeted attack needs one RCS window per network");
  for (const auto& net : nets) {
    for (int k : cfg.k_grid) check_k(net, k);
  }

  std::vector<std::vector<AttackRun>> per_window(nets.size());
  parallel_for(nets.size(), cfg.jobs, [&](std::size_t w) {
    const auto& net = nets[w];
    const double full = raw_cfi(model, compute_metrics(net, opt).as_vector());
    auto& out = per_window[w];
    auto emit = [&](AttackStrategy s, int k, const std::vector<Eigen::Index>& idx) {
      AttackRun run;
      run.window_end = net.window_end;
      run.k = k;
      run.strategy = s;
      run.removed = names_of(net, idx);
      run.cfi_full = full;
      run.cfi_after = score_without(model, net, idx, opt);
      run.delta = full - run.cfi_after;
      out.push_back(std::move(run));
    };
    for (int k : cfg.k_grid) {
      for (auto s : cfg.strategies) {
        if (s == AttackStrategy::TargetedRcs && !cfg.greedy) {
          Eigen::VectorXd scores(net.size());
          for (Eigen::Index i = 0; i < net.size(); ++i) scores[i] = rcs[w].per_node[static_cast<std::size_t>(i)].rcs;
          emit(s, k, top_k(scores, net.node_names, k));
        } else if (s == AttackStrategy::TargetedRcs) {
          // Greedy: remove the current top-RCS node, recompute RCS on what is left, repeat.
          NetworkSnapshot cur = net;
          std::vector<std::string> removed;
          for (int step = 0; step < k; ++step) {
            const auto win = rcs_window(model, cur, 1e-8, opt);
            Eigen::VectorXd scores(cur.size());
            for (Eigen::Index i = 0; i < cur.size(); ++i) scores[i] = win.per_node[static_cast<std::size_t>(i)].rcs;
            const auto pick = top_k(scores, cur.node_names, 1).front();
            removed.push_back(cur.node_names[static_cast<std::size_t>(pick)]);
            cur = remove_nodes(cur, {pick});
          }
          std::vector<Eigen::Index> idx;
          for (const auto& name : removed) {
            idx.push_back(std::find(net.node_names.begin(), net.node_names.end(), name) - net.node_names.begin());
          }
          emit(s, k, idx);
        } else if (s == AttackStrategy::Strength) {
          emit(s, k, top_k(node_strengths(net), net.node_names, k));
        } else {
          for (int d = 0; d < cfg.mc_draws; ++d) {
            AttackRun run;
            run.window_end = net.window_end;
            run.k = k;
            run.strategy = s;
            run.draw = d;
            run.mc_seed = random_seed(cfg.seed, net.window_end, k, d);
            const auto idx = random_subset(net.size(), k, run.mc_seed);
            run.removed = names_of(net, idx);
            run.cfi_full = full;
            run.cfi_after = score_without(model, net, idx, opt);
            run.delta = full - run.cfi_after;
            out.push_back(std::move(run));
          }
        }
      }
    }
  });

  AttackResult result;
  std::vector<Date> ends;
  for (std::size_t w = 0; w < nets.size(); ++w) {
    ends.push_back(nets[w].window_end);
    for (auto& r : per_window[w]) result.runs.push_back(std::move(r));
  }
  result.summary = summarize_attack(result.runs, Regime::All, ends, cfg);
  return result;
}

AttackSummary summarize_attack(const std::vector<AttackRun>& runs, Regime regime, const std::vector<Date>& windows,
                               const AttackConfig& cfg) {
  const std::set<Date> keep(windows.begin(), windows.end());
  AttackSummary out;
  for (int k : cfg.k_grid) {
    for (auto s : cfg.strategies) {
      std::map<Date, std::pair<double, int>> per_date;
      std::vector<double> pooled;
      for (const auto& r : runs) {
        if (r.k != k || r.strategy != s || !keep.contains(r.window_end)) continue;
        auto& [sum, n] = per_date[r.window_end];
        sum += r.delta;
        ++n;
        pooled.push_back(r.delta);
      }
      if (per_date.empty()) continue;
      std::vector<double> means;
      for (const auto& [d, sn] : per_date) means.push_back(sn.first / sn.second);
      AttackSummaryRow row;
      row.regime = regime;
      row.strategy = s;
      row.k = k;
      row.n_windows = static_cast<int>(means.size());
      row.mean_delta = std::accumulate(means.begin(), means.end(), 0.0) / static_cast<double>(means.size());
      const auto& band_src = (s == AttackStrategy::Random && cfg.pooled_random) ? pooled : means;
      row.band_low = stats::quantile(band_src, 0.025);
      row.band_high = stats::quantile(band_src, 0.975);
      out.rows.push_back(row);
    }
    const auto has = [&](AttackStrategy s) {
      return std::any_of(out.rows.begin(), out.rows.end(), [&](const auto& r) { return r.k == k && r.strategy == s; });
    };
    if (has(AttackStrategy::TargetedRcs) && has(AttackStrategy::Random)) {
      out.targeted_minus_random[{regime, k}] =
          out.at(regime, AttackStrategy::TargetedRcs, k).mean_delta - out.at(regime, AttackStrategy::Random, k).mean_delta;
    }
  }
  return out;
}

std::map<Regime, AttackSummary> regime_split(const std::vector<AttackRun>& runs, const CfiSeries& cfi,
                                             const AttackConfig& cfg, double tail, Diagnostics* diag) {
  if (!(tail > 0.0 && tail <= 0.5)) throw ValidationError("regime tail quantile must lie in (0, 0.5]");
  std::vector<double> values;
  for (const auto& p : cfi) values.push_back(p.cfi);
  if (values.empty()) throw ValidationError("regime split needs a CFI series");
  const double hi_cut = stats::quantile(values, 1.0 - tail);
  const double lo_cut = stats::quantile(values, tail);
  std::vector<Date> all, high, low;
  for (const auto& p : cfi) {
    all.push_back(p.window_end);
    if (p.cfi >= hi_cut) high.push_back(p.window_end);
    if (p.cfi <= lo_cut) low.push_back(p.window_end);
  }
  if (high.size() < 5) warn(diag, "high-fragility regime has only " + std::to_string(high.size()) + " windows");
  if (low.size() < 5) warn(diag, "low-fragility regime has only " + std::to_string(low.size()) + " windows");
  std::map<Regime, AttackSummary> out;
  out[Regime::All] = summarize_attack(runs, Regime::All, all, cfg);
  out[Regime::High] = summarize_attack(runs, Regime::High, high, cfg);
  out[Regime::Low] = summarize_attack(runs, Regime::Low, low, cfg);
  return out;
}

void save_attack_curves(const std::vector<const AttackSummary*>& summaries, const AttackConfig& cfg,
                        const std::filesystem::path& path) {
  csv::Writer w;
  w.comment("mc_draws: " + std::to_string(cfg.mc_draws) + "; seed: " + std::to_string(cfg.seed) +
            "; random band: " + (cfg.pooled_random ? "pooled draws" : "per-date means"));
  w.row({"regime", "strategy", "k", "mean_delta", "band_low", "band_high"});
  for (const auto* s : summaries) {
    for (const auto& r : s->rows) {
      w.row({to_string(r.regime), to_string(r.strategy), std::to_string(r.k), format_double(r.mean_delta),
             format_double(r.band_low), format_double(r.band_high)});
    }
    for (const auto& [key, gap] : s->targeted_minus_random) {
      w.row({to_string(key.first), "TARGETED_MINUS_RANDOM", std::to_string(key.second), format_double(gap), "", ""});
    }
  }
  w.save(path);
}

void save_attack_runs(const std::vector<AttackRun>& runs, const std::filesystem::path& path) {
  csv::Writer w;
  w.row({"window_end", "strategy", "k", "draw", "mc_seed", "cfi_full", "cfi_after", "delta", "removed"});
  for (const auto& r : runs) {
    std::string removed;
    for (const auto& n : r.removed) removed += (removed.empty() ? "" : "|") + n;
    w.row({format_date(r.window_end), to_string(r.strategy), std::to_string(r.k),
           r.draw >= 0 ? std::to_string(r.draw) : "", r.draw >= 0 ? std::to_string(r.mc_seed) : "",
           format_double(r.cfi_full), format_double(r.cfi_after), format_double(r.delta), removed});
  }
  w.save(path);
}

}  // namespace fragility

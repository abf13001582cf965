#include "fragility/pipeline.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <set>

#include "fragility/csv.hpp"
#include "fragility/hashing.hpp"
#include "fragility/parallel.hpp"
#include "fragility/stats.hpp"

namespace fragility {

namespace fs = std::filesystem;

namespace {

bool uses_snapshot(const PipelineConfig& cfg) { return !cfg.snapshot.empty(); }

// Protocol-level cleaning needs raw protocol records, which only the API path has.
bool clean_protocols_at_ingest(const PipelineConfig& cfg) {
  return !uses_snapshot(cfg) && cfg.cleaning_level != CleaningLevel::Category;
}

CategoryPanel restrict_panel(const CategoryPanel& in, const PipelineConfig& cfg, Diagnostics* diag) {
  const std::set<std::string> excluded(cfg.exclusions.begin(), cfg.exclusions.end());
  std::vector<Eigen::Index> cols;
  CategoryPanel out;
  out.excluded = in.excluded;
  for (std::size_t j = 0; j < in.categories.size(); ++j) {
    if (excluded.contains(in.categories[j])) {
      warn(diag, "snapshot category '" + in.categories[j] + "' is excluded by config");
      out.excluded.push_back(in.categories[j]);
      continue;
    }
    cols.push_back(static_cast<Eigen::Index>(j));
    out.categories.push_back(in.categories[j]);
  }
  std::sort(out.excluded.begin(), out.excluded.end());
  out.excluded.erase(std::unique(out.excluded.begin(), out.excluded.end()), out.excluded.end());

  const Date lo = cfg.start.empty() ? Date::min() : parse_date(cfg.start);
  const Date hi = cfg.end.empty() ? Date::max() : parse_date(cfg.end);
  std::vector<Eigen::Index> rows;
  for (std::size_t i = 0; i < in.dates.size(); ++i) {
    if (in.dates[i] >= lo && in.dates[i] <= hi) {
      rows.push_back(static_cast<Eigen::Index>(i));
      out.dates.push_back(in.dates[i]);
    }
  }
  if (rows.empty()) throw DataError("no snapshot dates inside the configured start/end range");
  if (cols.empty()) throw DataError("every snapshot category is excluded");
  out.values = in.values(rows, cols);
  return out;
}

CategoryPanel subset_categories(const CategoryPanel& in, const std::vector<std::string>& keep) {
  CategoryPanel out;
  out.dates = in.dates;
  out.excluded = in.excluded;
  out.categories = keep;
  out.values.resize(static_cast<Eigen::Index>(in.dates.size()), static_cast<Eigen::Index>(keep.size()));
  for (std::size_t j = 0; j < keep.size(); ++j) out.values.col(static_cast<Eigen::Index>(j)) = in.values.col(in.category_index(keep[j]));
  return out;
}

std::vector<NetworkSnapshot> snapshots_of(const std::vector<WindowNetwork>& nets) {
  std::vector<NetworkSnapshot> out;
  out.reserve(nets.size());
  for (const auto& w : nets) out.push_back(w.net);
  return out;
}

std::vector<FragilityMetrics> metrics_of(const std::vector<WindowNetwork>& nets) {
  std::vector<FragilityMetrics> out;
  out.reserve(nets.size());
  for (const auto& w : nets) out.push_back(w.metrics);
  return out;
}

MetricOptions rcs_options(const PipelineConfig& cfg, const NetworkSnapshot& net) {
  auto opt = cfg.metric_options();
  if (cfg.rcs_frozen_n) opt.frozen_n = net.size();
  return opt;
}

}  // namespace

CorrelationMatrix<double> estimate_correlation(const Eigen::Ref<const Matrix>& block, CorrelationSource source,
                                               double glasso_rho, const std::vector<std::string>& names,
                                               CovarianceEstimate<double>* lw) {
  switch (source) {
    case CorrelationSource::Shrinkage: {
      auto est = ledoit_wolf(block);
      auto c = to_correlation(est, &names);
      if (lw) *lw = std::move(est);
      return c;
    }
    case CorrelationSource::Pearson: return pearson_correlation(block, &names);
    case CorrelationSource::GlassoPartial: return glasso_partial_correlation(block, glasso_rho);
  }
  throw ValidationError("unknown correlation source");
}

std::vector<WindowNetwork> build_networks(const ReturnMatrix& returns, const RollingConfig& rolling,
                                          CorrelationSource source, double glasso_rho, const MetricOptions& opt,
                                          unsigned jobs, Diagnostics* diag) {
  const auto windows = rolling_windows(returns, rolling, diag);
  if (windows.empty()) {
    throw DataError("no rolling windows: " + std::to_string(returns.dates.size()) + " return rows for W = " +
                    std::to_string(rolling.window_length));
  }
  std::vector<WindowNetwork> out(windows.size());
  parallel_for(windows.size(), jobs, [&](std::size_t w) {
    const Matrix block = windows[w].block(returns.returns);
    CovarianceEstimate<double> lw;
    auto corr = estimate_correlation(block, source, glasso_rho, returns.categories, &lw);
    corr.window_end = windows[w].window_end;
    auto& slot = out[w];
    slot.net = build_adjacency(corr, returns.categories);
    slot.metrics = compute_metrics(slot.net, opt);
    if (lw.shrinkage) {
      slot.shrinkage = *lw.shrinkage;
      slot.target_scale = *lw.target_scale;
    }
  });
  return out;
}

double RobustnessReport::correlation(const std::string& a, const std::string& b) const {
  for (const auto& p : correlations) {
    if ((p.a == a && p.b == b) || (p.a == b && p.b == a)) return p.correlation;
  }
  throw ValidationError("no robustness correlation between '" + a + "' and '" + b + "'");
}

// ---------------------------------------------------------------------------------------
// Stages

CategoryPanel stage_ingest(const PipelineConfig& cfg, const OutputLayout& out, Diagnostics* diag) {
  CategoryPanel panel;
  if (uses_snapshot(cfg)) {
    panel = restrict_panel(load_snapshot(cfg.snapshot), cfg, diag);
  } else {
    LlamaClient client(cfg.api_options());
    const auto list = client.fetch_protocol_list(diag);
    if (list.stale) warn(diag, "protocol list served from a stale cache entry");
    const std::set<std::string> excluded(cfg.exclusions.begin(), cfg.exclusions.end());
    std::vector<ProtocolRecord> records;
    for (const auto& h : list.headers) {
      if (excluded.contains(h.category)) continue;
      try {
        auto rec = client.fetch_protocol_tvl(h.slug, diag);
        rec.category = h.category;
        if (!rec.tvl_series.empty()) records.push_back(std::move(rec));
      } catch (const MissingProtocolError& e) {
        warn(diag, e.what());
      }
    }
    if (records.empty()) throw DataError("no protocol histories retrieved");
    if (clean_protocols_at_ingest(cfg)) {
      std::vector<AnomalyFlag> flags;
      records = clean_protocol_records(records, cfg.anomaly_config(), &flags, diag);
      save_anomaly_report(flags, out.panel() / "anomalies_protocol.csv");
    }
    Date lo = Date::max(), hi = Date::min();
    for (const auto& r : records) {
      lo = std::min(lo, r.tvl_series.front().date);
      hi = std::max(hi, r.tvl_series.back().date);
    }
    if (!cfg.start.empty()) lo = parse_date(cfg.start);
    if (!cfg.end.empty()) hi = parse_date(cfg.end);
    panel = build_category_panel(records, excluded, lo, hi, diag);
  }
  save_snapshot(panel, out.panel() / "panel.csv");
  return panel;
}

CleanOutput stage_clean(const PipelineConfig& cfg, const CategoryPanel& raw, const OutputLayout& out,
                        Diagnostics* diag) {
  CleanOutput res;
  CategoryPanel repaired = raw;
  if (!clean_protocols_at_ingest(cfg)) {
    if (uses_snapshot(cfg) && cfg.cleaning_level == CleaningLevel::Protocol) {
      warn(diag, "protocol-level cleaning needs raw protocol records; cleaning the category panel instead");
    }
    res.flags = detect_anomalies(raw, cfg.anomaly_config(), diag);
    repaired = repair_series(raw, res.flags, diag);
  }
  const CategoryPanel filled = fill_gaps(repaired);
  res.returns = winsorize_and_balance(compute_log_returns(filled, cfg.return_epsilon), cfg.winsor_config(), diag);
  res.panel = subset_categories(filled, res.returns.categories);

  save_anomaly_report(res.flags, out.returns() / "anomalies.csv");
  save_snapshot(res.panel, out.returns() / "panel_clean.csv");
  save_returns(res.returns, out.returns() / "returns.csv");
  return res;
}

std::vector<WindowNetwork> stage_networks(const PipelineConfig& cfg, const CleanOutput& clean,
                                          const OutputLayout& out, Diagnostics* diag) {
  auto nets = build_networks(clean.returns, cfg.rolling_config(), cfg.estimator, cfg.glasso_rho, cfg.metric_options(),
                             cfg.jobs, diag);
  save_metrics_series(metrics_of(nets), out.networks() / "metrics.csv");

  csv::Writer w;
  w.row({"window_end", "n_nodes", "shrinkage", "target_scale"});
  for (const auto& n : nets) {
    w.row({format_date(n.net.window_end), std::to_string(n.net.size()), format_double(n.shrinkage),
           format_double(n.target_scale)});
  }
  w.save(out.networks() / "shrinkage.csv");

  const auto& last = nets.back().net;
  const auto row = static_cast<Eigen::Index>(
      std::find(clean.panel.dates.begin(), clean.panel.dates.end(), last.window_end) - clean.panel.dates.begin());
  Eigen::VectorXd tvl(last.size());
  for (Eigen::Index i = 0; i < last.size(); ++i) {
    tvl[i] = row < static_cast<Eigen::Index>(clean.panel.dates.size())
                 ? clean.panel.values(row, clean.panel.category_index(last.node_names[static_cast<std::size_t>(i)]))
                 : std::numeric_limits<double>::quiet_NaN();
  }
  save_matrix_dump(last.correlation, last.node_names, out.networks() / "latest_correlation.csv");
  save_network_export(last, tvl, out.networks() / "latest_edges.csv", out.networks() / "latest_nodes.csv");
  return nets;
}

std::pair<CfiModel, CfiSeries> stage_cfi(const PipelineConfig& /*cfg*/, const std::vector<FragilityMetrics>& metrics,
                                         const OutputLayout& out) {
  const CfiModel model = fit_cfi_model(metrics);
  const CfiSeries series = apply_cfi_series(model, metrics);
  save_model(model, out.cfi() / "model.json");
  save_cfi_series(series, out.cfi() / "cfi.csv");
  save_cfi_series(expanding_cfi_series(metrics), out.cfi() / "cfi_expanding.csv");

  csv::Writer w;
  w.row({"metric", "loading", "mean", "std"});
  for (int k = 0; k < 4; ++k) {
    w.row({kMetricNames[k], format_double(model.loading[k]), format_double(model.metric_means[k]),
           format_double(model.metric_stds[k])});
  }
  w.comment("pc1_variance_share: " + format_double(model.pc1_variance_share));
  w.save(out.cfi() / "loadings.csv");
  return {model, series};
}

std::vector<RcsWindow> stage_rcs(const PipelineConfig& cfg, const CfiModel& model,
                                 const std::vector<WindowNetwork>& nets, const CategoryPanel& panel,
                                 const OutputLayout& out, Diagnostics* diag) {
  std::vector<RcsWindow> windows(nets.size());
  parallel_for(nets.size(), cfg.jobs, [&](std::size_t w) {
    windows[w] = rcs_window(model, nets[w].net, cfg.rcs_epsilon, rcs_options(cfg, nets[w].net));
  });
  save_rcs_windows(windows, out.rcs() / "rcs_windows.csv");
  save_rcs_ranking(aggregate_rcs(windows, panel, cfg.high_quantile, diag), out.rcs() / "ranking.csv");
  return windows;
}

AttackResult stage_attack(const PipelineConfig& cfg, const CfiModel& model, const std::vector<WindowNetwork>& nets,
                          const std::vector<RcsWindow>& rcs, const CfiSeries& cfi, const OutputLayout& out,
                          Diagnostics* diag) {
  const auto acfg = cfg.attack_config();
  const auto snaps = snapshots_of(nets);
  auto result = run_attack(model, snaps, rcs, acfg, rcs_options(cfg, snaps.front()));
  const auto regimes = regime_split(result.runs, cfi, acfg, cfg.regime_tail, diag);
  save_attack_curves({&regimes.at(Regime::All), &regimes.at(Regime::High), &regimes.at(Regime::Low)}, acfg,
                     out.attack() / "curves.csv");
  save_attack_runs(result.runs, out.attack() / "runs.csv");
  return result;
}

std::vector<RegressionResult> stage_regress(const PipelineConfig& cfg, const CfiSeries& cfi,
                                            const CategoryPanel& panel, const OutputLayout& out, Diagnostics* diag) {
  if (cfg.controls.empty()) {
    warn(diag, "no market controls configured; regressions skipped");
    return {};
  }
  const auto econ = cfg.econ_config();
  const auto controls = build_market_controls(load_controls(cfg.controls), panel, econ);
  auto results = run_volatility_regressions(cfi, controls, econ, diag);
  save_regressions(results, out.regressions() / "regressions.csv");
  return results;
}

RobustnessReport stage_robustness(const PipelineConfig& cfg, const ReturnMatrix& returns, const OutputLayout& out,
                                  Diagnostics* diag) {
  RobustnessReport rep;
  const auto rolling = cfg.rolling_config();
  const auto opt = cfg.metric_options();

  auto proxy_of = [&](CorrelationSource src, double glasso_rho) {
    const auto nets = build_networks(returns, rolling, src, glasso_rho, opt, cfg.jobs, diag);
    if (rep.window_ends.empty()) {
      for (const auto& n : nets) rep.window_ends.push_back(n.net.window_end);
    }
    return nets;
  };
  auto zscored = [](const std::vector<WindowNetwork>& nets) {
    Eigen::VectorXd s(static_cast<Eigen::Index>(nets.size()));
    for (std::size_t w = 0; w < nets.size(); ++w) s[static_cast<Eigen::Index>(w)] = nets[w].metrics.avg_strength;
    const Eigen::VectorXd z = stats::zscore(s);
    return std::vector<double>(z.begin(), z.end());
  };

  const auto shrink = proxy_of(CorrelationSource::Shrinkage, cfg.glasso_rho);
  rep.proxies["shrinkage"] = zscored(shrink);
  rep.proxies["pearson"] = zscored(proxy_of(CorrelationSource::Pearson, cfg.glasso_rho));
  rep.proxies["glasso_partial"] = zscored(proxy_of(CorrelationSource::GlassoPartial, cfg.glasso_rho));
  for (double r : cfg.glasso_sweep) {
    if (r == cfg.glasso_rho) continue;
    rep.proxies["glasso_partial@" + format_double(r)] = zscored(proxy_of(CorrelationSource::GlassoPartial, r));
  }
  for (double r : cfg.rho_grid) {
    std::vector<double> d;
    for (const auto& n : shrink) d.push_back(strong_edge_density(n.net.correlation, r));
    rep.densities["rho=" + format_double(r)] = d;
  }

  auto pairwise = [&](const std::string& family, const std::map<std::string, std::vector<double>>& series) {
    for (auto a = series.begin(); a != series.end(); ++a) {
      for (auto b = std::next(a); b != series.end(); ++b) {
        const Eigen::Map<const Eigen::VectorXd> x(a->second.data(), static_cast<Eigen::Index>(a->second.size()));
        const Eigen::Map<const Eigen::VectorXd> y(b->second.data(), static_cast<Eigen::Index>(b->second.size()));
        rep.correlations.push_back({family, a->first, b->first, stats::pearson(x, y)});
      }
    }
  };
  pairwise("co_movement_proxy", rep.proxies);
  pairwise("strong_edge_density", rep.densities);

  auto save_series = [&](const std::map<std::string, std::vector<double>>& series, const fs::path& path) {
    csv::Writer w;
    csv::Row header{"window_end"};
    for (const auto& [name, _] : series) header.push_back(name);
    w.row(header);
    for (std::size_t t = 0; t < rep.window_ends.size(); ++t) {
      csv::Row row{format_date(rep.window_ends[t])};
      for (const auto& [_, v] : series) row.push_back(format_double(v[t]));
      w.row(row);
    }
    w.save(path);
  };
  save_series(rep.proxies, out.robustness() / "co_movement_proxies.csv");
  save_series(rep.densities, out.robustness() / "strong_edge_density.csv");
  csv::Writer w;
  w.row({"family", "series_a", "series_b", "correlation"});
  for (const auto& p : rep.correlations) w.row({p.family, p.a, p.b, format_double(p.correlation)});
  w.save(out.robustness() / "correlations.csv");
  return rep;
}

CategoryPanel load_stage_panel(const OutputLayout& out) { return load_snapshot(out.panel() / "panel.csv"); }

CleanOutput load_stage_clean(const OutputLayout& out) {
  CleanOutput c;
  c.panel = load_snapshot(out.returns() / "panel_clean.csv");
  c.returns = load_returns(out.returns() / "returns.csv");
  return c;
}

// ---------------------------------------------------------------------------------------
// Full run

std::string build_manifest(const PipelineConfig& cfg, const RunInputs& inputs, const fs::path& root,
                           const Diagnostics& diag) {
  nlohmann::ordered_json m;
  m["schema_version"] = 1;
  m["library_version"] = kLibraryVersion;
  m["eigen_version"] = std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                       std::to_string(EIGEN_MINOR_VERSION);
  m["config_sha256"] = sha256_hex(inputs.config_text);
  m["overrides"] = inputs.overrides;
  m["effective_config_sha256"] = sha256_hex(serialize_config(cfg));
  m["data_source"] = uses_snapshot(cfg) ? "snapshot" : "api";
  m["source_label"] = cfg.source_label;

  nlohmann::ordered_json in = nlohmann::ordered_json::object();
  if (uses_snapshot(cfg)) {
    in["snapshot"] = {{"file", fs::path(cfg.snapshot).filename().string()}, {"sha256", sha256_file(cfg.snapshot)}};
  } else {
    in["api_base"] = cfg.api_base;
  }
  if (!cfg.controls.empty()) {
    in["controls"] = {{"file", fs::path(cfg.controls).filename().string()}, {"sha256", sha256_file(cfg.controls)}};
  }
  m["inputs"] = in;
  m["seeds"] = {{"attack", cfg.seed}, {"mc_draws", cfg.mc_draws}};
  m["schemas"] = {{"config", kConfigSchemaVersion}, {"columnar", 1}, {"model", kModelSchemaVersion}};
  m["warnings"] = diag.warnings;

  std::vector<std::pair<std::string, fs::path>> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), root).generic_string();
    if (rel.starts_with("manifest/")) continue;
    files.emplace_back(rel, e.path());
  }
  std::sort(files.begin(), files.end());
  auto outputs = nlohmann::ordered_json::array();
  for (const auto& [rel, p] : files) {
    outputs.push_back({{"path", rel}, {"bytes", fs::file_size(p)}, {"sha256", sha256_file(p)}});
  }
  m["outputs"] = outputs;
  return m.dump(2) + "\n";
}

void run_pipeline(const PipelineConfig& cfg, const RunInputs& inputs, Diagnostics* diag) {
  cfg.validate();
  const fs::path final_dir = cfg.output_dir;
  const fs::path staging = fs::path(cfg.output_dir + ".staging");
  const fs::path failed = fs::path(cfg.output_dir + ".failed");
  fs::remove_all(staging);
  fs::create_directories(staging);
  const OutputLayout out{staging};
  Diagnostics local;
  Diagnostics* d = diag ? diag : &local;

  std::string current = "setup";
  auto stage = [&](const char* name, auto&& fn) {
    current = name;
    return fn();
  };
  try {
    const auto raw = stage("ingest", [&] { return stage_ingest(cfg, out, d); });
    const auto clean = stage("clean", [&] { return stage_clean(cfg, raw, out, d); });
    const auto nets = stage("networks", [&] { return stage_networks(cfg, clean, out, d); });
    const auto [model, series] = stage("cfi", [&] { return stage_cfi(cfg, metrics_of(nets), out); });
    const auto rcs = stage("rcs", [&] { return stage_rcs(cfg, model, nets, clean.panel, out, d); });
    stage("attack", [&] { return stage_attack(cfg, model, nets, rcs, series, out, d); });
    stage("regress", [&] { return stage_regress(cfg, series, clean.panel, out, d); });
    stage("robustness", [&] { return stage_robustness(cfg, clean.returns, out, d); });
    current = "manifest";
    csv::write_file_atomic(out.manifest() / "config.json", serialize_config(cfg));
    csv::write_file_atomic(out.manifest() / "manifest.json", build_manifest(cfg, inputs, staging, *d));
  } catch (const Error& e) {
    fs::remove_all(failed);
    fs::rename(staging, failed);
    throw StageError(current, e);
  } catch (const std::exception& e) {
    fs::remove_all(failed);
    fs::rename(staging, failed);
    throw StageError(current, Error(e.what()));
  }
  fs::remove_all(final_dir);
  fs::rename(staging, final_dir);
}

}  // namespace fragility

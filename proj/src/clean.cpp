#include "fragility/clean.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "fragility/columnar.hpp"
#include "fragility/csv.hpp"

namespace fragility {

std::string rules_to_string(unsigned rule_hits) {
  std::string out;
  auto add = [&](AnomalyRule r, const char* name) {
    if (rule_hits & static_cast<unsigned>(r)) {
      if (!out.empty()) out += '|';
      out += name;
    }
  };
  add(AnomalyRule::Abs, "ABS");
  add(AnomalyRule::Rel, "REL");
  add(AnomalyRule::Mad, "MAD");
  return out;
}

namespace {

double median_of(std::vector<double> v) { return stats::quantile(v, 0.5); }

}  // namespace

std::vector<AnomalyFlag> detect_series_anomalies(const Eigen::Ref<const Eigen::VectorXd>& values,
                                                 const std::vector<Date>& dates, const std::string& name,
                                                 const AnomalyConfig& cfg, Diagnostics* diag) {
  std::vector<Eigen::Index> obs;
  for (Eigen::Index i = 0; i < values.size(); ++i) {
    if (!std::isnan(values[i])) obs.push_back(i);
  }
  std::vector<AnomalyFlag> flags;
  if (obs.size() < 3) {
    warn(diag, "series '" + name + "' has fewer than 3 observations; anomaly detection skipped");
    return flags;
  }
  const std::size_t m = obs.size();
  auto v = [&](std::size_t k) { return values[obs[k]]; };

  std::vector<double> deltas(m - 1);
  for (std::size_t k = 1; k < m; ++k) deltas[k - 1] = v(k) - v(k - 1);
  const double med = median_of(deltas);
  std::vector<double> absdev(deltas.size());
  std::transform(deltas.begin(), deltas.end(), absdev.begin(), [&](double d) { return std::abs(d - med); });
  const double mad = median_of(absdev) * cfg.mad_scale;
  if (mad == 0.0) warn(diag, "series '" + name + "': MAD of daily changes is 0; MAD rule skipped");

  auto rule_hits = [&](std::size_t k) {
    unsigned hits = 0;
    const double d = v(k) - v(k - 1);
    if (std::abs(d) > cfg.tau_abs) hits |= static_cast<unsigned>(AnomalyRule::Abs);
    const double prev = v(k - 1);
    if (prev != 0.0) {
      if (std::abs(v(k) / prev - 1.0) > cfg.tau_rel) hits |= static_cast<unsigned>(AnomalyRule::Rel);
    } else if (v(k) != 0.0) {
      hits |= static_cast<unsigned>(AnomalyRule::Rel);  // growth from zero is unbounded
    }
    if (mad > 0.0 && std::abs(d - med) / mad > cfg.tau_mad) hits |= static_cast<unsigned>(AnomalyRule::Mad);
    return hits;
  };

  std::size_t k = 1;
  while (k < m) {
    const unsigned hits = rule_hits(k);
    if (!hits) {
      ++k;
      continue;
    }
    const double level = v(k - 1);
    std::size_t revert = 0;
    const std::size_t last = std::min(m - 1, k + static_cast<std::size_t>(cfg.reversal_horizon));
    for (std::size_t s = k + 1; s <= last; ++s) {
      if (std::abs(v(s) - level) <= cfg.reversal_band * std::abs(level)) {
        revert = s;
        break;
      }
    }
    if (revert) {
      for (std::size_t s = k; s < revert; ++s) {
        flags.push_back({name, dates[static_cast<std::size_t>(obs[s])], hits, AnomalyClass::Technical, v(s), {}});
      }
      k = revert + 1;  // the reversal move belongs to the same spike
    } else {
      flags.push_back({name, dates[static_cast<std::size_t>(obs[k])], hits, AnomalyClass::Persistent, v(k), {}});
      ++k;
    }
  }
  return flags;
}

std::vector<AnomalyFlag> detect_anomalies(const CategoryPanel& panel, const AnomalyConfig& cfg, Diagnostics* diag) {
  std::vector<AnomalyFlag> all;
  for (std::size_t j = 0; j < panel.categories.size(); ++j) {
    auto f = detect_series_anomalies(panel.values.col(static_cast<Eigen::Index>(j)), panel.dates,
                                     panel.categories[j], cfg, diag);
    all.insert(all.end(), f.begin(), f.end());
  }
  return all;
}

CategoryPanel repair_series(const CategoryPanel& panel, std::vector<AnomalyFlag>& flags, Diagnostics* diag) {
  std::map<Date, Eigen::Index> row_of;
  for (std::size_t i = 0; i < panel.dates.size(); ++i) row_of[panel.dates[i]] = static_cast<Eigen::Index>(i);

  std::map<std::string, std::vector<AnomalyFlag*>> technical;
  for (auto& f : flags) {
    if (f.classification == AnomalyClass::Technical) technical[f.category].push_back(&f);
  }

  CategoryPanel out = panel;
  std::set<std::string> dropped;
  for (auto& [cat, cat_flags] : technical) {
    const Eigen::Index j = panel.category_index(cat);
    const Eigen::Index n = panel.values.rows();
    std::vector<bool> bad(static_cast<std::size_t>(n), false);
    for (const auto* f : cat_flags) {
      auto it = row_of.find(f->date);
      if (it == row_of.end()) throw ValidationError("flag date " + format_date(f->date) + " not in panel");
      bad[static_cast<std::size_t>(it->second)] = true;
    }
    auto anchor = [&](Eigen::Index i) { return !bad[static_cast<std::size_t>(i)] && !std::isnan(panel.values(i, j)); };

    bool any_anchor = false;
    for (Eigen::Index i = 0; i < n && !any_anchor; ++i) any_anchor = anchor(i);
    if (!any_anchor) {
      warn(diag, "category '" + cat + "' is flagged everywhere; dropped");
      dropped.insert(cat);
      continue;
    }

    for (auto* f : cat_flags) {
      const Eigen::Index i = row_of[f->date];
      Eigen::Index lo = i - 1, hi = i + 1;
      while (lo >= 0 && !anchor(lo)) --lo;
      while (hi < n && !anchor(hi)) ++hi;
      double repaired;
      if (lo >= 0 && hi < n) {
        const double w = static_cast<double>(i - lo) / static_cast<double>(hi - lo);
        repaired = panel.values(lo, j) + w * (panel.values(hi, j) - panel.values(lo, j));
      } else {
        repaired = lo >= 0 ? panel.values(lo, j) : panel.values(hi, j);
      }
      out.values(i, j) = repaired;
      f->repaired_value = repaired;
    }
  }

  if (!dropped.empty()) {
    std::erase_if(flags, [&](const AnomalyFlag& f) { return dropped.contains(f.category); });
    CategoryPanel kept;
    kept.dates = out.dates;
    kept.excluded = out.excluded;
    std::vector<Eigen::Index> cols;
    for (std::size_t j = 0; j < out.categories.size(); ++j) {
      if (!dropped.contains(out.categories[j])) {
        kept.categories.push_back(out.categories[j]);
        cols.push_back(static_cast<Eigen::Index>(j));
      }
    }
    if (cols.empty()) throw DataError("every category was dropped during repair");
    kept.values = out.values(Eigen::all, cols);
    return kept;
  }
  return out;
}

std::vector<ProtocolRecord> clean_protocol_records(const std::vector<ProtocolRecord>& records,
                                                   const AnomalyConfig& cfg, std::vector<AnomalyFlag>* flags_out,
                                                   Diagnostics* diag) {
  std::vector<ProtocolRecord> out;
  out.reserve(records.size());
  for (const auto& rec : records) {
    if (rec.tvl_series.empty()) {
      out.push_back(rec);
      continue;
    }
    // Lay the record out on a contiguous day grid so interpolation distances are in days.
    const Date first = rec.tvl_series.front().date;
    const auto ndays = (rec.tvl_series.back().date - first).count() + 1;
    CategoryPanel one;
    one.categories = {rec.slug};
    one.values = Matrix::Constant(ndays, 1, std::numeric_limits<double>::quiet_NaN());
    for (long i = 0; i < ndays; ++i) one.dates.push_back(first + std::chrono::days{i});
    for (const auto& p : rec.tvl_series) one.values((p.date - first).count(), 0) = p.tvl_usd;

    auto flags = detect_series_anomalies(one.values.col(0), one.dates, rec.slug, cfg, diag);
    CategoryPanel fixed = repair_series(one, flags, diag);
    ProtocolRecord cleaned{rec.slug, rec.category, {}};
    if (!fixed.categories.empty()) {
      for (const auto& p : rec.tvl_series) cleaned.tvl_series.push_back({p.date, fixed.values((p.date - first).count(), 0)});
    }
    out.push_back(std::move(cleaned));
    if (flags_out) flags_out->insert(flags_out->end(), flags.begin(), flags.end());
  }
  return out;
}

CategoryPanel fill_gaps(const CategoryPanel& panel) {
  CategoryPanel out = panel;
  const Eigen::Index n = out.values.rows();
  for (Eigen::Index j = 0; j < out.values.cols(); ++j) {
    auto col = out.values.col(j);
    Eigen::Index first = -1;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (!std::isnan(col[i])) {
        if (first < 0) first = i;
      } else if (first >= 0) {
        col[i] = col[i - 1];
      }
    }
    if (first < 0) throw DataError("category '" + out.categories[static_cast<std::size_t>(j)] + "' has no observations");
    for (Eigen::Index i = 0; i < first; ++i) col[i] = col[first];
  }
  return out;
}

RawReturns compute_log_returns(const CategoryPanel& panel, double eps) {
  if (panel.dates.size() < 2) throw DataError("need at least two days to form returns");
  const CategoryPanel filled = fill_gaps(panel);
  const Eigen::Index n = filled.values.rows();
  // Scalar std::log on every cell: Eigen's packet log and the scalar tail can differ by an ulp,
  // which would give a constant series nonzero returns.
  const Eigen::ArrayXXd logs = (filled.values.array() + eps).unaryExpr([](double x) { return std::log(x); });
  RawReturns r;
  r.dates.assign(panel.dates.begin() + 1, panel.dates.end());
  r.categories = panel.categories;
  r.values = logs.bottomRows(n - 1) - logs.topRows(n - 1);
  return r;
}

ReturnMatrix winsorize_and_balance(const RawReturns& raw, const WinsorConfig& cfg, Diagnostics* diag) {
  if (!(cfg.level >= 0.0 && cfg.level < 0.5)) throw ValidationError("winsor level must lie in [0, 0.5)");
  const Eigen::Index ncols = raw.values.cols();
  std::pair<double, double> pooled_bounds{0, 0};
  if (cfg.pooled) {
    std::vector<double> all(raw.values.data(), raw.values.data() + raw.values.size());
    pooled_bounds = {stats::quantile(all, cfg.level, cfg.method), stats::quantile(all, 1.0 - cfg.level, cfg.method)};
  }

  ReturnMatrix out;
  out.dates = raw.dates;
  std::vector<Eigen::VectorXd> cols;
  for (Eigen::Index j = 0; j < ncols; ++j) {
    const auto& name = raw.categories[static_cast<std::size_t>(j)];
    Eigen::VectorXd col = raw.values.col(j);
    std::pair<double, double> b = pooled_bounds;
    if (!cfg.pooled) {
      std::vector<double> v(col.data(), col.data() + col.size());
      b = {stats::quantile(v, cfg.level, cfg.method), stats::quantile(v, 1.0 - cfg.level, cfg.method)};
    }
    col = col.cwiseMax(b.first).cwiseMin(b.second);
    const double var = (col.array() - col.mean()).square().mean();
    if (!(var > 0.0)) {
      warn(diag, "category '" + name + "' has zero return variance; dropped");
      out.dropped_categories.push_back(name);
      continue;
    }
    out.categories.push_back(name);
    out.winsor_bounds.push_back(b);
    cols.push_back(std::move(col));
  }
  if (cols.empty()) throw DataError("every category has zero return variance");
  out.returns.resize(raw.values.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) out.returns.col(static_cast<Eigen::Index>(j)) = cols[j];
  return out;
}

void save_anomaly_report(const std::vector<AnomalyFlag>& flags, const std::filesystem::path& path) {
  csv::Writer w;
  w.row({"category", "date", "rules", "classification", "original", "repaired"});
  for (const auto& f : flags) {
    w.row({f.category, format_date(f.date), rules_to_string(f.rule_hits),
           f.classification == AnomalyClass::Technical ? "TECHNICAL" : "PERSISTENT", format_double(f.original_value),
           f.repaired_value ? format_double(*f.repaired_value) : ""});
  }
  w.save(path);
}

void save_returns(const ReturnMatrix& r, const std::filesystem::path& path) {
  std::string dropped;
  for (const auto& d : r.dropped_categories) dropped += (dropped.empty() ? "" : "|") + d;
  ColumnarTable t{r.dates, r.categories, r.returns, {{"dropped", dropped}}};
  save_columnar(path, kReturnsKind, t);
}

ReturnMatrix load_returns(const std::filesystem::path& path) {
  ColumnarTable t = load_columnar(path, kReturnsKind);
  ReturnMatrix r;
  r.dates = std::move(t.dates);
  r.categories = std::move(t.names);
  r.returns = std::move(t.values);
  if (r.returns.hasNaN()) throw DataError(path.string() + ": return matrix has missing cells");
  for (Eigen::Index j = 0; j < r.returns.cols(); ++j) {
    r.winsor_bounds.emplace_back(r.returns.col(j).minCoeff(), r.returns.col(j).maxCoeff());
  }
  const std::string& dropped = t.metadata["dropped"];
  std::size_t pos = 0;
  while (pos < dropped.size()) {
    auto next = dropped.find('|', pos);
    r.dropped_categories.push_back(dropped.substr(pos, next - pos));
    if (next == std::string::npos) break;
    pos = next + 1;
  }
  return r;
}

}  // namespace fragility

#include "fragility/econ.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <cmath>
#include <map>

#include "fragility/columnar.hpp"
#include "fragility/csv.hpp"

namespace fragility {

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
}

Vector realized_vol(const Eigen::Ref<const Vector>& returns, int window, bool annualize, double annualization) {
  if (window < 2) throw ValidationError("realized volatility window must be >= 2");
  const auto n = returns.size();
  Vector out = Vector::Constant(n, kNaN);
  const double scale = annualize ? std::sqrt(annualization) : 1.0;
  for (Eigen::Index t = window - 1; t < n; ++t) {
    const auto seg = returns.segment(t - window + 1, window);
    if (seg.hasNaN()) continue;
    const double m = seg.mean();
    out[t] = scale * std::sqrt((seg.array() - m).square().sum() / (window - 1));
  }
  return out;
}

Vector forward_vol(const Eigen::Ref<const Vector>& growth, int horizon) {
  if (horizon < 2) throw ValidationError("forward volatility horizon must be >= 2");
  const auto n = growth.size();
  Vector out = Vector::Constant(n, kNaN);
  for (Eigen::Index t = 0; t + horizon < n; ++t) {
    const auto seg = growth.segment(t + 1, horizon);
    if (seg.hasNaN()) continue;
    const double m = seg.mean();
    out[t] = std::sqrt((seg.array() - m).square().sum() / (horizon - 1));
  }
  return out;
}

int default_nw_lags(Eigen::Index n) {
  return static_cast<int>(std::floor(4.0 * std::pow(static_cast<double>(n) / 100.0, 2.0 / 9.0)));
}

std::string significance_stars(double p) {
  if (p < 0.01) return "***";
  if (p < 0.05) return "**";
  if (p < 0.10) return "*";
  return "";
}

Matrix white_covariance(const Eigen::Ref<const Vector>& u, const Eigen::Ref<const Matrix>& x) {
  const Matrix xtx_inv = (x.transpose() * x).inverse();
  const Matrix meat = x.transpose() * u.array().square().matrix().asDiagonal() * x;
  return xtx_inv * meat * xtx_inv;
}

RegressionResult ols_hac(const Eigen::Ref<const Vector>& y, const Eigen::Ref<const Matrix>& x,
                         const std::vector<std::string>& names, int nw_lags, StarDistribution star_dist) {
  const auto n = x.rows();
  const auto p = x.cols();
  if (y.size() != n) throw ValidationError("regression: y and X have different row counts");
  if (static_cast<Eigen::Index>(names.size()) != p) throw ValidationError("regression: one name per column required");
  if (n <= p) throw DataError("regression: " + std::to_string(n) + " rows for " + std::to_string(p) + " regressors");
  if (nw_lags < 0) throw ValidationError("Newey-West lag count must be nonnegative");
  if (y.hasNaN() || x.hasNaN()) throw DataError("regression: missing values must be dropped before fitting");

  Eigen::ColPivHouseholderQR<Matrix> qr(x);
  qr.setThreshold(1e-10);
  if (qr.rank() < p) {
    std::string cols;
    for (Eigen::Index k = qr.rank(); k < p; ++k) {
      cols += (cols.empty() ? "" : ", ") + names[static_cast<std::size_t>(qr.colsPermutation().indices()[k])];
    }
    throw DataError("regression design is rank deficient; collinear column(s): " + cols);
  }

  RegressionResult res;
  const Vector beta = qr.solve(y);
  res.residuals = y - x * beta;
  res.n_obs = n;
  res.nw_lags = nw_lags;
  const double tss = (y.array() - y.mean()).square().sum();
  res.r_squared = tss > 0 ? 1.0 - res.residuals.squaredNorm() / tss : 1.0;

  // Bartlett-weighted long-run covariance of the scores x_t u_t.
  const Matrix scores = x.array().colwise() * res.residuals.array();
  Matrix meat = scores.transpose() * scores;
  for (int l = 1; l <= nw_lags && l < n; ++l) {
    const double w = 1.0 - static_cast<double>(l) / (nw_lags + 1.0);
    const Matrix g = scores.bottomRows(n - l).transpose() * scores.topRows(n - l);
    meat += w * (g + g.transpose());
  }
  const Matrix xtx_inv = (x.transpose() * x).inverse();
  res.covariance = xtx_inv * meat * xtx_inv;
  res.covariance = (res.covariance + res.covariance.transpose()) / 2.0;

  const boost::math::students_t tdist(static_cast<double>(n - p));
  for (Eigen::Index k = 0; k < p; ++k) {
    Coefficient c;
    c.name = names[static_cast<std::size_t>(k)];
    c.estimate = beta[k];
    c.std_error = std::sqrt(std::max(res.covariance(k, k), 0.0));
    c.t_stat = c.std_error > 0 ? c.estimate / c.std_error : 0.0;
    if (star_dist == StarDistribution::Normal) {
      c.p_value = std::erfc(std::abs(c.t_stat) / std::sqrt(2.0));
    } else {
      c.p_value = 2.0 * boost::math::cdf(boost::math::complement(tdist, std::abs(c.t_stat)));
    }
    c.stars = significance_stars(c.p_value);
    res.coefficients.push_back(c);
  }
  return res;
}

ControlsInput load_controls(const std::filesystem::path& path) {
  const auto t = csv::read(path);
  const csv::Row expected{"date", "eth_price", "btc_price", "gas_fee"};
  std::vector<std::string> missing;
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < t.header.size(); ++i) col[t.header[i]] = i;
  for (const auto& e : expected) {
    if (!col.contains(e)) missing.push_back(e);
  }
  if (!missing.empty()) {
    std::string m;
    for (const auto& s : missing) m += (m.empty() ? "" : ", ") + s;
    throw DataError(path.string() + ": missing control column(s): " + m);
  }
  ControlsInput c;
  const auto n = static_cast<Eigen::Index>(t.rows.size());
  c.eth_price.resize(n);
  c.btc_price.resize(n);
  c.gas_fee.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& r = t.rows[static_cast<std::size_t>(i)];
    if (r.size() != t.header.size()) throw DataError(path.string() + ": malformed row " + std::to_string(i + 1));
    c.dates.push_back(parse_date(r[col["date"]]));
    if (i > 0 && c.dates.back() <= c.dates[c.dates.size() - 2]) throw DataError(path.string() + ": dates not increasing");
    c.eth_price[i] = parse_double(r[col["eth_price"]], "eth_price");
    c.btc_price[i] = parse_double(r[col["btc_price"]], "btc_price");
    c.gas_fee[i] = parse_double(r[col["gas_fee"]], "gas_fee");
  }
  return c;
}

void save_controls(const ControlsInput& c, const std::filesystem::path& path) {
  csv::Writer w;
  w.row({"date", "eth_price", "btc_price", "gas_fee"});
  for (std::size_t i = 0; i < c.dates.size(); ++i) {
    const auto k = static_cast<Eigen::Index>(i);
    w.row({format_date(c.dates[i]), format_double(c.eth_price[k]), format_double(c.btc_price[k]),
           format_double(c.gas_fee[k])});
  }
  w.save(path);
}

MarketControls build_market_controls(const ControlsInput& in, const CategoryPanel& panel, const EconConfig& cfg) {
  const auto n = static_cast<Eigen::Index>(panel.dates.size());
  std::map<Date, Eigen::Index> where;
  for (std::size_t i = 0; i < in.dates.size(); ++i) where[in.dates[i]] = static_cast<Eigen::Index>(i);

  Vector eth = Vector::Constant(n, kNaN), btc = Vector::Constant(n, kNaN);
  MarketControls mc;
  mc.dates = panel.dates;
  mc.gas_fee = Vector::Constant(n, kNaN);
  for (Eigen::Index i = 0; i < n; ++i) {
    auto it = where.find(panel.dates[static_cast<std::size_t>(i)]);
    if (it == where.end()) continue;
    eth[i] = in.eth_price[it->second];
    btc[i] = in.btc_price[it->second];
    mc.gas_fee[i] = in.gas_fee[it->second];
  }
  auto log_diff = [n](const Vector& level) {
    Vector g = Vector::Constant(n, kNaN);
    for (Eigen::Index i = 1; i < n; ++i) g[i] = std::log(level[i]) - std::log(level[i - 1]);
    return g;
  };
  const Vector eth_ret = log_diff(eth);
  mc.btc_return = log_diff(btc);
  mc.eth_vol_30d = realized_vol(eth_ret, cfg.vol_window, true, cfg.annualization);

  Vector aggregate(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double s = 0;
    bool any = false;
    for (Eigen::Index j = 0; j < panel.values.cols(); ++j) {
      if (!std::isnan(panel.values(i, j))) {
        s += panel.values(i, j);
        any = true;
      }
    }
    aggregate[i] = any ? s : kNaN;
  }
  mc.tvl_growth = log_diff(aggregate);
  mc.tvl_vol_30d = realized_vol(mc.tvl_growth, cfg.vol_window, false);
  return mc;
}

namespace {

struct Design {
  std::vector<Vector> columns;
  std::vector<std::string> names;
};

RegressionResult fit_aligned(const std::string& spec, const std::string& dep_name, const Vector& y, const Design& d,
                             const std::vector<Date>& dates, int lags, bool lags_from_n, StarDistribution stars,
                             Diagnostics* diag) {
  std::vector<Eigen::Index> rows;
  std::string dropped;
  int n_dropped = 0;
  for (Eigen::Index t = 0; t < y.size(); ++t) {
    bool ok = !std::isnan(y[t]);
    for (const auto& c : d.columns) ok = ok && !std::isnan(c[t]);
    if (ok) {
      rows.push_back(t);
    } else {
      ++n_dropped;
      if (n_dropped <= 5) dropped += (dropped.empty() ? "" : ", ") + format_date(dates[static_cast<std::size_t>(t)]);
    }
  }
  if (n_dropped) {
    warn(diag, spec + ": dropped " + std::to_string(n_dropped) + " unaligned row(s) (" + dropped +
                   (n_dropped > 5 ? ", ..." : "") + ")");
  }
  const auto n = static_cast<Eigen::Index>(rows.size());
  Vector yy(n);
  Matrix xx(n, static_cast<Eigen::Index>(d.columns.size()) + 1);
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto t = rows[static_cast<std::size_t>(r)];
    yy[r] = y[t];
    xx(r, 0) = 1.0;
    for (std::size_t c = 0; c < d.columns.size(); ++c) xx(r, static_cast<Eigen::Index>(c) + 1) = d.columns[c][t];
  }
  std::vector<std::string> names{"const"};
  names.insert(names.end(), d.names.begin(), d.names.end());
  auto res = ols_hac(yy, xx, names, lags_from_n ? default_nw_lags(n) : lags, stars);
  res.spec = spec;
  res.dependent = dep_name;
  return res;
}

Vector lag1(const Vector& v) {
  Vector out = Vector::Constant(v.size(), kNaN);
  if (v.size() > 1) out.tail(v.size() - 1) = v.head(v.size() - 1);
  return out;
}

}  // namespace

std::vector<RegressionResult> run_volatility_regressions(const CfiSeries& cfi, const MarketControls& mc,
                                                    const EconConfig& cfg, Diagnostics* diag) {
  std::map<Date, Eigen::Index> day;
  for (std::size_t i = 0; i < mc.dates.size(); ++i) day[mc.dates[i]] = static_cast<Eigen::Index>(i);

  const auto n = static_cast<Eigen::Index>(cfi.size());
  std::vector<Date> dates;
  Vector cfi_v(n);
  auto sample = [&](const Vector& daily) {
    Vector out(n);
    for (Eigen::Index t = 0; t < n; ++t) {
      auto it = day.find(cfi[static_cast<std::size_t>(t)].window_end);
      out[t] = it == day.end() ? kNaN : daily[it->second];
    }
    return out;
  };
  for (Eigen::Index t = 0; t < n; ++t) {
    dates.push_back(cfi[static_cast<std::size_t>(t)].window_end);
    cfi_v[t] = cfi[static_cast<std::size_t>(t)].cfi;
  }
  const Vector eth_vol = sample(mc.eth_vol_30d);
  const Vector btc = sample(mc.btc_return);
  const Vector gas = sample(mc.gas_fee);
  const Vector tvl_vol = sample(mc.tvl_vol_30d);

  std::vector<RegressionResult> out;
  // (1) ETH volatility; its own control enters at the previous observation.
  out.push_back(fit_aligned("(1)", "eth_vol_30d", eth_vol,
                            {{cfi_v, lag1(eth_vol), btc, gas}, {"cfi", "eth_vol_30d_lag", "btc_return", "gas_fee"}},
                            dates, 0, true, cfg.stars, diag));
  // (2) TVL volatility; this spec carries no BTC return.
  out.push_back(fit_aligned("(2)", "tvl_vol_30d", tvl_vol, {{cfi_v, eth_vol, gas}, {"cfi", "eth_vol_30d", "gas_fee"}},
                            dates, 0, true, cfg.stars, diag));
  for (int h : cfg.horizons) {
    const Vector v = sample(forward_vol(mc.tvl_growth, h));
    out.push_back(fit_aligned("fwd_h" + std::to_string(h), "fwd_tvl_vol_" + std::to_string(h), v,
                              {{cfi_v, lag1(v), eth_vol, btc, gas},
                               {"cfi", "fwd_vol_lag", "eth_vol_30d", "btc_return", "gas_fee"}},
                              dates, 2 * h, false, cfg.stars, diag));
  }
  return out;
}

void save_regressions(const std::vector<RegressionResult>& results, const std::filesystem::path& path) {
  csv::Writer w;
  w.row({"spec", "dependent", "term", "coefficient", "std_error", "t_stat", "p_value", "stars", "n_obs", "r_squared",
         "nw_lags"});
  for (const auto& r : results) {
    for (const auto& c : r.coefficients) {
      w.row({r.spec, r.dependent, c.name, format_double(c.estimate), format_double(c.std_error), format_double(c.t_stat),
             format_double(c.p_value), c.stars, std::to_string(r.n_obs), format_double(r.r_squared),
             std::to_string(r.nw_lags)});
    }
  }
  w.save(path);
}

}  // namespace fragility

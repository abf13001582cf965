#include "fragility/cfi.hpp"

#include <nlohmann/json.hpp>

#include "fragility/csv.hpp"
#include "fragility/spectral.hpp"
#include "fragility/stats.hpp"

namespace fragility {

void RollingConfig::validate() const {
  if (window_length < 30) throw ValidationError("rolling window length must be >= 30 days");
  if (step < 1) throw ValidationError("rolling step must be >= 1 day");
  if (step > window_length) throw ValidationError("rolling step must not exceed the window length");
}

std::vector<Window> rolling_windows(const std::vector<Date>& dates, const RollingConfig& cfg, Diagnostics* diag) {
  cfg.validate();
  std::vector<Window> out;
  const auto rows = static_cast<Eigen::Index>(dates.size());
  if (rows < cfg.window_length) {
    warn(diag, "only " + std::to_string(rows) + " return rows; no window of length " +
                   std::to_string(cfg.window_length) + " fits");
    return out;
  }
  for (Eigen::Index end = cfg.window_length - 1; end < rows; end += cfg.step) {
    out.push_back({dates[static_cast<std::size_t>(end)], end - cfg.window_length + 1, end});
  }
  return out;
}

CfiModel fit_cfi_model(const std::vector<FragilityMetrics>& series) {
  if (series.size() < 8) {
    throw ValidationError("CFI fit needs at least 8 windows, got " + std::to_string(series.size()));
  }
  const auto t = static_cast<Eigen::Index>(series.size());
  Eigen::MatrixX4d x(t, 4);
  for (Eigen::Index i = 0; i < t; ++i) x.row(i) = series[static_cast<std::size_t>(i)].as_vector().transpose();

  CfiModel model;
  for (int k = 0; k < 4; ++k) {
    model.metric_means[k] = x.col(k).mean();
    model.metric_stds[k] = stats::sample_std(x.col(k));
    if (!(model.metric_stds[k] > 0.0)) {
      throw DataError(std::string("metric '") + kMetricNames[k] + "' has zero variance; CFI undefined");
    }
  }
  const Eigen::MatrixX4d z =
      (x.rowwise() - model.metric_means.transpose()).array().rowwise() / model.metric_stds.transpose().array();
  const Eigen::Matrix4d cov = (z.transpose() * z) / static_cast<double>(t - 1);
  const auto es = symmetric_eigen(cov);
  const Eigen::Vector4d evals = es.eigenvalues().reverse();
  if (evals[0] - evals[1] < 1e-12) throw DataError("leading principal component is not unique (eigengap < 1e-12)");

  Eigen::Vector4d w = es.eigenvectors().col(3);
  w.normalize();
  const double pivot = w[0] != 0.0 ? w[0] : w[1];
  model.orientation = pivot < 0.0 ? -1 : 1;
  model.loading = static_cast<double>(model.orientation) * w;
  model.eigenvalues = evals;
  model.pc1_variance_share = evals[0] / evals.sum();

  const Eigen::VectorXd raw = z * model.loading;
  model.output_mean = raw.mean();
  model.output_std = stats::sample_std(raw);
  return model;
}

CfiSeries apply_cfi_series(const CfiModel& model, const std::vector<FragilityMetrics>& series) {
  CfiSeries out;
  out.reserve(series.size());
  for (const auto& m : series) {
    const auto v = apply_cfi_model(model, m);
    out.push_back({m.window_end, v.standardized, v.raw, m});
  }
  return out;
}

CfiSeries expanding_cfi_series(const std::vector<FragilityMetrics>& series, std::size_t min_history) {
  CfiSeries out;
  min_history = std::max<std::size_t>(min_history, 8);
  for (std::size_t t = min_history - 1; t < series.size(); ++t) {
    const std::vector<FragilityMetrics> head(series.begin(), series.begin() + static_cast<std::ptrdiff_t>(t + 1));
    const CfiModel model = fit_cfi_model(head);
    const auto v = apply_cfi_model(model, series[t]);
    out.push_back({series[t].window_end, v.standardized, v.raw, series[t]});
  }
  return out;
}

void save_cfi_series(const CfiSeries& series, const std::filesystem::path& path) {
  csv::Writer w;
  w.row({"window_end", "cfi_standardized", "cfi_raw", "avg_strength", "lambda_max", "strong_edge_density",
         "eigen_entropy"});
  for (const auto& p : series) {
    w.row({format_date(p.window_end), format_double(p.cfi), format_double(p.raw), format_double(p.metrics.avg_strength),
           format_double(p.metrics.lambda_max), format_double(p.metrics.strong_edge_density),
           format_double(p.metrics.eigen_entropy)});
  }
  w.save(path);
}

CfiSeries load_cfi_series(const std::filesystem::path& path) {
  const auto t = csv::read(path);
  if (t.header.size() != 7 || t.header[0] != "window_end" || t.header[1] != "cfi_standardized") {
    throw DataError(path.string() + ": unexpected CFI series header");
  }
  CfiSeries out;
  for (const auto& r : t.rows) {
    if (r.size() != 7) throw DataError(path.string() + ": malformed CFI row");
    CfiPoint p;
    p.window_end = parse_date(r[0]);
    p.cfi = parse_double(r[1], "cfi_standardized");
    p.raw = parse_double(r[2], "cfi_raw");
    p.metrics.window_end = p.window_end;
    p.metrics.avg_strength = parse_double(r[3], "avg_strength");
    p.metrics.lambda_max = parse_double(r[4], "lambda_max");
    p.metrics.strong_edge_density = parse_double(r[5], "strong_edge_density");
    p.metrics.eigen_entropy = parse_double(r[6], "eigen_entropy");
    out.push_back(p);
  }
  return out;
}

namespace {

nlohmann::json vec4(const Eigen::Vector4d& v) { return nlohmann::json::array({v[0], v[1], v[2], v[3]}); }

Eigen::Vector4d read_vec4(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || !j[key].is_array() || j[key].size() != 4) {
    throw DataError(std::string("CFI model: field '") + key + "' must be an array of 4 numbers");
  }
  Eigen::Vector4d v;
  for (int k = 0; k < 4; ++k) v[k] = j[key][static_cast<std::size_t>(k)].get<double>();
  return v;
}

}  // namespace

std::string serialize_model(const CfiModel& m) {
  nlohmann::ordered_json j;
  j["schema_version"] = kModelSchemaVersion;
  j["metrics"] = {kMetricNames[0], kMetricNames[1], kMetricNames[2], kMetricNames[3]};
  j["metric_means"] = vec4(m.metric_means);
  j["metric_stds"] = vec4(m.metric_stds);
  j["loading"] = vec4(m.loading);
  j["orientation"] = m.orientation;
  j["output_mean"] = m.output_mean;
  j["output_std"] = m.output_std;
  j["pc1_variance_share"] = m.pc1_variance_share;
  j["eigenvalues"] = vec4(m.eigenvalues);
  return j.dump(2) + "\n";
}

CfiModel parse_model(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(std::string("CFI model is not valid JSON: ") + e.what());
  }
  if (!j.contains("schema_version") || j["schema_version"] != kModelSchemaVersion) {
    throw DataError("CFI model schema version mismatch (expected " + std::to_string(kModelSchemaVersion) + ")");
  }
  CfiModel m;
  try {
    m.metric_means = read_vec4(j, "metric_means");
    m.metric_stds = read_vec4(j, "metric_stds");
    m.loading = read_vec4(j, "loading");
    m.eigenvalues = read_vec4(j, "eigenvalues");
    m.orientation = j.at("orientation").get<int>();
    m.output_mean = j.at("output_mean").get<double>();
    m.output_std = j.at("output_std").get<double>();
    m.pc1_variance_share = j.at("pc1_variance_share").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("CFI model: ") + e.what());
  }
  if ((m.metric_stds.array() <= 0.0).any() || !(m.output_std > 0.0)) {
    throw DataError("CFI model: standard deviations must be positive");
  }
  return m;
}

void save_model(const CfiModel& model, const std::filesystem::path& path) {
  csv::write_file_atomic(path, serialize_model(model));
}

CfiModel load_model(const std::filesystem::path& path) { return parse_model(csv::read_file(path)); }

}  // namespace fragility

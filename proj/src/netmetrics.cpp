#include "fragility/netmetrics.hpp"

#include "fragility/csv.hpp"

namespace fragility {

std::string to_string(CorrelationSource s) {
  switch (s) {
    case CorrelationSource::Shrinkage: return "shrinkage";
    case CorrelationSource::Pearson: return "pearson";
    case CorrelationSource::GlassoPartial: return "glasso_partial";
  }
  return "?";
}

CorrelationSource correlation_source_from_string(const std::string& s) {
  if (s == "shrinkage") return CorrelationSource::Shrinkage;
  if (s == "pearson") return CorrelationSource::Pearson;
  if (s == "glasso_partial") return CorrelationSource::GlassoPartial;
  throw ValidationError("unknown estimator '" + s + "' (expected shrinkage|pearson|glasso_partial)");
}

std::string to_string(SpectrumSource s) { return s == SpectrumSource::Correlation ? "correlation" : "adjacency"; }

SpectrumSource spectrum_source_from_string(const std::string& s) {
  if (s == "correlation") return SpectrumSource::Correlation;
  if (s == "adjacency") return SpectrumSource::Adjacency;
  throw ValidationError("unknown spectrum source '" + s + "' (expected correlation|adjacency)");
}

NetworkSnapshot build_adjacency(const CorrelationMatrix<double>& c, std::vector<std::string> node_names) {
  NetworkSnapshot net;
  net.correlation = c.matrix;
  net.adjacency = adjacency_from(c.matrix);
  net.source = c.source;
  net.window_end = c.window_end;
  if (node_names.empty()) {
    for (Eigen::Index i = 0; i < c.matrix.rows(); ++i) node_names.push_back("n" + std::to_string(i));
  }
  net.node_names = std::move(node_names);
  return net;
}

FragilityMetrics compute_metrics(const NetworkSnapshot& net, const MetricOptions& opt) {
  const auto n = net.size();
  if (n < 2) throw ValidationError("fragility metrics need at least 2 nodes");
  FragilityMetrics m;
  m.window_end = net.window_end;
  m.n_nodes = n;
  m.avg_strength = average_strength(net.adjacency, opt.frozen_n);
  const Eigen::VectorXd adj_spectrum = symmetric_eigenvalues(net.adjacency);
  m.lambda_max = adj_spectrum.maxCoeff();
  m.strong_edge_density = strong_edge_density(net.correlation, opt.rho, opt.frozen_n);
  if (opt.spectrum == SpectrumSource::Correlation) {
    m.eigen_entropy = spectral_entropy(symmetric_eigenvalues(net.correlation), opt.frozen_n);
  } else {
    m.eigen_entropy = spectral_entropy(adj_spectrum, opt.frozen_n);
  }
  return m;
}

NetworkSnapshot threshold_network(const NetworkSnapshot& net, double rho) {
  NetworkSnapshot out = net;
  out.adjacency = (net.correlation.array().abs() > rho).select(net.adjacency, 0.0);
  out.adjacency.diagonal().setZero();
  return out;
}

NetworkSnapshot remove_nodes(const NetworkSnapshot& net, const std::vector<Eigen::Index>& indices) {
  const auto n = net.size();
  std::vector<bool> drop(static_cast<std::size_t>(n), false);
  for (auto i : indices) {
    if (i < 0 || i >= n) throw ValidationError("node index " + std::to_string(i) + " out of range");
    drop[static_cast<std::size_t>(i)] = true;
  }
  std::vector<Eigen::Index> keep;
  NetworkSnapshot out;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!drop[static_cast<std::size_t>(i)]) {
      keep.push_back(i);
      out.node_names.push_back(net.node_names[static_cast<std::size_t>(i)]);
    }
  }
  out.adjacency = net.adjacency(keep, keep);
  out.correlation = net.correlation(keep, keep);
  out.source = net.source;
  out.window_end = net.window_end;
  return out;
}

void save_metrics_series(const std::vector<FragilityMetrics>& series, const std::filesystem::path& path) {
  csv::Writer w;
  w.row({"window_end", "n_nodes", "avg_strength", "lambda_max", "strong_edge_density", "eigen_entropy"});
  for (const auto& m : series) {
    w.row({format_date(m.window_end), std::to_string(m.n_nodes), format_double(m.avg_strength),
           format_double(m.lambda_max), format_double(m.strong_edge_density), format_double(m.eigen_entropy)});
  }
  w.save(path);
}

std::vector<FragilityMetrics> load_metrics_series(const std::filesystem::path& path) {
  const auto t = csv::read(path);
  const csv::Row expected{"window_end", "n_nodes", "avg_strength", "lambda_max", "strong_edge_density", "eigen_entropy"};
  if (t.header != expected) throw DataError(path.string() + ": unexpected metrics header");
  std::vector<FragilityMetrics> out;
  for (const auto& r : t.rows) {
    if (r.size() != expected.size()) throw DataError(path.string() + ": malformed metrics row");
    FragilityMetrics m;
    m.window_end = parse_date(r[0]);
    m.n_nodes = static_cast<Eigen::Index>(parse_double(r[1], "n_nodes"));
    m.avg_strength = parse_double(r[2], "avg_strength");
    m.lambda_max = parse_double(r[3], "lambda_max");
    m.strong_edge_density = parse_double(r[4], "strong_edge_density");
    m.eigen_entropy = parse_double(r[5], "eigen_entropy");
    out.push_back(m);
  }
  return out;
}

void save_matrix_dump(const Matrix& m, const std::vector<std::string>& names, const std::filesystem::path& path) {
  csv::Writer w;
  csv::Row header{""};
  header.insert(header.end(), names.begin(), names.end());
  w.row(header);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    csv::Row r{names[static_cast<std::size_t>(i)]};
    for (Eigen::Index j = 0; j < m.cols(); ++j) r.push_back(format_double17(m(i, j)));
    w.row(r);
  }
  w.save(path);
}

Matrix load_matrix_dump(const std::filesystem::path& path, std::vector<std::string>* names) {
  const auto t = csv::read(path);
  const auto n = static_cast<Eigen::Index>(t.header.size()) - 1;
  if (n < 1 || static_cast<Eigen::Index>(t.rows.size()) != n) throw DataError(path.string() + ": matrix dump is not square");
  Matrix m(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& r = t.rows[static_cast<std::size_t>(i)];
    if (static_cast<Eigen::Index>(r.size()) != n + 1) throw DataError(path.string() + ": ragged matrix row");
    for (Eigen::Index j = 0; j < n; ++j) m(i, j) = parse_double(r[static_cast<std::size_t>(j + 1)], path.string());
  }
  if (names) names->assign(t.header.begin() + 1, t.header.end());
  return m;
}

void save_network_export(const NetworkSnapshot& net, const Eigen::VectorXd& node_tvl,
                         const std::filesystem::path& edges_path, const std::filesystem::path& nodes_path) {
  csv::Writer edges;
  edges.row({"source", "target", "signed_correlation", "abs_weight"});
  for (Eigen::Index i = 0; i < net.size(); ++i) {
    for (Eigen::Index j = i + 1; j < net.size(); ++j) {
      if (net.adjacency(i, j) == 0.0) continue;
      edges.row({net.node_names[static_cast<std::size_t>(i)], net.node_names[static_cast<std::size_t>(j)],
                 format_double(net.correlation(i, j)), format_double(net.adjacency(i, j))});
    }
  }
  edges.save(edges_path);

  const Eigen::VectorXd strength = node_strengths(net);
  csv::Writer nodes;
  nodes.row({"name", "strength", "tvl"});
  for (Eigen::Index i = 0; i < net.size(); ++i) {
    nodes.row({net.node_names[static_cast<std::size_t>(i)], format_double(strength[i]),
               i < node_tvl.size() ? format_double(node_tvl[i]) : ""});
  }
  nodes.save(nodes_path);
}

}  // namespace fragility

#pragma once

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "fragility/common.hpp"
#include "fragility/estimators.hpp"
#include "fragility/spectral.hpp"

namespace fragility {

/// Weighted network of one window: A_ij = |C_ij| off the diagonal, A_ii = 0.
struct NetworkSnapshot {
  Matrix adjacency;
  Matrix correlation;
  CorrelationSource source = CorrelationSource::Shrinkage;
  std::vector<std::string> node_names;
  Date window_end{};

  Eigen::Index size() const { return adjacency.rows(); }
};

enum class SpectrumSource { Correlation, Adjacency };

struct FragilityMetrics {
  double avg_strength = 0.0;
  double lambda_max = 0.0;
  double strong_edge_density = 0.0;
  double eigen_entropy = 0.0;
  Date window_end{};
  Eigen::Index n_nodes = 0;

  Eigen::Vector4d as_vector() const { return {avg_strength, lambda_max, strong_edge_density, eigen_entropy}; }
};

inline constexpr const char* kMetricNames[4] = {"avg_strength", "lambda_max", "strong_edge_density", "eigen_entropy"};

struct MetricOptions {
  double rho = 0.3;
  SpectrumSource spectrum = SpectrumSource::Correlation;
  /// When > 0, normalise by this node count instead of the actual one (sensitivity mode for
  /// counterfactual networks).
  Eigen::Index frozen_n = 0;
};

// -- expression-level metric kernels ------------------------------------------------------

template <typename Derived>
Matrix adjacency_from(const Eigen::MatrixBase<Derived>& c) {
  Matrix a = c.cwiseAbs();
  a.diagonal().setZero();
  return a;
}

/// (1/N) sum_i sum_{j != i} A_ij.
template <typename Derived>
double average_strength(const Eigen::MatrixBase<Derived>& a, Eigen::Index n_norm = 0) {
  const auto n = n_norm > 0 ? n_norm : a.rows();
  return (a.sum() - a.diagonal().sum()) / static_cast<double>(n);
}

/// Fraction of ordered pairs i != j with |C_ij| > rho.
template <typename Derived>
double strong_edge_density(const Eigen::MatrixBase<Derived>& c, double rho, Eigen::Index n_norm = 0) {
  const auto n = c.rows();
  const auto nn = n_norm > 0 ? n_norm : n;
  const auto above = (c.array().abs() > rho).count() - (c.diagonal().array().abs() > rho).count();
  return static_cast<double>(above) / static_cast<double>(nn * (nn - 1));
}

/// Normalised Shannon entropy of a spectrum. Negative eigenvalues (rounding on a PSD matrix, or
/// a genuinely indefinite input) are clipped at zero before normalising; 0 log 0 := 0.
template <typename Derived>
double spectral_entropy(const Eigen::MatrixBase<Derived>& eigenvalues, Eigen::Index n_norm = 0) {
  const auto n = n_norm > 0 ? n_norm : eigenvalues.size();
  const Eigen::ArrayXd lam = eigenvalues.derived().array().max(0.0);
  const double total = lam.sum();
  if (!(total > 0.0)) throw DataError("eigenvalue entropy undefined: spectrum sums to zero");
  double h = 0.0;
  for (Eigen::Index k = 0; k < lam.size(); ++k) {
    const double p = lam[k] / total;
    if (p > 0.0) h -= p * std::log(p);
  }
  return h / std::log(static_cast<double>(n));
}

// -- snapshot-level operations ------------------------------------------------------------

NetworkSnapshot build_adjacency(const CorrelationMatrix<double>& c, std::vector<std::string> node_names = {});

FragilityMetrics compute_metrics(const NetworkSnapshot& net, const MetricOptions& opt = {});

/// Zero every edge with |C_ij| <= rho; nodes are kept.
NetworkSnapshot threshold_network(const NetworkSnapshot& net, double rho);

/// Row sums of A.
inline Eigen::VectorXd node_strengths(const NetworkSnapshot& net) { return net.adjacency.rowwise().sum(); }

/// Delete the given node indices from A, C and the names.
NetworkSnapshot remove_nodes(const NetworkSnapshot& net, const std::vector<Eigen::Index>& indices);

std::string to_string(SpectrumSource s);
SpectrumSource spectrum_source_from_string(const std::string& s);

// -- exports ------------------------------------------------------------------------------

void save_metrics_series(const std::vector<FragilityMetrics>& series, const std::filesystem::path& path);
std::vector<FragilityMetrics> load_metrics_series(const std::filesystem::path& path);

/// Square CSV with a category header row and column, 17 significant digits.
void save_matrix_dump(const Matrix& m, const std::vector<std::string>& names, const std::filesystem::path& path);
Matrix load_matrix_dump(const std::filesystem::path& path, std::vector<std::string>* names = nullptr);

/// Edge list (source, target, signed_correlation, abs_weight) for nonzero edges, plus a node
/// list (name, strength, tvl).
void save_network_export(const NetworkSnapshot& net, const Eigen::VectorXd& node_tvl,
                         const std::filesystem::path& edges_path, const std::filesystem::path& nodes_path);

}  // namespace fragility
